"""MSE-optimal bandwidth selection for the local-linear cutoff estimator.

Plug-in recipe: a Silverman-style pilot band estimates the running-variable
density and conditional outcome variance at the cutoff; a global cubic with
an intercept shift seeds side-specific quadratic fits whose curvatures,
regularized by their own sampling noise, enter the final fifth-root
formula with the triangular-kernel constant 3.4375.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohorts import Cohort, Outcome
from .errors import DegenerateDensity, ModfrdError, TooFewUnits

PILOT_CONSTANT = 1.84
CURVATURE_PILOT_CONSTANT = 3.56
REGULARIZATION_CONSTANT = 2160.0
TRIANGULAR_CONSTANT = 3.4375
MIN_SIDE_UNITS = 100


class _DegenerateVariance(ModfrdError):
    """Zero conditional variance at the cutoff; no usable bandwidth."""


@dataclass(frozen=True)
class BandwidthReport:
    """Selected bandwidth plus the plug-in quantities behind it."""

    h_star: float
    pilot_h: float
    density_at_cutoff: float
    cond_variance: float
    curvature_above: float
    curvature_below: float
    regularization: float


def _polyfit(s: np.ndarray, y: np.ndarray, degree: int, extra: np.ndarray | None = None):
    cols = [s**p for p in range(degree + 1)]
    if extra is not None:
        cols.insert(1, extra)
    design = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


def _ik_core(s: np.ndarray, y: np.ndarray, threshold: float) -> BandwidthReport:
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = s.shape[0]
    above = s >= threshold
    n_above = int(above.sum())
    n_below = n - n_above
    if min(n_above, n_below) < MIN_SIDE_UNITS:
        raise TooFewUnits(
            f"{n_below} below / {n_above} above the cutoff; need {MIN_SIDE_UNITS} per side"
        )

    sigma_s = float(s.std(ddof=1))
    h1 = PILOT_CONSTANT * sigma_s * n ** (-0.2)
    if h1 <= 0.0:
        raise DegenerateDensity("running variable is constant")

    near_below = (s >= threshold - h1) & ~above
    near_above = (s <= threshold + h1) & above
    n1_below = int(near_below.sum())
    n1_above = int(near_above.sum())
    if n1_below == 0 or n1_above == 0:
        raise DegenerateDensity("no units inside the pilot band on one side")
    density = (n1_below + n1_above) / (2.0 * n * h1)
    if density < 1e-12:
        raise DegenerateDensity("estimated density at the cutoff is zero")

    dev_below = y[near_below] - y[near_below].mean()
    dev_above = y[near_above] - y[near_above].mean()
    cond_var = float((np.sum(dev_below**2) + np.sum(dev_above**2)) / (n1_below + n1_above))
    if cond_var <= 0.0:
        raise _DegenerateVariance("outcome has no variation inside the pilot band")

    # Curvature pilot: global cubic in (S - t) with an intercept shift at t.
    sc = s - threshold
    cubic = _polyfit(sc, y, 3, extra=above.astype(np.float64))
    third_deriv = 6.0 * float(cubic[4])

    def side_curvature(side_mask, n_side):
        denom = max(third_deriv**2, 1e-12)
        h2 = CURVATURE_PILOT_CONSTANT * (cond_var / (density * denom)) ** (1.0 / 7.0) * n_side ** (
            -1.0 / 7.0
        )
        span = np.abs(sc[side_mask])
        h2 = min(h2, float(span.max()))
        local = side_mask & (np.abs(sc) <= h2)
        if int(local.sum()) < 4:
            local = side_mask
            h2 = float(span.max())
        quad = _polyfit(sc[local], y[local], 2)
        curvature = 2.0 * float(quad[2])
        reg = REGULARIZATION_CONSTANT * cond_var / (int(local.sum()) * h2**4)
        return curvature, reg

    curv_above, reg_above = side_curvature(above, n_above)
    curv_below, reg_below = side_curvature(~above, n_below)

    denom = density * ((curv_above - curv_below) ** 2 + reg_above + reg_below)
    h_star = TRIANGULAR_CONSTANT * (cond_var / denom) ** 0.2 * n ** (-0.2)

    return BandwidthReport(
        h_star=float(h_star),
        pilot_h=float(h1),
        density_at_cutoff=float(density),
        cond_variance=cond_var,
        curvature_above=curv_above,
        curvature_below=curv_below,
        regularization=float(reg_above + reg_below),
    )


def ik_bandwidth(
    units: Cohort,
    threshold: float,
    outcome: Outcome | None = None,
    values: np.ndarray | None = None,
    period: str = "followup",
) -> BandwidthReport:
    """Plug-in MSE-optimal bandwidth for one cohort and outcome.

    Pass either an outcome kind or an explicit value array (used for the
    first-stage bandwidth, where treatment plays the outcome role).
    """
    if (outcome is None) == (values is None):
        raise ValueError("pass exactly one of outcome or values")
    y = units.outcome_values(outcome, period) if values is None else values
    return _ik_core(units.running_s, y, threshold)


def bandwidth_for_cell(units: Cohort, threshold: float, outcome: Outcome) -> float:
    """Bandwidth for a fuzzy cell: minimum over reduced form and first stage.

    A sharp design has no first-stage variation inside the pilot band; the
    outcome bandwidth is returned alone in that case.
    """
    outcome_h = ik_bandwidth(units, threshold, outcome=outcome).h_star
    try:
        first_stage_h = ik_bandwidth(
            units, threshold, values=units.treated.astype(np.float64)
        ).h_star
    except _DegenerateVariance:
        return outcome_h
    return min(outcome_h, first_stage_h)
