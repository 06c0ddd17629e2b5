"""Local-linear fuzzy regression-discontinuity estimation.

The cutoff effect is the coefficient on instrumented treatment in a
kernel-weighted two-stage least-squares fit: the cutoff-side indicator D
instruments treatment X, with linear running-variable terms (S - t) and
D*(S - t) on both stages. Standard errors are HC1-robust; confidence
intervals are normal-approximation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .cohorts import Cohort, Outcome
from .errors import (
    DegenerateDenominator,
    SingularDesign,
    TooFewUnits,
    WeakInstrument,
)

MIN_SIDE_UNITS = 50
MIN_FIRST_STAGE_JUMP = 0.01
_SINGULAR_RTOL = 1e-10
Z95 = 1.96


class KernelShape(enum.Enum):
    TRIANGULAR = "triangular"


@dataclass(frozen=True)
class KernelSpec:
    """Triangular weighting kernel around a cutoff."""

    bandwidth_h: float
    threshold_t: float
    shape: KernelShape = KernelShape.TRIANGULAR

    def __post_init__(self):
        if self.bandwidth_h <= 0:
            raise ValueError("bandwidth_h must be positive")
        if self.shape is not KernelShape.TRIANGULAR:
            raise ValueError("only the triangular kernel is supported")


def triangular_weight(s, kernel: KernelSpec):
    """Weight declining linearly from 1 at the cutoff to 0 at distance h."""
    z = np.abs(np.asarray(s, dtype=np.float64) - kernel.threshold_t) / kernel.bandwidth_h
    w = np.where(z < 1.0, 1.0 - z, 0.0)
    return float(w) if np.isscalar(s) else w


@dataclass(frozen=True)
class EstimateResult:
    """One fuzzy-RD estimate with inference and first-stage audit fields."""

    latec: float
    se: float
    ci95: tuple
    standardized: float
    standardized_ci95: tuple
    itt: float
    itt_d: float
    n_effective: int
    bandwidth_h: float
    first_stage_f: float
    outcome: Outcome
    period: str = "followup"
    is_placebo: bool = False
    degenerate: bool = False

    def significant(self, alpha: float = 0.05) -> bool:
        lo, hi = self.ci_at(alpha)
        return not (lo <= 0.0 <= hi)

    def ci_at(self, alpha: float) -> tuple:
        if abs(alpha - 0.05) < 1e-12:
            z = Z95
        else:
            from scipy.stats import norm

            z = float(norm.ppf(1.0 - alpha / 2.0))
        return (self.latec - z * self.se, self.latec + z * self.se)


def _design(cohort: Cohort, kernel: KernelSpec, outcome: Outcome, period: str):
    s = cohort.running_s - kernel.threshold_t
    w = triangular_weight(cohort.running_s, kernel)
    mask = w > 0.0
    s = s[mask]
    w = w[mask]
    d = (s >= 0.0).astype(np.float64)
    x = cohort.treated[mask].astype(np.float64)
    y = cohort.outcome_values(outcome, period)[mask]
    n_above = int(d.sum())
    n_below = int(d.shape[0] - n_above)
    if min(n_above, n_below) < MIN_SIDE_UNITS:
        raise TooFewUnits(
            f"{n_below} below / {n_above} above the cutoff inside the bandwidth; need {MIN_SIDE_UNITS}"
        )
    sw = np.sqrt(w)
    z_mat = np.column_stack([np.ones_like(s), d, s, d * s]) * sw[:, None]
    return s, w, sw, d, x, y, z_mat


def _check_conditioning(mat: np.ndarray, what: str) -> None:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[0] <= 0.0 or sv[-1] < _SINGULAR_RTOL * sv[0]:
        raise SingularDesign(f"{what} is numerically collinear")


def _hc1_cov(design: np.ndarray, resid: np.ndarray) -> np.ndarray:
    n, k = design.shape
    bread = np.linalg.pinv(design.T @ design)
    meat = (design * resid[:, None] ** 2).T @ design
    return bread @ meat @ bread * (n / (n - k))


def estimate_latec(
    units: Cohort,
    kernel: KernelSpec,
    outcome: Outcome,
    period: str = "followup",
    is_placebo: bool = False,
) -> EstimateResult:
    """Kernel-weighted 2SLS cutoff effect with HC1 inference.

    Raises TooFewUnits, WeakInstrument, or SingularDesign rather than
    returning unusable numbers.
    """
    s, w, sw, d, x, y, z_mat = _design(units, kernel, outcome, period)
    n = s.shape[0]

    _check_conditioning(z_mat, "weighted instrument matrix")

    xw = x * sw
    yw = y * sw
    gamma, *_ = np.linalg.lstsq(z_mat, xw, rcond=None)
    itt_d = float(gamma[1])
    fs_resid = xw - z_mat @ gamma
    fs_cov = _hc1_cov(z_mat, fs_resid)
    fs_se = float(np.sqrt(max(fs_cov[1, 1], 0.0)))
    first_stage_f = float((itt_d / fs_se) ** 2) if fs_se > 0 else float("inf")

    if abs(itt_d) < MIN_FIRST_STAGE_JUMP:
        raise WeakInstrument(f"first-stage jump {itt_d:.4g} below {MIN_FIRST_STAGE_JUMP}")

    delta, *_ = np.linalg.lstsq(z_mat, yw, rcond=None)
    itt = float(delta[1])

    # Second stage on projected treatment; residuals use actual treatment.
    q, _r = np.linalg.qr(z_mat)
    xr_w = np.column_stack([z_mat[:, 0], xw, z_mat[:, 2], z_mat[:, 3]])
    xhat_w = xr_w.copy()
    xhat_w[:, 1] = q @ (q.T @ xw)
    _check_conditioning(xhat_w, "projected second-stage design")

    beta, *_ = np.linalg.lstsq(xhat_w, yw, rcond=None)
    latec = float(beta[1])
    resid = yw - xr_w @ beta
    cov = _hc1_cov(xhat_w, resid)
    se = float(np.sqrt(max(cov[1, 1], 0.0)))

    ci95 = (latec - Z95 * se, latec + Z95 * se)
    wsum = w.sum()
    ybar = float((w * y).sum() / wsum)
    sd_w = float(np.sqrt((w * (y - ybar) ** 2).sum() / wsum))
    degenerate = se == 0.0 or sd_w == 0.0
    if sd_w > 0.0:
        standardized = latec / sd_w
        standardized_ci95 = (ci95[0] / sd_w, ci95[1] / sd_w)
    else:
        standardized = 0.0
        standardized_ci95 = (0.0, 0.0)

    return EstimateResult(
        latec=latec,
        se=se,
        ci95=ci95,
        standardized=standardized,
        standardized_ci95=standardized_ci95,
        itt=itt,
        itt_d=itt_d,
        n_effective=n,
        bandwidth_h=kernel.bandwidth_h,
        first_stage_f=first_stage_f,
        outcome=outcome,
        period=period,
        is_placebo=is_placebo,
        degenerate=degenerate,
    )


def wald_ratio(
    units: Cohort, kernel: KernelSpec, outcome: Outcome, period: str = "followup"
) -> float:
    """Ratio of kernel-weighted side-mean gaps of outcome and treatment.

    The intercept-only cross-check for estimate_latec: on data whose
    conditional means are flat in the running variable the two agree.
    """
    s = units.running_s - kernel.threshold_t
    w = triangular_weight(units.running_s, kernel)
    mask = w > 0.0
    s, w = s[mask], w[mask]
    above = s >= 0.0
    if not above.any() or above.all():
        raise TooFewUnits("need effective units on both sides of the cutoff")
    x = units.treated[mask].astype(np.float64)
    y = units.outcome_values(outcome, period)[mask]

    def gap(values):
        hi = (w[above] * values[above]).sum() / w[above].sum()
        lo = (w[~above] * values[~above]).sum() / w[~above].sum()
        return hi - lo

    denom = gap(x)
    if abs(denom) < 1e-12:
        raise DegenerateDenominator(f"treatment gap {denom:.3g} is numerically zero")
    return float(gap(y) / denom)
