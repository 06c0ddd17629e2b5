"""Robustness checks: density manipulation test, placebo estimates,
bandwidth-sensitivity sweeps, and binned-means tables for visual checks.

Nothing here renders figures; plot tables are exported for external tools.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .cohorts import Cohort, Outcome
from .errors import EmptySide, TooFewScores
from .estimator import EstimateResult, KernelSpec, estimate_latec

MIN_SCORES = 500
BIN_RULE_CONSTANT = 2.0
SMOOTHING_CONSTANT = 3.348
DEFAULT_SWEEP_MULTIPLIERS = (0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5)


@dataclass(frozen=True)
class McCraryResult:
    """Log-density discontinuity of the running variable at a cutoff."""

    theta: float
    se: float
    p_value: float
    bin_size: float
    smoothing_bandwidth: float
    density_above: float
    density_below: float


def _local_linear_density(centers, heights, distances, kappa):
    w = 1.0 - np.abs(distances) / kappa
    keep = w > 0.0
    if int(keep.sum()) < 2:
        raise TooFewScores("not enough histogram bins inside the smoothing bandwidth")
    sw = np.sqrt(w[keep])
    design = np.column_stack([np.ones(int(keep.sum())), distances[keep]]) * sw[:, None]
    coef, *_ = np.linalg.lstsq(design, heights[keep] * sw, rcond=None)
    return float(coef[0])


def mccrary_test(scores, threshold: float) -> McCraryResult:
    """First-pass manipulation test: histogram with the cutoff on a bin
    edge, then side-wise local-linear smoothing of bin heights.

    theta is the gap in log density at the cutoff; its null distribution
    is standard normal under no manipulation.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if n < MIN_SCORES:
        raise TooFewScores(f"{n} scores; need {MIN_SCORES}")
    if not (scores < threshold).any() or not (scores >= threshold).any():
        raise EmptySide("all scores fall on one side of the cutoff")

    sigma = float(scores.std(ddof=1))
    bin_size = BIN_RULE_CONSTANT * sigma * n ** (-0.5)
    kappa = SMOOTHING_CONSTANT * sigma * n ** (-0.2)

    idx = np.floor((scores - threshold) / bin_size).astype(np.int64)
    lo, hi = int(idx.min()), int(idx.max())
    counts = np.bincount(idx - lo, minlength=hi - lo + 1)
    all_idx = np.arange(lo, hi + 1, dtype=np.int64)
    centers = threshold + (all_idx + 0.5) * bin_size
    heights = counts / (n * bin_size)

    above = all_idx >= 0
    dist = centers - threshold
    f_above = _local_linear_density(centers[above], heights[above], dist[above], kappa)
    f_below = _local_linear_density(centers[~above], heights[~above], dist[~above], kappa)
    f_above = max(f_above, 1e-12)
    f_below = max(f_below, 1e-12)

    theta = float(np.log(f_above) - np.log(f_below))
    se = float(np.sqrt((24.0 / 5.0) * (1.0 / (n * kappa)) * (1.0 / f_above + 1.0 / f_below)))
    p_value = float(2.0 * (1.0 - norm.cdf(abs(theta) / se)))
    return McCraryResult(
        theta=theta,
        se=se,
        p_value=p_value,
        bin_size=float(bin_size),
        smoothing_bandwidth=float(kappa),
        density_above=f_above,
        density_below=f_below,
    )


def placebo_frd(units: Cohort, kernel: KernelSpec, outcome: Outcome) -> EstimateResult:
    """The main estimate rerun on pre-assignment outcomes.

    Treatment happens after those outcomes were realized, so anything but
    noise here indicts the design, not the intervention.
    """
    return estimate_latec(units, kernel, outcome, period="pre", is_placebo=True)


@dataclass(frozen=True)
class SweepPoint:
    multiplier: float
    bandwidth_h: float
    estimate: EstimateResult | None
    error: str | None


@dataclass(frozen=True)
class SweepResult:
    """Re-estimates at scaled bandwidths around the selected one."""

    reference_h: float
    points: tuple

    @property
    def multipliers(self):
        return tuple(p.multiplier for p in self.points)


def bandwidth_sweep(
    units: Cohort,
    outcome: Outcome,
    reference_h: float,
    multipliers=DEFAULT_SWEEP_MULTIPLIERS,
    period: str = "followup",
) -> SweepResult:
    """Stability check: per-point estimation failures are recorded, not raised."""
    mults = tuple(float(m) for m in multipliers)
    if any(m <= 0 for m in mults) or list(mults) != sorted(mults):
        raise ValueError("multipliers must be positive and ascending")
    points = []
    for m in mults:
        h = m * reference_h
        kernel = KernelSpec(bandwidth_h=h, threshold_t=units.threshold_value)
        try:
            est = estimate_latec(units, kernel, outcome, period=period)
            points.append(SweepPoint(m, h, est, None))
        except Exception as exc:  # noqa: BLE001 - per-point capture is the contract
            points.append(SweepPoint(m, h, None, f"{type(exc).__name__}: {exc}"))
    return SweepResult(reference_h=float(reference_h), points=tuple(points))


@dataclass(frozen=True)
class BinnedTable:
    """Per-bin means plus fitted side-wise local-linear lines, for plotting."""

    threshold: float
    variable: str
    bin_mid: np.ndarray
    bin_mean: np.ndarray
    bin_count: np.ndarray
    bin_se: np.ndarray
    grid_s: np.ndarray
    grid_fit: np.ndarray


def binned_means(
    units: Cohort,
    threshold: float,
    n_bins: int,
    variable: str = "outcome",
    outcome: Outcome = Outcome.COMMENTS,
    period: str = "followup",
    bandwidth: float | None = None,
    grid_points: int = 50,
) -> BinnedTable:
    """Equal-width bins with the cutoff on a bin edge; empty bins are
    omitted rather than zero-filled."""
    if n_bins < 4 or n_bins % 2 != 0:
        raise ValueError("n_bins must be an even number >= 4")
    if variable == "treatment":
        values = units.treated.astype(np.float64)
    elif variable == "outcome":
        values = units.outcome_values(outcome, period)
    else:
        raise ValueError(f"unknown variable {variable!r}")

    s = units.running_s - threshold
    width = float(np.abs(s).max())
    if width == 0.0:
        raise ValueError("all units sit exactly at the cutoff")
    edges = np.linspace(-width, width, n_bins + 1)
    # Right-open bins except the last; the cutoff is edge n_bins/2.
    idx = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, n_bins - 1)

    mids, means, counts, ses = [], [], [], []
    for b in range(n_bins):
        inside = idx == b
        c = int(inside.sum())
        if c == 0:
            continue
        vals = values[inside]
        mids.append(threshold + (edges[b] + edges[b + 1]) / 2.0)
        means.append(float(vals.mean()))
        counts.append(c)
        ses.append(float(vals.std(ddof=1) / np.sqrt(c)) if c > 1 else 0.0)

    h = bandwidth if bandwidth is not None else width
    above = s >= 0.0

    def side_fit(mask, grid):
        w = np.maximum(1.0 - np.abs(s[mask]) / h, 0.0)
        keep = w > 0.0
        sw = np.sqrt(w[keep])
        design = np.column_stack([np.ones(int(keep.sum())), s[mask][keep]]) * sw[:, None]
        coef, *_ = np.linalg.lstsq(design, values[mask][keep] * sw, rcond=None)
        return coef[0] + coef[1] * grid

    grid_above = np.linspace(0.0, width, grid_points)
    grid_below = np.linspace(-width, 0.0, grid_points, endpoint=False)
    fit_below = side_fit(~above, grid_below) if (~above).any() else np.array([])
    fit_above = side_fit(above, grid_above) if above.any() else np.array([])
    grid_s = np.concatenate([grid_below, grid_above]) + threshold
    grid_fit = np.concatenate([fit_below, fit_above])

    return BinnedTable(
        threshold=float(threshold),
        variable=variable,
        bin_mid=np.array(mids),
        bin_mean=np.array(means),
        bin_count=np.array(counts, dtype=np.int64),
        bin_se=np.array(ses),
        grid_s=grid_s,
        grid_fit=grid_fit,
    )
