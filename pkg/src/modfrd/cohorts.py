"""Quasi-experiment unit construction from event logs.

Two scenarios: thread-level (impact on the thread where the focal comment
was posted) and user-level (impact on the focal comment's author). A unit's
focal comment c0 is the earliest comment scored within +-0.05 of a cutoff;
outcomes are comment and intervention counts over pre-assignment and
follow-up windows.

The selection and counting primitives here are also what the simulator uses
to assemble its ground-truth bookkeeping, so the estimator and the oracle
target exactly the same units and windows.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyCohort
from .records import Dataset, Intervention
from .simconfig import COHORT_WINDOW

THREAD = "thread"
USER = "user"
K_DAYS_CHOICES = (7, 14, 21, 28)
DAY_SECONDS = 86400
# Fixed one-day posting suspension; excluded from repeat-offender follow-up.
SUSPENSION_EXCLUSION_SECONDS = 24 * 3600


class Outcome(enum.Enum):
    COMMENTS = "comments"
    INTERVENTIONS = "interventions"


@dataclass(frozen=True)
class CohortSpec:
    """One cohort selector: threshold, scenario, and scenario-specific setup."""

    threshold: str  # 'hide' | 'delete'
    threshold_value: float
    scenario: str  # 'thread' | 'user'
    size_class: Optional[str] = None  # 'le20' | 'gt20', thread only
    author_scope: Optional[str] = None  # 'all' | 'other', thread only
    k_days: Optional[int] = None  # user only
    offender_class: Optional[str] = None  # 'first' | 'repeat', user only

    def validate(self) -> None:
        if self.threshold not in ("hide", "delete"):
            raise ValueError(f"unknown threshold {self.threshold!r}")
        if not (0.0 < self.threshold_value < 1.0):
            raise ValueError("threshold_value must lie in (0, 1)")
        if self.scenario == THREAD:
            if self.size_class not in ("le20", "gt20") or self.author_scope not in ("all", "other"):
                raise ValueError("thread specs need size_class and author_scope")
            if self.k_days is not None or self.offender_class is not None:
                raise ValueError("k_days/offender_class are user-scenario fields")
        elif self.scenario == USER:
            if self.k_days not in K_DAYS_CHOICES or self.offender_class not in ("first", "repeat"):
                raise ValueError("user specs need k_days in {7,14,21,28} and offender_class")
            if self.size_class is not None or self.author_scope is not None:
                raise ValueError("size_class/author_scope are thread-scenario fields")
        else:
            raise ValueError(f"unknown scenario {self.scenario!r}")

    @property
    def setup_label(self) -> str:
        if self.scenario == THREAD:
            return f"{self.size_class}_{self.author_scope}"
        return f"k{self.k_days}_{self.offender_class}"


@dataclass(frozen=True)
class ScenarioUnit:
    """One analysis unit (a thread or a user) with its windowed outcomes."""

    unit_id: int
    c0_comment_id: int
    running_s: float
    treated: bool
    y_followup_comments: int
    y_followup_interventions: int
    y_pre_comments: int
    y_pre_interventions: int
    pre_thread_size: Optional[int] = None
    offender_class: Optional[str] = None


@dataclass(frozen=True)
class Cohort:
    """Array-backed collection of ScenarioUnit rows for one CohortSpec."""

    threshold: str
    threshold_value: float
    scenario: str
    setup_label: str
    unit_ids: np.ndarray
    c0_comment_ids: np.ndarray
    running_s: np.ndarray
    treated: np.ndarray
    y_fu_comments: np.ndarray
    y_fu_interventions: np.ndarray
    y_pre_comments: np.ndarray
    y_pre_interventions: np.ndarray
    pre_thread_size: Optional[np.ndarray] = None
    offender_class: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.unit_ids.shape[0])

    def outcome_values(self, outcome: Outcome, period: str = "followup") -> np.ndarray:
        if period == "followup":
            arr = self.y_fu_comments if outcome is Outcome.COMMENTS else self.y_fu_interventions
        elif period == "pre":
            arr = self.y_pre_comments if outcome is Outcome.COMMENTS else self.y_pre_interventions
        else:
            raise ValueError(f"unknown period {period!r}")
        return arr.astype(np.float64)

    def unit(self, i: int) -> ScenarioUnit:
        return ScenarioUnit(
            unit_id=int(self.unit_ids[i]),
            c0_comment_id=int(self.c0_comment_ids[i]),
            running_s=float(self.running_s[i]),
            treated=bool(self.treated[i]),
            y_followup_comments=int(self.y_fu_comments[i]),
            y_followup_interventions=int(self.y_fu_interventions[i]),
            y_pre_comments=int(self.y_pre_comments[i]),
            y_pre_interventions=int(self.y_pre_interventions[i]),
            pre_thread_size=None if self.pre_thread_size is None else int(self.pre_thread_size[i]),
            offender_class=None if self.offender_class is None else str(self.offender_class[i]),
        )

    def __iter__(self):
        return (self.unit(i) for i in range(len(self)))

    def subset(self, mask: np.ndarray) -> "Cohort":
        return Cohort(
            threshold=self.threshold,
            threshold_value=self.threshold_value,
            scenario=self.scenario,
            setup_label=self.setup_label,
            unit_ids=self.unit_ids[mask],
            c0_comment_ids=self.c0_comment_ids[mask],
            running_s=self.running_s[mask],
            treated=self.treated[mask],
            y_fu_comments=self.y_fu_comments[mask],
            y_fu_interventions=self.y_fu_interventions[mask],
            y_pre_comments=self.y_pre_comments[mask],
            y_pre_interventions=self.y_pre_interventions[mask],
            pre_thread_size=None if self.pre_thread_size is None else self.pre_thread_size[mask],
            offender_class=None if self.offender_class is None else self.offender_class[mask],
        )

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "unit_id",
                    "c0_comment_id",
                    "running_s",
                    "treated",
                    "y_fu_comments",
                    "y_fu_interventions",
                    "y_pre_comments",
                    "y_pre_interventions",
                    "pre_thread_size",
                    "offender_class",
                ]
            )
            for i in range(len(self)):
                writer.writerow(
                    [
                        int(self.unit_ids[i]),
                        int(self.c0_comment_ids[i]),
                        repr(float(self.running_s[i])),
                        "true" if self.treated[i] else "false",
                        int(self.y_fu_comments[i]),
                        int(self.y_fu_interventions[i]),
                        int(self.y_pre_comments[i]),
                        int(self.y_pre_interventions[i]),
                        "" if self.pre_thread_size is None else int(self.pre_thread_size[i]),
                        "" if self.offender_class is None else str(self.offender_class[i]),
                    ]
                )

    @classmethod
    def from_csv(cls, path, threshold: str, threshold_value: float,
                 scenario: str = "", setup_label: str = "") -> "Cohort":
        rows = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                rows.append(row)
        n = len(rows)
        has_size = any(r["pre_thread_size"] != "" for r in rows)
        has_class = any(r["offender_class"] != "" for r in rows)
        return cls(
            threshold=threshold,
            threshold_value=threshold_value,
            scenario=scenario,
            setup_label=setup_label,
            unit_ids=np.array([int(r["unit_id"]) for r in rows], dtype=np.int64),
            c0_comment_ids=np.array([int(r["c0_comment_id"]) for r in rows], dtype=np.int64),
            running_s=np.array([float(r["running_s"]) for r in rows]),
            treated=np.array([r["treated"] == "true" for r in rows]),
            y_fu_comments=np.array([int(r["y_fu_comments"]) for r in rows], dtype=np.int64),
            y_fu_interventions=np.array([int(r["y_fu_interventions"]) for r in rows], dtype=np.int64),
            y_pre_comments=np.array([int(r["y_pre_comments"]) for r in rows], dtype=np.int64),
            y_pre_interventions=np.array([int(r["y_pre_interventions"]) for r in rows], dtype=np.int64),
            pre_thread_size=(
                np.array([int(r["pre_thread_size"]) for r in rows], dtype=np.int64) if has_size and n else None
            ),
            offender_class=(
                np.array([r["offender_class"] for r in rows]) if has_class and n else None
            ),
        )


def _first_flag_position(mask: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Flat index of the first True per contiguous group, -1 when absent."""
    if mask.shape[0] == 0:
        return np.full(starts.shape[0] - 1, -1, dtype=np.int64)
    sentinel = np.iinfo(np.int64).max
    cand = np.where(mask, np.arange(mask.shape[0], dtype=np.int64), sentinel)
    first = np.minimum.reduceat(cand, starts[:-1])
    first[first == sentinel] = -1
    return first


def focal_intervention(threshold: str) -> Intervention:
    return Intervention.DELETE if threshold == "delete" else Intervention.HIDE


def thread_focal_positions(ds: Dataset, threshold_value: float):
    """Per-thread first in-window comment for one cutoff.

    Returns (thread_group_indices, flat_positions) into ds.thread_rows for
    threads that have a qualifying comment.
    """
    s = ds.scores[ds.thread_rows]
    mask = np.abs(s - threshold_value) <= COHORT_WINDOW
    first = _first_flag_position(mask, ds.thread_starts)
    groups = np.flatnonzero(first >= 0)
    return groups, first[groups]


def user_focal_positions(ds: Dataset, t_hide: float, t_delete: float):
    """Per-user earliest comment inside either cutoff window.

    Each qualifying user is assigned to the nearer threshold (ties go to
    the hide cutoff). Returns (user_group_indices, flat_positions,
    assigned_is_delete).
    """
    s = ds.scores[ds.user_rows]
    with np.errstate(invalid="ignore"):
        d_hide = np.abs(s - t_hide)
        d_delete = np.abs(s - t_delete)
        mask = (d_hide <= COHORT_WINDOW) | (d_delete <= COHORT_WINDOW)
    first = _first_flag_position(mask, ds.user_starts)
    groups = np.flatnonzero(first >= 0)
    pos = first[groups]
    is_delete = d_delete[pos] < d_hide[pos]
    return groups, pos, is_delete


def compute_outcomes(ds: Dataset, rows: np.ndarray):
    """Count (comments, interventions) over an already-resolved window."""
    rows = np.asarray(rows, dtype=np.int64)
    comments = int(rows.shape[0])
    interventions = int(np.count_nonzero(ds.interventions[rows] != int(Intervention.NONE)))
    return comments, interventions


def thread_window_rows(ds: Dataset, post_id: int, c0_comment_id: int, period: str) -> np.ndarray:
    """Dataset rows inside a thread unit's window (positional order)."""
    k = int(np.searchsorted(ds.thread_post_ids, post_id))
    lo, hi = int(ds.thread_starts[k]), int(ds.thread_starts[k + 1])
    span = ds.thread_rows[lo:hi]
    p = int(np.flatnonzero(ds.comment_ids[span] == c0_comment_id)[0])
    return span[:p] if period == "pre" else span[p + 1 :]


def user_window_rows(
    ds: Dataset,
    author_id: int,
    t0: int,
    k_days: int,
    period: str,
    exclude_suspension: bool = False,
) -> np.ndarray:
    """Dataset rows inside a user unit's window (strict time bounds)."""
    g = int(np.searchsorted(ds.user_author_ids, author_id))
    lo, hi = int(ds.user_starts[g]), int(ds.user_starts[g + 1])
    span = ds.user_rows[lo:hi]
    ts = ds.timestamps[span]
    if period == "pre":
        keep = (ts >= t0 - k_days * DAY_SECONDS) & (ts < t0)
    else:
        start = t0 + (SUSPENSION_EXCLUSION_SECONDS if exclude_suspension else 0)
        keep = (ts > start) & (ts <= t0 + k_days * DAY_SECONDS)
    return span[keep]


def _thread_unit_table(ds: Dataset, threshold_value: float) -> dict:
    """All thread units for one cutoff, outcomes under both author scopes."""
    groups, pos = thread_focal_positions(ds, threshold_value)
    rows = ds.thread_rows
    starts = ds.thread_starts
    sizes = np.diff(starts)

    c0_rows = rows[pos]
    c0_author = ds.author_ids[c0_rows]

    target = np.full(starts[-1] if starts.size else 0, -1, dtype=np.int64)
    per_thread = np.full(sizes.shape[0], -1, dtype=np.int64)
    per_thread[groups] = c0_author
    if sizes.size:
        target = np.repeat(per_thread, sizes)

    interv = (ds.interventions[rows] != int(Intervention.NONE)).astype(np.int64)
    match = (ds.author_ids[rows] == target).astype(np.int64)

    def prefix(arr):
        out = np.zeros(arr.shape[0] + 1, dtype=np.int64)
        np.cumsum(arr, out=out[1:])
        return out

    cs_interv = prefix(interv)
    cs_match = prefix(match)
    cs_match_interv = prefix(match * interv)

    lo = starts[groups]
    hi = starts[groups + 1]
    fu_lo = pos + 1

    def window_counts(a, b):
        comments = b - a
        interventions = cs_interv[b] - cs_interv[a]
        own = cs_match[b] - cs_match[a]
        own_interv = cs_match_interv[b] - cs_match_interv[a]
        return comments, interventions, comments - own, interventions - own_interv

    fu_all, fu_interv_all, fu_other, fu_interv_other = window_counts(fu_lo, hi)
    pre_all, pre_interv_all, pre_other, pre_interv_other = window_counts(lo, pos)

    return {
        "post_ids": ds.thread_post_ids[groups],
        "c0_rows": c0_rows,
        "c0_ids": ds.comment_ids[c0_rows],
        "running_s": ds.scores[c0_rows],
        "c0_interventions": ds.interventions[c0_rows],
        "pre_thread_size": pos - lo,
        "fu_comments_all": fu_all,
        "fu_interventions_all": fu_interv_all,
        "fu_comments_other": fu_other,
        "fu_interventions_other": fu_interv_other,
        "pre_comments_all": pre_all,
        "pre_interventions_all": pre_interv_all,
        "pre_comments_other": pre_other,
        "pre_interventions_other": pre_interv_other,
    }


def _user_unit_table(ds: Dataset, t_hide: float, t_delete: float, k_days: int) -> dict:
    """All user units with k-day windowed outcomes and horizon drops applied.

    Follow-up and pre windows use strict time bounds around the focal
    comment's timestamp; repeat-offender units skip the first suspension
    window of the follow-up period. Units whose follow-up horizon passes
    the last dataset timestamp are dropped rather than truncated.
    """
    groups, pos, is_delete = user_focal_positions(ds, t_hide, t_delete)
    rows = ds.user_rows
    starts = ds.user_starts

    c0_rows = rows[pos]
    t0 = ds.timestamps[c0_rows]
    ts_max = int(ds.timestamps.max()) if len(ds) else 0

    keep = t0 + k_days * DAY_SECONDS <= ts_max
    groups, pos, is_delete = groups[keep], pos[keep], is_delete[keep]
    c0_rows, t0 = c0_rows[keep], t0[keep]

    repeat = ds.prior_offense[c0_rows]

    interv = (ds.interventions[rows] != int(Intervention.NONE)).astype(np.int64)
    cs_interv = np.zeros(rows.shape[0] + 1, dtype=np.int64)
    np.cumsum(interv, out=cs_interv[1:])

    ts_flat = ds.timestamps[rows]
    stride = int(ts_flat.max()) + 2 if ts_flat.size else 2
    n_groups = starts.shape[0] - 1
    if n_groups * stride + stride >= 2**62:
        raise OverflowError("timestamp range too large for composite window search")
    group_of = np.repeat(np.arange(n_groups, dtype=np.int64), np.diff(starts))
    keys = group_of * stride + ts_flat

    base = groups.astype(np.int64) * stride

    def count(lo_bound, lo_side, hi_bound, hi_side):
        a = np.searchsorted(keys, base + lo_bound, side=lo_side)
        b = np.searchsorted(keys, base + hi_bound, side=hi_side)
        return (b - a).astype(np.int64), (cs_interv[b] - cs_interv[a]).astype(np.int64)

    fu_start = t0 + np.where(repeat, SUSPENSION_EXCLUSION_SECONDS, 0)
    fu_comments, fu_interventions = count(fu_start, "right", t0 + k_days * DAY_SECONDS, "right")
    pre_comments, pre_interventions = count(t0 - k_days * DAY_SECONDS, "left", t0, "left")

    return {
        "author_ids": ds.user_author_ids[groups],
        "c0_rows": c0_rows,
        "c0_ids": ds.comment_ids[c0_rows],
        "running_s": ds.scores[c0_rows],
        "c0_interventions": ds.interventions[c0_rows],
        "is_delete": is_delete,
        "repeat": repeat,
        "fu_comments": fu_comments,
        "fu_interventions": fu_interventions,
        "pre_comments": pre_comments,
        "pre_interventions": pre_interventions,
    }


def build_thread_cohort(dataset: Dataset, spec: CohortSpec) -> Cohort:
    """Thread-level units for one cutoff, filtered to the requested setup."""
    spec.validate()
    if spec.scenario != THREAD:
        raise ValueError("spec.scenario must be 'thread'")
    table = _thread_unit_table(dataset, spec.threshold_value)
    size = table["pre_thread_size"]
    mask = size <= 20 if spec.size_class == "le20" else size > 20
    if not np.any(mask):
        raise EmptyCohort(f"no qualifying threads for {spec.setup_label}")
    scope = spec.author_scope
    treated = table["c0_interventions"] == int(focal_intervention(spec.threshold))
    return Cohort(
        threshold=spec.threshold,
        threshold_value=spec.threshold_value,
        scenario=THREAD,
        setup_label=spec.setup_label,
        unit_ids=table["post_ids"][mask],
        c0_comment_ids=table["c0_ids"][mask],
        running_s=table["running_s"][mask],
        treated=treated[mask],
        y_fu_comments=table[f"fu_comments_{scope}"][mask],
        y_fu_interventions=table[f"fu_interventions_{scope}"][mask],
        y_pre_comments=table[f"pre_comments_{scope}"][mask],
        y_pre_interventions=table[f"pre_interventions_{scope}"][mask],
        pre_thread_size=size[mask],
    )


def build_user_cohort(dataset: Dataset, spec: CohortSpec, t_hide: float, t_delete: float) -> Cohort:
    """User-level units assigned to one cutoff, for one (k, offender) setup."""
    spec.validate()
    if spec.scenario != USER:
        raise ValueError("spec.scenario must be 'user'")
    expected = t_delete if spec.threshold == "delete" else t_hide
    if abs(spec.threshold_value - expected) > 1e-12:
        raise ValueError("spec.threshold_value disagrees with the cutoff pair")
    table = _user_unit_table(dataset, t_hide, t_delete, spec.k_days)
    want_delete = spec.threshold == "delete"
    mask = table["is_delete"] == want_delete
    mask &= table["repeat"] == (spec.offender_class == "repeat")
    if not np.any(mask):
        raise EmptyCohort(f"no qualifying users for {spec.setup_label}")
    treated = table["c0_interventions"] == int(focal_intervention(spec.threshold))
    classes = np.where(table["repeat"], "repeat", "first")
    return Cohort(
        threshold=spec.threshold,
        threshold_value=spec.threshold_value,
        scenario=USER,
        setup_label=spec.setup_label,
        unit_ids=table["author_ids"][mask],
        c0_comment_ids=table["c0_ids"][mask],
        running_s=table["running_s"][mask],
        treated=treated[mask],
        y_fu_comments=table["fu_comments"][mask],
        y_fu_interventions=table["fu_interventions"][mask],
        y_pre_comments=table["pre_comments"][mask],
        y_pre_interventions=table["pre_interventions"][mask],
        offender_class=classes[mask],
    )
