"""Deterministic generator of synthetic moderation logs with known effects.

Generation runs in phases:

1. A base event stream (root posts, per-user comment streams, scores from a
   Beta mixture with optional within-thread contagion tilt, interventions
   from the two-cutoff compliance rule, offense/suspension bookkeeping).
   Nothing in the base stream reacts to whether a near-cutoff comment was
   actually intervened upon, so every unit's no-treatment baseline is
   identical on both sides of a cutoff by construction.
2. Focal-comment selection, reusing the cohort-builder primitives, so the
   units the estimator will see are exactly the units carrying effects.
3. Effect injection: per treated (or untreated, for negative effects) unit,
   extra adjustment comments are appended after the focal comment. Their
   scores sit well outside both cutoff windows, so they can never become
   focal comments and never distort density or compliance near a cutoff.
4. Ground-truth assembly: realized window counts come from the same
   counting code as the cohort builder; potential outcomes are realized
   counts with the unit's own adjustments swapped between worlds.

Randomness is drawn from counter-based streams keyed by (seed, phase), so
identical configs give bit-identical output.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cohorts import (
    COHORT_WINDOW,
    Outcome,
    _thread_unit_table,
    _user_unit_table,
)
from .errors import InsufficientUnits, ModfrdError
from .records import Dataset, Intervention
from .simconfig import SimConfig

# Identifier blocks; disjoint by construction.
ROOT_ID_BASE = 1_000_000_000
SENTINEL_ROOT_ID = 2_000_000_000 - 1
COMMENT_ID_BASE = 2_000_000_000
SINK_ROOT_ID_BASE = 3_000_000_000
DELTA_ID_BASE = 4_000_000_000
SYSTEM_AUTHOR = 5_000_000_000
BACKGROUND_AUTHOR_BASE = 5_000_000_001

# Phase keys for the counter-based random streams.
_S_ROOTS = 1
_S_COUNTS = 2
_S_TIMES = 3
_S_THREADS = 4
_S_COMPONENT = 5
_S_SCORES = 6
_S_INTERVENE = 7
_S_DELTA_THREAD_HIDE = 8
_S_DELTA_THREAD_DELETE = 9
_S_DELTA_USER = 10
_S_DELTA_SCORES = 11

_ZIPF_EXPONENT = 0.8
# User adjustments land after any follow-up exclusion but inside the
# shortest (7-day) outcome window, so recorded effects are k-invariant.
_USER_DELTA_OFFSET = 24 * 3600 + 3600
_DELTA_SPACING = 37


def _rng(seed: int, phase: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, phase]))


def intervene(score: float, config: SimConfig, draw: float) -> Intervention:
    """Incremental two-cutoff intervention rule driven by one uniform draw.

    Delete fires with probability f1(delete) at or above t_delete, f0(delete)
    below; surviving comments are hidden by the analogous rule at t_hide.
    """
    p_d = config.delete_compliance.f1 if score >= config.t_delete else config.delete_compliance.f0
    if draw < p_d:
        return Intervention.DELETE
    p_h = config.hide_compliance.f1 if score >= config.t_hide else config.hide_compliance.f0
    if p_d < 1.0 and (draw - p_d) / (1.0 - p_d) < p_h:
        return Intervention.HIDE
    return Intervention.NONE


def _intervene_codes(scores: np.ndarray, draws: np.ndarray, config: SimConfig) -> np.ndarray:
    """Vectorized twin of intervene(); same arithmetic, int8 codes."""
    p_d = np.where(scores >= config.t_delete, config.delete_compliance.f1, config.delete_compliance.f0)
    deleted = draws < p_d
    denom = 1.0 - p_d
    residual = np.where(denom > 0.0, (draws - p_d) / np.where(denom > 0.0, denom, 1.0), 2.0)
    p_h = np.where(scores >= config.t_hide, config.hide_compliance.f1, config.hide_compliance.f0)
    hidden = ~deleted & (residual < p_h)
    codes = np.zeros(scores.shape[0], dtype=np.int8)
    codes[hidden] = int(Intervention.HIDE)
    codes[deleted] = int(Intervention.DELETE)
    return codes


def _out_of_window(scores: np.ndarray, config: SimConfig) -> np.ndarray:
    return (np.abs(scores - config.t_hide) > COHORT_WINDOW) & (
        np.abs(scores - config.t_delete) > COHORT_WINDOW
    )


def _stochastic_round(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Integer counts with the right mean: floor(x) + Bernoulli(frac(x))."""
    base = np.floor(x)
    return (base + (u < (x - base))).astype(np.int64)


@dataclass(frozen=True)
class GroundTruth:
    """Per-unit potential outcomes and complier flags, one row per unit.

    Thread rows carry outcomes under the all-authors scope; the
    treated-minus-untreated difference is identical under the
    other-authors scope because adjustments are never authored by the
    focal commenter. User rows carry 7-day-window outcomes; differences
    are identical for all k because adjustments land inside the 7-day
    window (and outside the repeat-offender exclusion).
    """

    scenario: np.ndarray
    threshold: np.ndarray
    threshold_value: np.ndarray
    unit_ids: np.ndarray
    c0_comment_ids: np.ndarray
    running_s: np.ndarray
    treated: np.ndarray
    complier: np.ndarray
    y_treated_comments: np.ndarray
    y_untreated_comments: np.ndarray
    y_treated_interventions: np.ndarray
    y_untreated_interventions: np.ndarray

    def __len__(self) -> int:
        return int(self.unit_ids.shape[0])

    def subset(self, scenario: str | None = None, threshold: str | None = None) -> "GroundTruth":
        mask = np.ones(len(self), dtype=bool)
        if scenario is not None:
            mask &= self.scenario == scenario
        if threshold is not None:
            mask &= self.threshold == threshold
        return GroundTruth(
            scenario=self.scenario[mask],
            threshold=self.threshold[mask],
            threshold_value=self.threshold_value[mask],
            unit_ids=self.unit_ids[mask],
            c0_comment_ids=self.c0_comment_ids[mask],
            running_s=self.running_s[mask],
            treated=self.treated[mask],
            complier=self.complier[mask],
            y_treated_comments=self.y_treated_comments[mask],
            y_untreated_comments=self.y_untreated_comments[mask],
            y_treated_interventions=self.y_treated_interventions[mask],
            y_untreated_interventions=self.y_untreated_interventions[mask],
        )

    def potential(self, outcome: Outcome):
        if outcome is Outcome.COMMENTS:
            return self.y_treated_comments, self.y_untreated_comments
        return self.y_treated_interventions, self.y_untreated_interventions

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "scenario",
                    "threshold",
                    "threshold_value",
                    "unit_id",
                    "c0_comment_id",
                    "running_s",
                    "treated",
                    "complier",
                    "y_treated_comments",
                    "y_untreated_comments",
                    "y_treated_interventions",
                    "y_untreated_interventions",
                ]
            )
            for i in range(len(self)):
                writer.writerow(
                    [
                        str(self.scenario[i]),
                        str(self.threshold[i]),
                        repr(float(self.threshold_value[i])),
                        int(self.unit_ids[i]),
                        int(self.c0_comment_ids[i]),
                        repr(float(self.running_s[i])),
                        "true" if self.treated[i] else "false",
                        "true" if self.complier[i] else "false",
                        int(self.y_treated_comments[i]),
                        int(self.y_untreated_comments[i]),
                        int(self.y_treated_interventions[i]),
                        int(self.y_untreated_interventions[i]),
                    ]
                )

    @classmethod
    def from_csv(cls, path) -> "GroundTruth":
        rows = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append(row)
        return cls(
            scenario=np.array([r["scenario"] for r in rows]),
            threshold=np.array([r["threshold"] for r in rows]),
            threshold_value=np.array([float(r["threshold_value"]) for r in rows]),
            unit_ids=np.array([int(r["unit_id"]) for r in rows], dtype=np.int64),
            c0_comment_ids=np.array([int(r["c0_comment_id"]) for r in rows], dtype=np.int64),
            running_s=np.array([float(r["running_s"]) for r in rows]),
            treated=np.array([r["treated"] == "true" for r in rows]),
            complier=np.array([r["complier"] == "true" for r in rows]),
            y_treated_comments=np.array([int(r["y_treated_comments"]) for r in rows], dtype=np.int64),
            y_untreated_comments=np.array([int(r["y_untreated_comments"]) for r in rows], dtype=np.int64),
            y_treated_interventions=np.array(
                [int(r["y_treated_interventions"]) for r in rows], dtype=np.int64
            ),
            y_untreated_interventions=np.array(
                [int(r["y_untreated_interventions"]) for r in rows], dtype=np.int64
            ),
        )


def oracle_latec(
    truth: GroundTruth, threshold: float, window: float, outcome: Outcome
) -> tuple:
    """Ground-truth cutoff effect: mean treated-untreated gap over compliers.

    This is what the estimator must recover; its standard error is the
    plain sampling error of the complier mean.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    mask = (np.abs(truth.running_s - threshold) <= window) & truth.complier
    m = int(np.count_nonzero(mask))
    if m < 100:
        raise InsufficientUnits(f"only {m} compliers within {window} of {threshold}")
    y_t, y_u = truth.potential(outcome)
    diff = (y_t[mask] - y_u[mask]).astype(np.float64)
    est = float(diff.mean())
    se = float(diff.std(ddof=1) / np.sqrt(m))
    return est, se


def _base_stream(config: SimConfig):
    """Phase 1: the treatment-independent event stream."""
    seed = config.seed
    n_users, n_posts = config.n_users, config.n_posts
    duration = config.duration_seconds

    rng = _rng(seed, _S_ROOTS)
    root_ts = np.sort(rng.integers(0, duration // 3 + 1, size=n_posts))
    root_ts[0] = 0
    root_authors = rng.integers(0, n_users, size=n_posts)

    counts = _rng(seed, _S_COUNTS).poisson(config.base_activity * config.duration_days, n_users)
    m = int(counts.sum())
    author_idx = np.repeat(np.arange(n_users, dtype=np.int64), counts)
    ts = _rng(seed, _S_TIMES).integers(1, duration + 1, size=m)

    # Popularity-weighted thread choice among threads already born:
    # inverse-CDF sampling truncated to the eligible prefix.
    weights = (np.arange(n_posts, dtype=np.float64) + 1.0) ** (-_ZIPF_EXPONENT)
    cumw = np.cumsum(weights)
    eligible = np.searchsorted(root_ts, ts, side="right")
    u_thread = _rng(seed, _S_THREADS).random(m)
    thread_idx = np.searchsorted(cumw, u_thread * cumw[eligible - 1], side="right")

    mix = config.score_dist
    k = mix.n_components
    comp_scores = _rng(seed, _S_SCORES).beta(
        np.asarray(mix.alphas), np.asarray(mix.betas), size=(m, k)
    )
    u_comp = _rng(seed, _S_COMPONENT).random(m)
    u_int = _rng(seed, _S_INTERVENE).random(m)

    order = np.lexsort((np.arange(m), ts))
    ts = ts[order]
    author_idx = author_idx[order]
    thread_idx = thread_idx[order]
    comp_scores = np.ascontiguousarray(comp_scores[order])
    u_comp = u_comp[order]
    u_int = u_int[order]

    toxic = int(np.argmax(mix.component_means()))
    if config.contagion > 0.0:
        scores, interv, keep, prior, counted = _kernels.score_walk(
            thread_idx,
            author_idx,
            ts,
            comp_scores,
            u_comp,
            u_int,
            np.asarray(mix.weights, dtype=np.float64),
            toxic,
            config.contagion,
            config.t_hide,
            config.t_delete,
            config.hide_compliance.f0,
            config.hide_compliance.f1,
            config.delete_compliance.f0,
            config.delete_compliance.f1,
            COHORT_WINDOW,
            config.suspension_seconds,
            n_posts,
            n_users,
        )
    else:
        cum_mix = np.cumsum(np.asarray(mix.weights, dtype=np.float64))
        comp = np.minimum(np.searchsorted(cum_mix, u_comp, side="right"), k - 1)
        scores = comp_scores[np.arange(m), comp]
        interv = _intervene_codes(scores, u_int, config)
        eligible_flag = (interv == int(Intervention.DELETE)) & _out_of_window(scores, config)
        uorder = np.lexsort((np.arange(m), ts, author_idx))
        ua = author_idx[uorder]
        bounds = np.flatnonzero(np.diff(ua) != 0) + 1 if m else np.array([], dtype=np.int64)
        user_starts = np.concatenate(([0], bounds, [m])).astype(np.int64)
        keep_u, prior_u, counted_u = _kernels.moderation_pass(
            np.ascontiguousarray(ts[uorder]),
            user_starts,
            np.ascontiguousarray(eligible_flag[uorder].astype(np.uint8)),
            config.suspension_seconds,
        )
        keep = np.zeros(m, dtype=bool)
        prior = np.zeros(m, dtype=bool)
        counted = np.zeros(m, dtype=bool)
        keep[uorder] = keep_u
        prior[uorder] = prior_u
        counted[uorder] = counted_u

    # Root-post offense flags: counted deletions strictly before posting.
    del_mask = keep & counted
    d_auth = author_idx[del_mask]
    d_ts = ts[del_mask]
    stride = duration + 2
    d_keys = np.sort(d_auth * stride + d_ts)
    before = np.searchsorted(d_keys, root_authors * stride + root_ts, side="left")
    start = np.searchsorted(d_keys, root_authors * stride, side="left")
    root_prior = (before - start) > 0

    return {
        "root_ts": root_ts,
        "root_authors": root_authors,
        "root_prior": root_prior,
        "ts": ts,
        "author_idx": author_idx,
        "thread_idx": thread_idx,
        "scores": scores,
        "interv": interv,
        "u_int": u_int,
        "keep": keep,
        "prior": prior,
    }


def _assemble_dataset(config: SimConfig, base: dict, deltas: dict | None) -> Dataset:
    """Concatenate roots, sentinel, sink roots, kept comments, adjustments."""
    duration = config.duration_seconds
    n_posts = config.n_posts
    keep = base["keep"]

    root_ids = ROOT_ID_BASE + np.arange(n_posts, dtype=np.int64)
    kept = np.flatnonzero(keep)
    comment_ids = COMMENT_ID_BASE + kept.astype(np.int64)

    blocks = []
    blocks.append(
        dict(
            ids=root_ids,
            post=root_ids,
            author=base["root_authors"] + 1,
            ts=base["root_ts"],
            root=np.ones(n_posts, dtype=bool),
            score=np.full(n_posts, np.nan),
            interv=np.zeros(n_posts, dtype=np.int8),
            prior=base["root_prior"],
        )
    )
    blocks.append(
        dict(
            ids=np.array([SENTINEL_ROOT_ID], dtype=np.int64),
            post=np.array([SENTINEL_ROOT_ID], dtype=np.int64),
            author=np.array([SYSTEM_AUTHOR], dtype=np.int64),
            ts=np.array([duration], dtype=np.int64),
            root=np.array([True]),
            score=np.array([np.nan]),
            interv=np.zeros(1, dtype=np.int8),
            prior=np.array([False]),
        )
    )
    blocks.append(
        dict(
            ids=comment_ids,
            post=root_ids[base["thread_idx"][kept]],
            author=base["author_idx"][kept] + 1,
            ts=base["ts"][kept],
            root=np.zeros(kept.shape[0], dtype=bool),
            score=base["scores"][kept],
            interv=base["interv"][kept],
            prior=base["prior"][kept],
        )
    )
    if deltas is not None and deltas["ids"].shape[0]:
        sink_users = deltas["sink_users"]
        if sink_users.shape[0]:
            blocks.append(
                dict(
                    ids=SINK_ROOT_ID_BASE + sink_users,
                    post=SINK_ROOT_ID_BASE + sink_users,
                    author=np.full(sink_users.shape[0], SYSTEM_AUTHOR, dtype=np.int64),
                    ts=np.zeros(sink_users.shape[0], dtype=np.int64),
                    root=np.ones(sink_users.shape[0], dtype=bool),
                    score=np.full(sink_users.shape[0], np.nan),
                    interv=np.zeros(sink_users.shape[0], dtype=np.int8),
                    prior=np.zeros(sink_users.shape[0], dtype=bool),
                )
            )
        blocks.append(
            dict(
                ids=deltas["ids"],
                post=deltas["post"],
                author=deltas["author"],
                ts=deltas["ts"],
                root=np.zeros(deltas["ids"].shape[0], dtype=bool),
                score=deltas["score"],
                interv=deltas["interv"],
                prior=np.zeros(deltas["ids"].shape[0], dtype=bool),
            )
        )

    return Dataset(
        comment_ids=np.concatenate([b["ids"] for b in blocks]),
        post_ids=np.concatenate([b["post"] for b in blocks]),
        author_ids=np.concatenate([b["author"] for b in blocks]),
        timestamps=np.concatenate([b["ts"] for b in blocks]),
        is_root=np.concatenate([b["root"] for b in blocks]),
        scores=np.concatenate([b["score"] for b in blocks]),
        interventions=np.concatenate([b["interv"] for b in blocks]),
        prior_offense=np.concatenate([b["prior"] for b in blocks]),
        source=f"simulated(seed={config.seed})",
    )


def _counterfactual_treatment(config: SimConfig, threshold_value: float, focal: Intervention,
                              s: np.ndarray, u: np.ndarray, realized: np.ndarray):
    """Treatment status on each side of the cutoff under the shared draw.

    The opposite-side state evaluates the intervention rule at the score
    reflected across the cutoff, keeping |S - t| fixed.
    """
    cf_codes = _intervene_codes(2.0 * threshold_value - s, u, config)
    treated_real = realized == int(focal)
    treated_cf = cf_codes == int(focal)
    above = s >= threshold_value
    treated_above = np.where(above, treated_real, treated_cf)
    treated_below = np.where(above, treated_cf, treated_real)
    return treated_real, treated_above & ~treated_below


def _plan_unit_deltas(rng: np.random.Generator, n: int, tau_c: float, tau_i: float, tau_sd: float):
    """Adjustment-comment counts per unit and world.

    Splits the comment effect into an intervened part (tau_i) and a plain
    part (tau_c - tau_i); positive amounts go to the treated world,
    negative to the untreated world, giving exact per-unit gaps.
    """
    if tau_sd > 0.0:
        tc = tau_c + tau_sd * rng.standard_normal(n)
        ti = tau_i + tau_sd * rng.standard_normal(n)
    else:
        tc = np.full(n, tau_c)
        ti = np.full(n, tau_i)
    u = rng.random((n, 2))
    amount_i = ti
    amount_n = tc - ti
    n_i = _stochastic_round(np.abs(amount_i), u[:, 0])
    n_n = _stochastic_round(np.abs(amount_n), u[:, 1])
    interv_treated = np.where(amount_i > 0, n_i, 0)
    interv_untreated = np.where(amount_i < 0, n_i, 0)
    plain_treated = np.where(amount_n > 0, n_n, 0)
    plain_untreated = np.where(amount_n < 0, n_n, 0)
    return {
        "interv_treated": interv_treated,
        "interv_untreated": interv_untreated,
        "comments_treated": interv_treated + plain_treated,
        "comments_untreated": interv_untreated + plain_untreated,
        "plain_treated": plain_treated,
        "plain_untreated": plain_untreated,
    }


def _realized_counts(plan: dict, treated: np.ndarray):
    interv = np.where(treated, plan["interv_treated"], plan["interv_untreated"])
    plain = np.where(treated, plan["plain_treated"], plan["plain_untreated"])
    return interv.astype(np.int64), plain.astype(np.int64)


def generate(config: SimConfig):
    """Produce a validated Dataset and its GroundTruth; pure in config."""
    config.validate()
    seed = config.seed
    duration = config.duration_seconds

    base = _base_stream(config)
    ds_base = _assemble_dataset(config, base, None)

    lo_region = config.low_delta_region()
    hi_region = config.high_delta_region()

    # --- plan effects per unit, reusing cohort selection ---
    unit_groups = []  # one entry per (scenario, threshold) unit family
    for threshold, t_value, streams in (
        ("hide", config.t_hide, _S_DELTA_THREAD_HIDE),
        ("delete", config.t_delete, _S_DELTA_THREAD_DELETE),
    ):
        table = _thread_unit_table(ds_base, t_value)
        c0_rows = table["c0_rows"]
        s = table["running_s"]
        u = _u_int_for_rows(ds_base, base, c0_rows)
        focal = Intervention.DELETE if threshold == "delete" else Intervention.HIDE
        treated, complier = _counterfactual_treatment(
            config, t_value, focal, s, u, table["c0_interventions"].astype(np.int64)
        )
        tau_c = getattr(config, f"tau_{threshold}_comments")
        tau_i = getattr(config, f"tau_{threshold}_interventions")
        plan = _plan_unit_deltas(_rng(seed, streams), len(s), tau_c, tau_i, config.tau_sd)
        unit_groups.append(
            {
                "scenario": "thread",
                "threshold": threshold,
                "threshold_value": t_value,
                "unit_ids": table["post_ids"],
                "c0_ids": table["c0_ids"],
                "running_s": s,
                "treated": treated,
                "complier": complier,
                "plan": plan,
                "t0": ds_base.timestamps[c0_rows],
                "delta_post": table["post_ids"],
                "delta_author": None,  # background authors
                "delta_ts_offset": 1,
            }
        )

    user_table = _user_unit_table(ds_base, config.t_hide, config.t_delete, 7)
    if len(user_table["c0_rows"]):
        c0_rows = user_table["c0_rows"]
        s = user_table["running_s"]
        u = _u_int_for_rows(ds_base, base, c0_rows)
        is_delete = user_table["is_delete"]
        treated = np.zeros(len(s), dtype=bool)
        complier = np.zeros(len(s), dtype=bool)
        plan = {}
        rng_user = _rng(seed, _S_DELTA_USER)
        for want_delete, threshold, t_value in (
            (True, "delete", config.t_delete),
            (False, "hide", config.t_hide),
        ):
            mask = is_delete == want_delete
            focal = Intervention.DELETE if want_delete else Intervention.HIDE
            tr, co = _counterfactual_treatment(
                config,
                t_value,
                focal,
                s[mask],
                u[mask],
                user_table["c0_interventions"][mask].astype(np.int64),
            )
            treated[mask] = tr
            complier[mask] = co
            tau_c = getattr(config, f"tau_{threshold}_comments")
            tau_i = getattr(config, f"tau_{threshold}_interventions")
            sub = _plan_unit_deltas(rng_user, int(mask.sum()), tau_c, tau_i, config.tau_sd)
            for key, values in sub.items():
                plan.setdefault(key, np.zeros(len(s), dtype=np.int64))[mask] = values
        author_ids = user_table["author_ids"]
        unit_groups.append(
            {
                "scenario": "user",
                "threshold": np.where(is_delete, "delete", "hide"),
                "threshold_value": np.where(is_delete, config.t_delete, config.t_hide),
                "unit_ids": author_ids,
                "c0_ids": user_table["c0_ids"],
                "running_s": s,
                "treated": treated,
                "complier": complier,
                "plan": plan,
                "t0": ds_base.timestamps[c0_rows],
                "delta_post": SINK_ROOT_ID_BASE + author_ids,
                "delta_author": author_ids,
                "delta_ts_offset": _USER_DELTA_OFFSET,
            }
        )

    # --- materialize adjustment comments for realized worlds ---
    delta_blocks = {"ids": [], "post": [], "author": [], "ts": [], "score": [], "interv": []}
    sink_users = []
    serial = 0
    total_events = 0
    event_specs = []
    for group in unit_groups:
        interv_n, plain_n = _realized_counts(group["plan"], group["treated"])
        group["realized_interv_deltas"] = interv_n
        group["realized_comment_deltas"] = interv_n + plain_n
        n_ev = interv_n + plain_n
        total = int(n_ev.sum())
        if total == 0:
            continue
        idx = np.flatnonzero(n_ev > 0)
        reps = n_ev[idx]
        unit_of_event = np.repeat(idx, reps)
        j = np.arange(unit_of_event.shape[0]) - np.repeat(
            np.concatenate(([0], np.cumsum(reps)[:-1])), reps
        )
        is_intervened = j < np.repeat(interv_n[idx], reps)
        ts = np.minimum(
            group["t0"][unit_of_event] + group["delta_ts_offset"] + _DELTA_SPACING * j,
            duration,
        ).astype(np.int64)
        post = np.asarray(group["delta_post"])[unit_of_event]
        if group["delta_author"] is None:
            author = BACKGROUND_AUTHOR_BASE + serial + np.arange(unit_of_event.shape[0], dtype=np.int64)
        else:
            author = np.asarray(group["delta_author"])[unit_of_event]
            sink_users.append(np.unique(author))
        ids = DELTA_ID_BASE + serial + np.arange(unit_of_event.shape[0], dtype=np.int64)
        serial += unit_of_event.shape[0]
        event_specs.append((ids, post, author, ts, is_intervened))
        total_events += unit_of_event.shape[0]

    if total_events:
        u_scores = _rng(seed, _S_DELTA_SCORES).random(total_events)
        offset = 0
        for ids, post, author, ts, is_intervened in event_specs:
            n = ids.shape[0]
            u = u_scores[offset : offset + n]
            offset += n
            score = np.where(
                is_intervened,
                hi_region[0] + u * (hi_region[1] - hi_region[0]),
                lo_region[0] + u * (lo_region[1] - lo_region[0]),
            )
            interv = np.where(is_intervened, int(Intervention.DELETE), int(Intervention.NONE)).astype(
                np.int8
            )
            delta_blocks["ids"].append(ids)
            delta_blocks["post"].append(post)
            delta_blocks["author"].append(author)
            delta_blocks["ts"].append(ts)
            delta_blocks["score"].append(score)
            delta_blocks["interv"].append(interv)

    if total_events:
        deltas = {
            "ids": np.concatenate(delta_blocks["ids"]),
            "post": np.concatenate(delta_blocks["post"]),
            "author": np.concatenate(delta_blocks["author"]),
            "ts": np.concatenate(delta_blocks["ts"]),
            "score": np.concatenate(delta_blocks["score"]),
            "interv": np.concatenate(delta_blocks["interv"]),
            "sink_users": np.unique(np.concatenate(sink_users)) if sink_users else np.array([], dtype=np.int64),
        }
    else:
        deltas = None

    ds_final = ds_base if deltas is None else _assemble_dataset(config, base, deltas)

    # --- ground truth: realized counts +- the unit's own adjustments ---
    gt_rows = {key: [] for key in (
        "scenario", "threshold", "threshold_value", "unit_ids", "c0_comment_ids", "running_s",
        "treated", "complier", "y_t_c", "y_u_c", "y_t_i", "y_u_i",
    )}

    for group in unit_groups:
        if group["scenario"] == "thread":
            table = _thread_unit_table(ds_final, group["threshold_value"])
            _check_alignment(group, table["post_ids"], table["c0_ids"])
            realized_c = table["fu_comments_all"]
            realized_i = table["fu_interventions_all"]
        else:
            table = _user_unit_table(ds_final, config.t_hide, config.t_delete, 7)
            keep_mask = _align_user_units(group, table)
            group = _mask_group(group, keep_mask)
            realized_c = table["fu_comments"]
            realized_i = table["fu_interventions"]

        plan = group["plan"]
        treated = group["treated"]
        own_c = group["realized_comment_deltas"]
        own_i = group["realized_interv_deltas"]
        y_t_c = realized_c - own_c + plan["comments_treated"]
        y_u_c = realized_c - own_c + plan["comments_untreated"]
        y_t_i = realized_i - own_i + plan["interv_treated"]
        y_u_i = realized_i - own_i + plan["interv_untreated"]

        n = len(group["unit_ids"])
        gt_rows["scenario"].append(np.full(n, group["scenario"]))
        thr = group["threshold"]
        gt_rows["threshold"].append(np.full(n, thr) if isinstance(thr, str) else thr)
        tv = group["threshold_value"]
        gt_rows["threshold_value"].append(np.full(n, tv) if np.isscalar(tv) else tv)
        gt_rows["unit_ids"].append(group["unit_ids"])
        gt_rows["c0_comment_ids"].append(group["c0_ids"])
        gt_rows["running_s"].append(group["running_s"])
        gt_rows["treated"].append(treated)
        gt_rows["complier"].append(group["complier"])
        gt_rows["y_t_c"].append(y_t_c)
        gt_rows["y_u_c"].append(y_u_c)
        gt_rows["y_t_i"].append(y_t_i)
        gt_rows["y_u_i"].append(y_u_i)

    def cat(key, dtype=None):
        if not gt_rows[key]:
            return np.array([], dtype=dtype or np.float64)
        out = np.concatenate(gt_rows[key])
        return out.astype(dtype) if dtype is not None else out

    truth = GroundTruth(
        scenario=cat("scenario"),
        threshold=cat("threshold"),
        threshold_value=cat("threshold_value", np.float64),
        unit_ids=cat("unit_ids", np.int64),
        c0_comment_ids=cat("c0_comment_ids", np.int64),
        running_s=cat("running_s", np.float64),
        treated=cat("treated", bool),
        complier=cat("complier", bool),
        y_treated_comments=cat("y_t_c", np.int64),
        y_untreated_comments=cat("y_u_c", np.int64),
        y_treated_interventions=cat("y_t_i", np.int64),
        y_untreated_interventions=cat("y_u_i", np.int64),
    )
    return ds_final, truth


def _u_int_for_rows(ds: Dataset, base: dict, rows: np.ndarray) -> np.ndarray:
    """Recover the intervention draw for base comments given dataset rows."""
    ids = ds.comment_ids[rows]
    if np.any(ids < COMMENT_ID_BASE) or np.any(ids >= SINK_ROOT_ID_BASE):
        raise ModfrdError("focal comment outside the base comment block")
    return base["u_int"][ids - COMMENT_ID_BASE]


def _check_alignment(group: dict, unit_ids: np.ndarray, c0_ids: np.ndarray) -> None:
    if unit_ids.shape != group["unit_ids"].shape or not (
        np.array_equal(unit_ids, group["unit_ids"]) and np.array_equal(c0_ids, group["c0_ids"])
    ):
        raise ModfrdError("unit selection drifted between planning and assembly")


def _align_user_units(group: dict, table: dict) -> np.ndarray:
    """User units planned on the base log vs counted on the final log.

    The final log never adds in-window comments, so the only legitimate
    difference is none at all; both passes apply the same horizon rule
    against the fixed sentinel timestamp.
    """
    if not (
        np.array_equal(table["author_ids"], group["unit_ids"])
        and np.array_equal(table["c0_ids"], group["c0_ids"])
    ):
        raise ModfrdError("user unit selection drifted between planning and assembly")
    return np.ones(len(group["unit_ids"]), dtype=bool)


def _mask_group(group: dict, mask: np.ndarray) -> dict:
    if mask.all():
        return group
    out = dict(group)
    for key in ("unit_ids", "c0_ids", "running_s", "treated", "complier",
                "realized_interv_deltas", "realized_comment_deltas", "t0"):
        out[key] = group[key][mask]
    out["plan"] = {k: v[mask] for k, v in group["plan"].items()}
    thr = group["threshold"]
    out["threshold"] = thr if isinstance(thr, str) else thr[mask]
    tv = group["threshold_value"]
    out["threshold_value"] = tv if np.isscalar(tv) else tv[mask]
    return out
