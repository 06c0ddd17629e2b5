"""Pure-Python reference implementations of the sequential log-generation kernels.

These walk the synthetic comment stream carrying per-thread contagion state
and per-user offense/suspension state. The compiled twin in _speed.pyx must
stay bit-identical: both consume pre-drawn randomness arrays and perform the
same float operations in the same order.
"""

from __future__ import annotations

import math

import numpy as np

COMPILED = False


def score_walk(
    thread_idx,
    user_idx,
    ts,
    comp_scores,
    u_comp,
    u_int,
    weights,
    toxic,
    contagion,
    t_hide,
    t_delete,
    f0_hide,
    f1_hide,
    f0_delete,
    f1_delete,
    window,
    suspension_seconds,
    n_threads,
    n_users,
):
    """Single global-time pass: contagion-tilted score draw, incremental
    intervention, and offense/suspension bookkeeping.

    Comments arriving inside their author's suspension window are dropped
    and consume no contagion state. Only deletions of comments scored
    outside both cutoff windows count toward offenses.
    """
    n = len(ts)
    k_comps = comp_scores.shape[1]
    scores = np.zeros(n, dtype=np.float64)
    interv = np.zeros(n, dtype=np.int8)
    keep = np.zeros(n, dtype=bool)
    prior = np.zeros(n, dtype=bool)
    counted = np.zeros(n, dtype=bool)

    accum = [0.0] * n_threads
    offenses = [0] * n_users
    susp_end = [np.iinfo(np.int64).min] * n_users

    for i in range(n):
        u = user_idx[i]
        if ts[i] < susp_end[u]:
            continue
        th = thread_idx[i]
        lam = 1.0 - math.exp(-contagion * accum[th]) if contagion > 0.0 else 0.0
        cum = 0.0
        pick = k_comps - 1
        uc = u_comp[i]
        for k in range(k_comps):
            cum += (1.0 - lam) * weights[k]
            if k == toxic:
                cum += lam
            if uc < cum:
                pick = k
                break
        s = comp_scores[i, pick]
        scores[i] = s
        accum[th] += s

        p_d = f1_delete if s >= t_delete else f0_delete
        ui = u_int[i]
        if ui < p_d:
            code = 2
        else:
            p_h = f1_hide if s >= t_hide else f0_hide
            if p_d < 1.0 and (ui - p_d) / (1.0 - p_d) < p_h:
                code = 1
            else:
                code = 0
        interv[i] = code
        keep[i] = True
        prior[i] = offenses[u] >= 1
        if code == 2 and abs(s - t_hide) > window and abs(s - t_delete) > window:
            counted[i] = True
            offenses[u] += 1
            if offenses[u] >= 2:
                susp_end[u] = ts[i] + suspension_seconds
    return scores, interv, keep, prior, counted


def moderation_pass(ts, user_starts, eligible, suspension_seconds):
    """Offense/suspension pass for user-contiguous, time-ordered comments.

    Used when contagion is zero and scores/interventions were drawn
    vectorized ahead of time; a dropped comment's would-be deletion never
    counts.
    """
    n = len(ts)
    keep = np.zeros(n, dtype=bool)
    prior = np.zeros(n, dtype=bool)
    counted = np.zeros(n, dtype=bool)
    for g in range(len(user_starts) - 1):
        offenses = 0
        susp_end = np.iinfo(np.int64).min
        for i in range(user_starts[g], user_starts[g + 1]):
            if ts[i] < susp_end:
                continue
            keep[i] = True
            prior[i] = offenses >= 1
            if eligible[i]:
                counted[i] = True
                offenses += 1
                if offenses >= 2:
                    susp_end = ts[i] + suspension_seconds
    return keep, prior, counted
