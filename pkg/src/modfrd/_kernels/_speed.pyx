# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the sequential log-generation kernels.

Must remain bit-identical to _pure.py: same inputs, same float operation
order, no internal randomness.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

COMPILED = True

INT64_MIN = np.iinfo(np.int64).min


def score_walk(
    cnp.int64_t[::1] thread_idx,
    cnp.int64_t[::1] user_idx,
    cnp.int64_t[::1] ts,
    cnp.float64_t[:, ::1] comp_scores,
    cnp.float64_t[::1] u_comp,
    cnp.float64_t[::1] u_int,
    cnp.float64_t[::1] weights,
    long toxic,
    double contagion,
    double t_hide,
    double t_delete,
    double f0_hide,
    double f1_hide,
    double f0_delete,
    double f1_delete,
    double window,
    long long suspension_seconds,
    long n_threads,
    long n_users,
):
    cdef Py_ssize_t n = ts.shape[0]
    cdef Py_ssize_t k_comps = comp_scores.shape[1]
    scores_arr = np.zeros(n, dtype=np.float64)
    interv_arr = np.zeros(n, dtype=np.int8)
    keep_arr = np.zeros(n, dtype=np.uint8)
    prior_arr = np.zeros(n, dtype=np.uint8)
    counted_arr = np.zeros(n, dtype=np.uint8)
    accum_arr = np.zeros(n_threads, dtype=np.float64)
    offenses_arr = np.zeros(n_users, dtype=np.int64)
    susp_arr = np.full(n_users, INT64_MIN, dtype=np.int64)

    cdef cnp.float64_t[::1] scores = scores_arr
    cdef cnp.int8_t[::1] interv = interv_arr
    cdef cnp.uint8_t[::1] keep = keep_arr
    cdef cnp.uint8_t[::1] prior = prior_arr
    cdef cnp.uint8_t[::1] counted = counted_arr
    cdef cnp.float64_t[::1] accum = accum_arr
    cdef cnp.int64_t[::1] offenses = offenses_arr
    cdef cnp.int64_t[::1] susp_end = susp_arr

    cdef Py_ssize_t i, k, pick, u, th
    cdef double lam, cum, uc, ui, s, p_d, p_h
    cdef int code

    for i in range(n):
        u = user_idx[i]
        if ts[i] < susp_end[u]:
            continue
        th = thread_idx[i]
        lam = 1.0 - exp(-contagion * accum[th]) if contagion > 0.0 else 0.0
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
        keep[i] = 1
        prior[i] = 1 if offenses[u] >= 1 else 0
        if code == 2 and fabs(s - t_hide) > window and fabs(s - t_delete) > window:
            counted[i] = 1
            offenses[u] += 1
            if offenses[u] >= 2:
                susp_end[u] = ts[i] + suspension_seconds
    return (
        scores_arr,
        interv_arr,
        keep_arr.view(bool),
        prior_arr.view(bool),
        counted_arr.view(bool),
    )


def moderation_pass(
    cnp.int64_t[::1] ts,
    cnp.int64_t[::1] user_starts,
    cnp.uint8_t[::1] eligible,
    long long suspension_seconds,
):
    cdef Py_ssize_t n = ts.shape[0]
    keep_arr = np.zeros(n, dtype=np.uint8)
    prior_arr = np.zeros(n, dtype=np.uint8)
    counted_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] keep = keep_arr
    cdef cnp.uint8_t[::1] prior = prior_arr
    cdef cnp.uint8_t[::1] counted = counted_arr

    cdef Py_ssize_t g, i
    cdef long long offenses, susp_end
    cdef long long int64_min = INT64_MIN

    for g in range(user_starts.shape[0] - 1):
        offenses = 0
        susp_end = int64_min
        for i in range(user_starts[g], user_starts[g + 1]):
            if ts[i] < susp_end:
                continue
            keep[i] = 1
            prior[i] = 1 if offenses >= 1 else 0
            if eligible[i]:
                counted[i] = 1
                offenses += 1
                if offenses >= 2:
                    susp_end = ts[i] + suspension_seconds
    return keep_arr.view(bool), prior_arr.view(bool), counted_arr.view(bool)
