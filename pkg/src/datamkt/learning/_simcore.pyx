# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-round simulation loop.

Semantics must stay line-for-line equivalent to the pure-Python backend in
engine.py (same formulas, same evaluation order, same first-max tie rule),
so traces are bit-identical across backends.
"""
from libc.math cimport log, sqrt, fabs

import numpy as np


cdef inline double _radius(double log_horizon, long long pulls) nogil:
    return sqrt(12.0 * log_horizon / (pulls + 1.0))


def run_chunk(double lam, double alpha, double log_horizon,
              const signed char[::1] kinds,
              const long long[::1] scripted,
              const double[:, ::1] gain,
              const double[:, :, ::1] ext,
              const double[:, ::1] dgain,
              const double[:, :, ::1] dext,
              const double[:, ::1] eff,
              const long long[::1] pop,
              long long[:, ::1] counts,
              double[:, ::1] sums,
              unsigned char[:, ::1] active,
              const double[:, :, ::1] uniforms,
              const long long[:, ::1] rand_arms,
              int check_clean, int cover_every, int phase_t0,
              int[:, ::1] out_choice,
              double[:, ::1] out_gain,
              double[:, ::1] out_tx,
              double[:, ::1] out_util,
              double[:, ::1] out_obs,
              long long[:, ::1] out_pulls,
              int[:, ::1] out_active,
              int[:, ::1] out_act_mask):
    """Process one chunk of rounds in place. Returns a status bitfield:
    bit 0 = clean event held, bit 1 = cover invariant verified,
    bit 2 = a single activation failed to restore cover (fatal)."""
    cdef Py_ssize_t length = uniforms.shape[0]
    cdef int n = <int>kinds.shape[0]
    cdef int num = <int>gain.shape[1]
    cdef double kf = 0.0
    cdef int kbits = 0
    while (1 << kbits) < num:
        kbits += 1
    kf = <double>kbits

    scratch = np.empty((2, n, n), dtype=np.float64)
    cdef double[:, :, ::1] buf = scratch
    choice_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] choice = choice_arr

    cdef int clean_ok = 1, cover_ok = 1, fatal = 0
    cdef Py_ssize_t t
    cdef int i, j, m, a, code, best_m, covered, uncovered_m, n_active
    cdef long long cnt
    cdef double r, mean, ucb, best, d, g_s, suffered, caused, tx, obs, fresh

    for t in range(length):
        # --- selection -----------------------------------------------------
        for i in range(n):
            code = kinds[i]
            out_act_mask[t, i] = -1
            if code == 0:
                uncovered_m = -1
                for m in range(num):
                    covered = 0
                    for a in range(num):
                        if active[i, a]:
                            d = pop[m ^ a] / kf
                            if lam * d <= _radius(log_horizon, counts[i, a]):
                                covered = 1
                                break
                    if not covered:
                        uncovered_m = m
                        break
                if uncovered_m >= 0:
                    active[i, uncovered_m] = 1
                    out_act_mask[t, i] = uncovered_m
                    fresh = sqrt(12.0 * log_horizon)
                    if fresh < lam:
                        fatal = 1
                if cover_every > 0 and (phase_t0 + <int>t) % cover_every == 0:
                    for m in range(num):
                        covered = 0
                        for a in range(num):
                            if active[i, a]:
                                d = pop[m ^ a] / kf
                                if lam * d <= _radius(log_horizon, counts[i, a]):
                                    covered = 1
                                    break
                        if not covered:
                            cover_ok = 0
                            break
                best = 0.0
                best_m = -1
                for m in range(num):
                    if active[i, m]:
                        cnt = counts[i, m]
                        mean = sums[i, m] / cnt if cnt > 0 else 0.0
                        ucb = mean + 2.0 * _radius(log_horizon, cnt)
                        if best_m < 0 or ucb > best:
                            best = ucb
                            best_m = m
                choice[i] = best_m
            elif code == 1:
                best = 0.0
                best_m = -1
                for m in range(num):
                    cnt = counts[i, m]
                    mean = sums[i, m] / cnt if cnt > 0 else 0.0
                    ucb = mean + 2.0 * _radius(log_horizon, cnt)
                    if best_m < 0 or ucb > best:
                        best = ucb
                        best_m = m
                choice[i] = best_m
            elif code == 2:
                choice[i] = scripted[i]
            else:
                choice[i] = rand_arms[i, t]

        # --- sampling ------------------------------------------------------
        for i in range(n):
            m = <int>choice[i]
            buf[0, 0, i] = gain[i, m] + dgain[i, m] * (2.0 * uniforms[t, i, i] - 1.0)
        for i in range(n):
            for j in range(n):
                if i == j:
                    buf[1, i, j] = 0.0
                else:
                    m = <int>choice[j]
                    buf[1, i, j] = (ext[i, j, m]
                                    + dext[i, j, m] * (2.0 * uniforms[t, i, j] - 1.0))

        # --- settlement and updates ----------------------------------------
        for i in range(n):
            suffered = 0.0
            caused = 0.0
            for j in range(n):
                suffered += buf[1, i, j]
                caused += buf[1, j, i]
            g_s = buf[0, 0, i]
            tx = alpha * (caused - suffered)
            obs = g_s - alpha * caused
            m = <int>choice[i]
            code = kinds[i]
            counts[i, m] += 1
            if code <= 1:
                sums[i, m] += obs
            if code == 0:
                n_active = 0
                for a in range(num):
                    if active[i, a]:
                        n_active += 1
            elif code == 1 or code == 3:
                n_active = num
            else:
                n_active = 1
            out_choice[t, i] = m
            out_gain[t, i] = g_s
            out_tx[t, i] = tx
            out_util[t, i] = g_s - suffered - tx
            out_obs[t, i] = obs
            out_pulls[t, i] = counts[i, m]
            out_active[t, i] = n_active

        # --- clean-event check ---------------------------------------------
        if check_clean:
            for i in range(n):
                code = kinds[i]
                if code > 1:
                    continue
                for m in range(num):
                    if code == 0 and not active[i, m]:
                        continue
                    cnt = counts[i, m]
                    mean = sums[i, m] / cnt if cnt > 0 else 0.0
                    if fabs(mean - eff[i, m]) > _radius(log_horizon, cnt):
                        clean_ok = 0
                        break

    return clean_ok | (cover_ok << 1) | (fatal << 2)
