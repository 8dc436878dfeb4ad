# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled event loop for the torus branching random walk.

Draw order per event (shared with ``_pyloop``): one standard exponential
(waiting time) and one uniform ``u``; ``u * n`` picks the particle by its
integer part and the event type (and alias slot for jumps) by its
fractional part.
"""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_exponential

cnp.import_array()

cdef enum:
    JUMP_IN = 0
    JUMP_OUT = 1
    BIRTH = 2
    DEATH = 3


def run_events(object bit_generator, cnp.int32_t[::1] pos_in, long n,
               cnp.int32_t[::1] counts, const cnp.int32_t[:, ::1] nbr,
               const double[::1] alias_prob, const cnp.int32_t[::1] alias_idx,
               const double[::1] sig_table, double slope, double c, long origin,
               double horizon, long long max_events, double rate_cap):
    """Advance the configuration to ``horizon``.

    Returns ``(pos, n, events, status, log_t, log_kind, log_count, t_end)``;
    status 0 = reached horizon or extinction, 1 = event cap, 2 = rate cap.
    ``counts`` is updated in place; ``pos`` may be reallocated.
    """
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")
    cdef long J = alias_prob.shape[0]
    cdef double Jd = <double> J
    cdef long cap = pos_in.shape[0]
    pos_arr = np.asarray(pos_in)
    cdef cnp.int32_t[::1] pos_view = pos_arr
    cdef cnp.int32_t *pos = &pos_view[0]
    cdef cnp.int32_t *cnt = &counts[0]
    cdef const cnp.int32_t *nb = &nbr[0, 0]
    cdef const double *aprob = &alias_prob[0]
    cdef const cnp.int32_t *aidx = &alias_idx[0]
    cdef const double *tab = &sig_table[0]
    cdef long K = sig_table.shape[0] - 1
    cdef long log_cap = 1024
    log_t_arr = np.empty(log_cap, dtype=np.float64)
    log_k_arr = np.empty(log_cap, dtype=np.int8)
    log_c_arr = np.empty(log_cap, dtype=np.int32)
    cdef double[::1] log_t = log_t_arr
    cdef cnp.int8_t[::1] log_k = log_k_arr
    cdef cnp.int32_t[::1] log_c = log_c_arr
    cdef long n_log = 0
    cdef double t = 0.0, dt, R, u1, w, z, sig, f
    cdef double onepc = 1.0 + c
    cdef long long events = 0
    cdef int status = 0
    cdef long i, j, s, dest, k
    cdef int kind

    with bit_generator.lock:
        while True:
            if n == 0:
                break
            R = n * onepc
            if R > rate_cap:
                status = 2
                break
            dt = random_standard_exponential(rng) / R
            if t + dt >= horizon:
                t = horizon
                break
            t = t + dt
            events += 1
            if events > max_events:
                status = 1
                break
            u1 = rng.next_double(rng.state) * n
            i = <long> u1
            w = (u1 - i) * onepc
            s = pos[i]
            kind = -1
            if w < 1.0:
                f = w * Jd
                j = <long> f
                if f - j >= aprob[j]:
                    j = aidx[j]
                dest = nb[s * J + j]
                if dest != s:
                    pos[i] = <cnp.int32_t> dest
                    cnt[s] -= 1
                    cnt[dest] += 1
                    if s == origin:
                        kind = JUMP_OUT
                    elif dest == origin:
                        kind = JUMP_IN
            else:
                k = cnt[s]
                if k <= K:
                    sig = tab[k]
                else:
                    sig = tab[K] + slope * (k - K)
                z = (w - 1.0) * k
                if z < sig:
                    if z < 0.5 * sig:
                        if n == cap:
                            cap *= 2
                            new_arr = np.empty(cap, dtype=np.int32)
                            new_arr[:n] = pos_arr[:n]
                            pos_arr = new_arr
                            pos_view = pos_arr
                            pos = &pos_view[0]
                        pos[n] = <cnp.int32_t> s
                        n += 1
                        cnt[s] += 1
                        if s == origin:
                            kind = BIRTH
                    else:
                        pos[i] = pos[n - 1]
                        n -= 1
                        cnt[s] -= 1
                        if s == origin:
                            kind = DEATH
            if kind >= 0:
                if n_log == log_cap:
                    log_cap *= 2
                    log_t_arr = np.resize(log_t_arr, log_cap)
                    log_k_arr = np.resize(log_k_arr, log_cap)
                    log_c_arr = np.resize(log_c_arr, log_cap)
                    log_t = log_t_arr
                    log_k = log_k_arr
                    log_c = log_c_arr
                log_t[n_log] = t
                log_k[n_log] = kind
                log_c[n_log] = cnt[origin]
                n_log += 1

    return (pos_arr, n, events, status, log_t_arr[:n_log].copy(),
            log_k_arr[:n_log].copy(), log_c_arr[:n_log].copy(), t)
