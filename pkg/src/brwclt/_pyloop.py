"""Pure-Python event loop; same algorithm and draw order as ``_core``.

Given the same bit generator state it produces bit-identical trajectories,
which is what the backend-equivalence tests rely on.
"""

import numpy as np

JUMP_IN, JUMP_OUT, BIRTH, DEATH = 0, 1, 2, 3


def run_events(bit_generator, pos_in, n, counts, nbr, alias_prob, alias_idx,
               sig_table, slope, c, origin, horizon, max_events, rate_cap):
    gen = np.random.Generator(bit_generator)
    exp_draw = gen.standard_exponential
    unif = gen.random
    pos = [int(p) for p in pos_in[:n]]
    cnt = counts  # mutated in place, numpy int32
    table = [float(v) for v in sig_table]
    K = len(table) - 1
    aprob = [float(v) for v in alias_prob]
    aidx = [int(v) for v in alias_idx]
    J = len(aprob)
    Jd = float(J)
    nbr_rows = nbr.tolist()
    onepc = 1.0 + c
    log_t, log_k, log_c = [], [], []
    t = 0.0
    events = 0
    status = 0
    while True:
        if n == 0:
            break
        R = n * onepc
        if R > rate_cap:
            status = 2
            break
        dt = exp_draw() / R
        if t + dt >= horizon:
            t = horizon
            break
        t = t + dt
        events += 1
        if events > max_events:
            status = 1
            break
        u1 = unif() * n
        i = int(u1)
        w = (u1 - i) * onepc
        s = pos[i]
        kind = -1
        if w < 1.0:
            f = w * Jd
            j = int(f)
            if f - j >= aprob[j]:
                j = aidx[j]
            dest = nbr_rows[s][j]
            if dest != s:
                pos[i] = dest
                cnt[s] -= 1
                cnt[dest] += 1
                if s == origin:
                    kind = JUMP_OUT
                elif dest == origin:
                    kind = JUMP_IN
        else:
            k = int(cnt[s])
            sig = table[k] if k <= K else table[K] + slope * (k - K)
            z = (w - 1.0) * k
            if z < sig:
                if z < 0.5 * sig:
                    pos.append(s)
                    n += 1
                    cnt[s] += 1
                    if s == origin:
                        kind = BIRTH
                else:
                    pos[i] = pos[n - 1]
                    pos.pop()
                    n -= 1
                    cnt[s] -= 1
                    if s == origin:
                        kind = DEATH
        if kind >= 0:
            log_t.append(t)
            log_k.append(kind)
            log_c.append(int(cnt[origin]))
    pos_arr = np.array(pos, dtype=np.int32)
    return (pos_arr, n, events, status, np.array(log_t, dtype=np.float64),
            np.array(log_k, dtype=np.int8), np.array(log_c, dtype=np.int32), t)
