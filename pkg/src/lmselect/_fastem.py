"""Compiled EM inner loop for time-homogeneous models.

The whole iterate (scaled forward-backward, expected counts, M-step,
convergence test) runs inside one numba kernel per start, which removes
the per-iteration dispatch overhead that dominates at these matrix sizes
(k <= a few states, T a handful of occasions).  The pure-numpy path in
`em` remains the reference implementation and handles the general
(time-heterogeneous) case; the two agree to floating rounding.

Ragged emission blocks are padded to the widest category count; the
padding is never indexed and stays zero through every update.
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    HAVE_NUMBA = False

# Status codes returned by the kernel.
MAX_ITER_REACHED = 0
CONVERGED = 1
ZERO_PROBABILITY = 2

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def em_loop(patterns, freq, cats, initial, trans, emis, max_iter, tol, occupancy_floor):
        """Run EM to convergence; all inputs are mutated copies owned here.

        Returns (initial, trans, emis, trace, n_trace, status, bad_pattern,
        fallbacks).  The trace holds the log-likelihood of the parameters
        entering each iteration; on ZERO_PROBABILITY, bad_pattern names the
        offending pattern index.
        """
        P, r, T = patterns.shape
        k = initial.shape[0]
        cmax = emis.shape[2]

        obs = np.empty((T, k))
        fwd = np.empty((T, k))
        bwd = np.empty((T, k))
        cs = np.empty(T)
        b0 = np.empty(k)
        btr = np.empty((k, k))
        aem = np.empty((r, k, cmax))
        trace = np.empty(max_iter + 1)

        prev = 0.0
        fallbacks = 0
        status = MAX_ITER_REACHED
        n_trace = 0

        for it in range(max_iter + 1):
            for u in range(k):
                b0[u] = 0.0
                for v in range(k):
                    btr[u, v] = 0.0
            for j in range(r):
                for u in range(k):
                    for y in range(cmax):
                        aem[j, u, y] = 0.0

            ll = 0.0
            for p in range(P):
                w = freq[p]
                for t in range(T):
                    for u in range(k):
                        prod = 1.0
                        for j in range(r):
                            prod *= emis[j, u, patterns[p, j, t]]
                        obs[t, u] = prod

                c = 0.0
                for u in range(k):
                    fwd[0, u] = initial[u] * obs[0, u]
                    c += fwd[0, u]
                if c <= 0.0:
                    return initial, trans, emis, trace, n_trace, ZERO_PROBABILITY, p, fallbacks
                cs[0] = c
                for u in range(k):
                    fwd[0, u] /= c
                ll_p = np.log(c)
                for t in range(1, T):
                    c = 0.0
                    for u in range(k):
                        s = 0.0
                        for v in range(k):
                            s += fwd[t - 1, v] * trans[v, u]
                        s *= obs[t, u]
                        fwd[t, u] = s
                        c += s
                    if c <= 0.0:
                        return initial, trans, emis, trace, n_trace, ZERO_PROBABILITY, p, fallbacks
                    cs[t] = c
                    for u in range(k):
                        fwd[t, u] /= c
                    ll_p += np.log(c)
                ll += w * ll_p

                for u in range(k):
                    bwd[T - 1, u] = 1.0
                for t in range(T - 2, -1, -1):
                    for v in range(k):
                        s = 0.0
                        for u in range(k):
                            s += trans[v, u] * obs[t + 1, u] * bwd[t + 1, u]
                        bwd[t, v] = s / cs[t + 1]

                for t in range(T):
                    for u in range(k):
                        g = w * fwd[t, u] * bwd[t, u]
                        if t == 0:
                            b0[u] += g
                        for j in range(r):
                            aem[j, u, patterns[p, j, t]] += g
                for t in range(1, T):
                    wc = w / cs[t]
                    for v in range(k):
                        for u in range(k):
                            btr[v, u] += (
                                wc * fwd[t - 1, v] * trans[v, u] * obs[t, u] * bwd[t, u]
                            )

            trace[it] = ll
            n_trace = it + 1
            if it > 0 and abs(ll - prev) / (1.0 + abs(ll)) < tol:
                status = CONVERGED
                break
            if it == max_iter:
                break
            prev = ll

            total = 0.0
            for u in range(k):
                total += b0[u]
            for u in range(k):
                initial[u] = b0[u] / total
            for v in range(k):
                rs = 0.0
                for u in range(k):
                    rs += btr[v, u]
                if rs < occupancy_floor:
                    fallbacks += 1
                    for u in range(k):
                        trans[v, u] = 1.0 / k
                else:
                    for u in range(k):
                        trans[v, u] = btr[v, u] / rs
            for j in range(r):
                c_j = cats[j]
                for u in range(k):
                    rs = 0.0
                    for y in range(c_j):
                        rs += aem[j, u, y]
                    if rs < occupancy_floor:
                        fallbacks += 1
                        for y in range(c_j):
                            emis[j, u, y] = 1.0 / c_j
                    else:
                        for y in range(c_j):
                            emis[j, u, y] = aem[j, u, y] / rs

        return initial, trans, emis, trace, n_trace, status, -1, fallbacks
