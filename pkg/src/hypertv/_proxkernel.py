"""Jitted primal-dual kernel for the hypergraph TV proximal operator.

The pure-numpy path in diffusion.py is overhead-bound for small hyperedges,
so the hot loop lives here; diffusion.py falls back to numpy when numba is
unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


@njit(cache=True)
def _project_edge(y, e, card, cap, scratch):
    """Alternating projection of one dual edge vector onto
    {sum = 0} ∩ {sum of positives <= cap}, in place."""
    for _ in range(200):
        change = 0.0
        mean = 0.0
        for s in range(card):
            mean += y[e, s]
        mean /= card
        for s in range(card):
            y[e, s] -= mean
            if abs(mean) > change:
                change = abs(mean)
        possum = 0.0
        for s in range(card):
            if y[e, s] > 0.0:
                possum += y[e, s]
        if possum > cap:
            npos = 0
            for s in range(card):
                if y[e, s] > 0.0:
                    scratch[npos] = y[e, s]
                    npos += 1
            # insertion sort, descending; cardinalities are tiny
            for i in range(1, npos):
                v = scratch[i]
                j = i - 1
                while j >= 0 and scratch[j] < v:
                    scratch[j + 1] = scratch[j]
                    j -= 1
                scratch[j + 1] = v
            cum = 0.0
            lam = 0.0
            for j in range(npos):
                cum += scratch[j]
                cand = (cum - cap) / (j + 1)
                if scratch[j] > cand:
                    lam = cand
            for s in range(card):
                if y[e, s] > 0.0:
                    v = y[e, s] - lam
                    if v < 0.0:
                        v = 0.0
                    if abs(y[e, s] - v) > change:
                        change = abs(y[e, s] - v)
                    y[e, s] = v
        if change < 1e-14:
            break
    # finish on an exact zero sum so the dual objective bound stays valid
    mean = 0.0
    for s in range(card):
        mean += y[e, s]
    mean /= card
    for s in range(card):
        y[e, s] -= mean


@njit(cache=True)
def prox_kernel(idx, card, w, z, t, tau, sigma, max_iters, gap_tol, y0):
    """Primal-dual solve of min_x 0.5||x-z||^2 + t * sum_e w_e (max-min)_e.

    Returns (x, y, gap, converged_flag, iterations)."""
    n = z.shape[0]
    m, cmax = idx.shape
    scratch = np.empty(cmax)
    y = y0.copy()
    for e in range(m):
        _project_edge(y, e, card[e], t * w[e], scratch)
    x = z.copy()
    for e in range(m):
        for s in range(card[e]):
            x[idx[e, s]] -= y[e, s]
    xbar = x.copy()
    kty = np.zeros(n)
    gap = np.inf
    it = 0
    for it in range(max_iters):
        for e in range(m):
            cap = t * w[e]
            for s in range(card[e]):
                y[e, s] += sigma * xbar[idx[e, s]]
            _project_edge(y, e, card[e], cap, scratch)
        for i in range(n):
            kty[i] = 0.0
        for e in range(m):
            for s in range(card[e]):
                kty[idx[e, s]] += y[e, s]
        for i in range(n):
            x_new = (x[i] - tau * kty[i] + tau * z[i]) / (1.0 + tau)
            xbar[i] = 2.0 * x_new - x[i]
            x[i] = x_new
        if it % 5 == 4 or it == max_iters - 1:
            # the zero-sum finish of the projection can leave the positive
            # cap slightly violated; rescale to feasibility (keeps the zero
            # sum) so the dual objective is a true lower bound
            rescaled = False
            for e in range(m):
                cap = t * w[e]
                possum = 0.0
                for s in range(card[e]):
                    if y[e, s] > 0.0:
                        possum += y[e, s]
                if possum > cap:
                    fac = cap / possum
                    for s in range(card[e]):
                        y[e, s] *= fac
                    rescaled = True
            if rescaled:
                for i in range(n):
                    kty[i] = 0.0
                for e in range(m):
                    for s in range(card[e]):
                        kty[idx[e, s]] += y[e, s]
            primal = 0.0
            for i in range(n):
                primal += 0.5 * (x[i] - z[i]) ** 2
            for e in range(m):
                hi = x[idx[e, 0]]
                lo = hi
                for s in range(1, card[e]):
                    v = x[idx[e, s]]
                    if v > hi:
                        hi = v
                    if v < lo:
                        lo = v
                primal += t * w[e] * (hi - lo)
            dual = 0.0
            for i in range(n):
                dual += kty[i] * z[i] - 0.5 * kty[i] * kty[i]
            gap = primal - dual
            bound = abs(primal)
            if bound < 1.0:
                bound = 1.0
            if gap <= gap_tol * bound:
                return x, y, gap, True, it + 1
    return x, y, gap, False, it + 1
