"""Compiled inner loop of the event-driven runner for ``loss(Z x) + reg/2 ||x||^2`` objectives.

Each block ``j`` keeps the products ``Z[:, block j] @ x_j`` of its retained
versions as rows of a shared pool ``buf``; ``vt[j]`` / ``vs[j]`` hold the time
stamps and pool slots of those versions, oldest first.  A stale view's margin is
the current margin corrected by the difference between old and newest rows of
the stale blocks only.
"""

import numpy as np
from numba import njit

# Reassociation lets the reductions vectorize; NaN/Inf semantics stay intact for
# the divergence check.
_FM = {"reassoc", "contract"}

SQUARED, LOGISTIC = 0, 1
KINDS = {"squared": SQUARED, "logistic": LOGISTIC}

CHUNK_DONE, HIT, GROW, DIVERGED, UNDERFLOW, MAX_STEPS = 0, 1, 2, 3, 4, 5

# istate slots
FREE_TOP, SINCE_REFRESH, LAST_PRUNE, N_EVENTS, N_OUT, N_TIMES = 0, 1, 2, 3, 4, 5
# fstate slots: value at the anchor plus the linear change since; a lower bound on f by convexity
LOWER = 0


@njit(cache=True, fastmath=_FM)
def linear_value(kind, margin, target, x, reg):
    N = margin.size
    acc = 0.0
    if kind == LOGISTIC:
        for s in range(N):
            a = margin[s]
            acc += max(a, 0.0) + np.log1p(np.exp(-abs(a))) - target[s] * a
        acc /= N
    else:
        for s in range(N):
            d = margin[s] - target[s]
            acc += 0.5 * d * d
    xx = 0.0
    for c in range(x.size):
        xx += x[c] * x[c]
    return acc + 0.5 * reg * xx


@njit(cache=True, fastmath=_FM)
def _loss_grad(kind, m, target, out):
    N = m.size
    if kind == LOGISTIC:
        for s in range(N):
            a = m[s]
            if a >= 0:
                p = 1.0 / (1.0 + np.exp(-a))
            else:
                e = np.exp(a)
                p = e / (1.0 + e)
            out[s] = (p - target[s]) / N
    else:
        for s in range(N):
            out[s] = m[s] - target[s]


@njit(cache=True, fastmath=_FM)
def contribution(ZT, lo, hi, x, out):
    out[:] = 0.0
    for c in range(lo, hi):
        xc = x[c]
        for s in range(out.size):
            out[s] += ZT[c, s] * xc


@njit(cache=True, fastmath=_FM)
def anchor_gradient(kind, margin, target, ZT, x, reg, r, out):
    """Full gradient ``Z^T loss'(margin) + reg x``."""
    _loss_grad(kind, margin, target, r)
    for c in range(x.size):
        acc = 0.0
        for s in range(r.size):
            acc += ZT[c, s] * r[s]
        out[c] = acc + reg * x[c]


@njit(cache=True, fastmath=_FM)
def _prune(t, B, buf_free, istate, vt, vs, vlen):
    oldest = t - B + 1
    for j in range(vlen.size):
        k = 0
        while k + 1 < vlen[j] and vt[j, k + 1] <= oldest:
            k += 1
        if k > 0:
            for q in range(k):
                buf_free[istate[FREE_TOP]] = vs[j, q]
                istate[FREE_TOP] += 1
            for q in range(vlen[j] - k):
                vt[j, q] = vt[j, q + k]
                vs[j, q] = vs[j, q + k]
            vlen[j] -= k
    istate[LAST_PRUNE] = t


@njit(cache=True, fastmath=_FM)
def run_events(ev_t, ev_p, ev_tau, pos, max_steps, threshold, f_star, divergence,
               kind, target, ZT, starts, stops, reg, gamma, B, refresh, record_every,
               x, margin, buf, buf_free, vt, vs, vlen, latest, istate, fstate, ga,
               out_t, out_gap):
    """Process events from index ``pos``; returns ``(status, next_pos)``.

    The objective is evaluated exactly every ``record_every`` event times and
    whenever the convexity lower bound ``fstate[LOWER]`` no longer rules out the
    threshold; in the second case the bound is re-anchored at the current point.
    """
    E = ev_t.size
    n = vlen.size
    N = margin.size
    R = vt.shape[1]
    maxblk = 0
    for j in range(n):
        maxblk = max(maxblk, stops[j] - starts[j])
    G = np.empty((n, maxblk))
    mview = np.empty(N)
    r = np.empty(N)
    cvec = np.empty(N)
    e = pos
    while e < E:
        t = ev_t[e]
        if t >= max_steps:
            return MAX_STEPS, e
        b = e
        while b < E and ev_t[b] == t:
            b += 1
        if t - istate[LAST_PRUNE] >= B:
            _prune(t, B, buf_free, istate, vt, vs, vlen)
        if istate[FREE_TOP] < b - e:
            return GROW, e
        for k in range(e, b):
            if vlen[ev_p[k]] >= R:
                return GROW, e

        for k in range(e, b):
            i = ev_p[k]
            mview[:] = margin
            for j in range(n):
                if j == i or ev_tau[k, j] >= latest[j]:
                    continue
                idx = vlen[j] - 1
                while idx >= 0 and vt[j, idx] > ev_tau[k, j]:
                    idx -= 1
                if idx < 0:
                    return UNDERFLOW, k
                old = vs[j, idx]
                cur = vs[j, vlen[j] - 1]
                for s in range(N):
                    mview[s] += buf[old, s] - buf[cur, s]
            _loss_grad(kind, mview, target, r)
            for c in range(starts[i], stops[i]):
                acc = 0.0
                for s in range(N):
                    acc += ZT[c, s] * r[s]
                G[k - e, c - starts[i]] = acc + reg * x[c]

        for k in range(e, b):
            i = ev_p[k]
            for c in range(starts[i], stops[i]):
                step = gamma * G[k - e, c - starts[i]]
                x[c] -= step
                fstate[LOWER] -= ga[c] * step
            contribution(ZT, starts[i], stops[i], x, cvec)
            cur = vs[i, vlen[i] - 1]
            for s in range(N):
                margin[s] += cvec[s] - buf[cur, s]
            istate[FREE_TOP] -= 1
            slot = buf_free[istate[FREE_TOP]]
            buf[slot, :] = cvec
            vt[i, vlen[i]] = t + 1
            vs[i, vlen[i]] = slot
            vlen[i] += 1
            latest[i] = t + 1
        istate[N_EVENTS] += b - e
        istate[SINCE_REFRESH] += b - e
        if istate[SINCE_REFRESH] >= refresh:
            # Rebuild the running margin from the newest rows to stop drift.
            margin[:] = 0.0
            for j in range(n):
                slot = vs[j, vlen[j] - 1]
                for s in range(N):
                    margin[s] += buf[slot, s]
            istate[SINCE_REFRESH] = 0

        istate[N_TIMES] += 1
        e = b
        # Rounding slack so a drifting bound never hides a true crossing.
        near = fstate[LOWER] - f_star <= threshold + 1e-9 * abs(threshold) + 1e-15
        if near or istate[N_TIMES] % record_every == 0:
            val = linear_value(kind, margin, target, x, reg)
            gap = val - f_star
            out_t[istate[N_OUT]] = t + 1
            out_gap[istate[N_OUT]] = gap
            istate[N_OUT] += 1
            if not np.isfinite(gap) or abs(gap) > divergence:
                return DIVERGED, e
            if gap <= threshold:
                return HIT, e
            if near:
                anchor_gradient(kind, margin, target, ZT, x, reg, r, ga)
                fstate[LOWER] = val
    return CHUNK_DONE, e
