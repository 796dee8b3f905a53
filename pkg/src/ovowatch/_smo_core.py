"""Compiled inner loop of the SMO solver.

Kernel rows live in a small least-recently-used cache instead of a full Gram
matrix, which would not fit in memory for a few thousand patterns.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LINEAR, POLY, RBF = 0, 1, 2
TAU = 1e-12
CACHE_ROWS = 256
SNAP = 1e-12  # relative distance at which a dual variable counts as on its bound


@njit(cache=True)
def _ipow(base, degree):
    out = 1.0
    for _ in range(degree):
        out *= base
    return out


@njit(cache=True, inline="always")
def _snap(a, c):
    if a <= SNAP * c:
        return 0.0
    if a >= c - SNAP * c:
        return c
    return a


@njit(cache=True)
def kernel_row(XT, i, kind, gamma, degree, offset, out):
    """Row ``i`` of the kernel matrix from feature-major data ``XT`` (features x patterns).

    Accumulating one feature at a time over all patterns keeps the inner loop
    contiguous so it vectorises.
    """
    n = XT.shape[1]
    out[:] = 0.0
    for f in range(XT.shape[0]):
        xf = XT[f, i]
        row = XT[f]
        if kind == RBF:
            for k in range(n):
                t = xf - row[k]
                out[k] += t * t
        else:
            for k in range(n):
                out[k] += xf * row[k]
    if kind == RBF:
        for k in range(n):
            out[k] = math.exp(-gamma * out[k])
    elif kind == POLY:
        for k in range(n):
            out[k] = _ipow(out[k] + offset, degree)


@njit(cache=True)
def _slot(i, slot_of, owner, stamp, clock):
    """Cache slot for row ``i``; returns (slot, hit). On a miss the least recently used slot is claimed."""
    s = slot_of[i]
    hit = s >= 0
    if not hit:
        s = 0
        for t in range(1, stamp.shape[0]):
            if stamp[t] < stamp[s]:
                s = t
        if owner[s] >= 0:
            slot_of[owner[s]] = -1
        owner[s] = i
        slot_of[i] = s
    stamp[s] = clock
    return s, hit


@njit(cache=True)
def solve(X, y, C, kind, gamma, degree, offset, eps, max_iter, trace):
    """Returns (alpha, G, iterations, converged); ``trace`` receives the objective per step."""
    n = X.shape[0]
    XT = np.ascontiguousarray(X.T)
    alpha = np.zeros(n)
    G = -np.ones(n)
    diag = np.empty(n)
    for k in range(n):
        if kind == RBF:
            diag[k] = 1.0
        else:
            acc = 0.0
            for f in range(X.shape[1]):
                acc += X[k, f] * X[k, f]
            diag[k] = _ipow(acc + offset, degree) if kind == POLY else acc
    n_slots = min(CACHE_ROWS, n)
    rows = np.empty((n_slots, n))
    slot_of = -np.ones(n, dtype=np.int64)
    owner = -np.ones(n_slots, dtype=np.int64)
    stamp = -np.ones(n_slots, dtype=np.int64)
    up = np.empty(n, dtype=np.bool_)
    low = np.empty(n, dtype=np.bool_)
    for k in range(n):
        up[k] = y[k] > 0  # alpha = 0: positives may grow, negatives may not shrink
        low[k] = y[k] < 0
    record = trace.shape[0] > 0
    if record:
        trace[0] = 0.0
    # the first maximal violating pair scan; later scans are fused with the gradient update
    i = -1
    m = -np.inf
    vmin = np.inf
    for k in range(n):
        v = -y[k] * G[k]
        if up[k] and v > m:
            m = v
            i = k
        if low[k] and v < vmin:
            vmin = v
    it = 0
    converged = False
    while it < max_iter:
        if m - vmin < eps:
            converged = True
            break
        # second-order choice of j
        si, hit = _slot(i, slot_of, owner, stamp, 2 * it)
        Ki = rows[si]
        j = -1
        best = np.inf
        if not hit:
            kernel_row(XT, i, kind, gamma, degree, offset, Ki)
        for k in range(n):
            if not low[k]:
                continue
            diff = m + y[k] * G[k]
            if diff <= 0:
                continue
            quad = diag[i] + diag[k] - 2.0 * Ki[k]
            if quad <= 0:
                quad = TAU
            score = -(diff * diff) / quad
            if score < best:
                best = score
                j = k
        sj, hit = _slot(j, slot_of, owner, stamp, 2 * it + 1)
        Kj = rows[sj]
        if not hit:
            kernel_row(XT, j, kind, gamma, degree, offset, Kj)
        quad = diag[i] + diag[j] - 2.0 * Ki[j]
        if quad <= 0:
            quad = TAU
        lam = (m + y[j] * G[j]) / quad
        room_i = C[i] - alpha[i] if y[i] > 0 else alpha[i]
        room_j = alpha[j] if y[j] > 0 else C[j] - alpha[j]
        lam = min(lam, room_i, room_j)
        old_i = alpha[i]
        old_j = alpha[j]
        # land exactly on a bound when the step is clipped by it or ends within rounding of it
        if lam == room_i:
            alpha[i] = C[i] if y[i] > 0 else 0.0
        else:
            alpha[i] = _snap(alpha[i] + y[i] * lam, C[i])
        if lam == room_j:
            alpha[j] = 0.0 if y[j] > 0 else C[j]
        else:
            alpha[j] = _snap(alpha[j] - y[j] * lam, C[j])
        # the gradient follows the steps actually taken, snapping included
        di = y[i] * (alpha[i] - old_i)
        dj = y[j] * (alpha[j] - old_j)
        for t in (i, j):
            up[t] = alpha[t] < C[t] if y[t] > 0 else alpha[t] > 0
            low[t] = alpha[t] > 0 if y[t] > 0 else alpha[t] < C[t]
        # gradient update fused with the next maximal violating pair scan
        i = -1
        m = -np.inf
        vmin = np.inf
        for k in range(n):
            G[k] += y[k] * (di * Ki[k] + dj * Kj[k])
            v = -y[k] * G[k]
            if up[k] and v > m:
                m = v
                i = k
            if low[k] and v < vmin:
                vmin = v
        it += 1
        if record:
            obj = 0.0
            for k in range(n):
                obj += alpha[k] * (G[k] - 1.0)
            trace[it] = -0.5 * obj
    return alpha, G, it, converged
