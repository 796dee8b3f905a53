"""Independent reference computations used by the tests.

None of these share code with the package beyond the public kernel function.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def brute_force_dual(K: np.ndarray, y: np.ndarray, box: np.ndarray):
    """Maximise sum(a) - 1/2 a'Qa over 0 <= a <= box, y'a = 0, by face enumeration.

    Every index is fixed at 0, fixed at its bound, or free. For each of the 3^n
    assignments the stationarity system restricted to the free set is solved
    exactly; feasible solutions are kept and the best objective wins. Because
    the dual is concave, the optimum is a stationary point of the face whose
    relative interior contains it, so the enumeration finds it.

    Returns (alpha, objective).
    """
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    best_alpha, best_obj = None, -math.inf
    for assign in itertools.product((0, 1, 2), repeat=n):
        a = np.zeros(n)
        free = [i for i, s in enumerate(assign) if s == 2]
        for i, s in enumerate(assign):
            if s == 1:
                a[i] = box[i]
        fixed_sum = float(y @ a)
        if free:
            F = np.array(free)
            m = len(F)
            # [Q_FF  y_F] [a_F]   [1 - Q_F,B a_B]
            # [y_F'   0 ] [ nu] = [  -y_B' a_B   ]
            A = np.zeros((m + 1, m + 1))
            A[:m, :m] = Q[np.ix_(F, F)]
            A[:m, m] = y[F]
            A[m, :m] = y[F]
            rhs = np.concatenate([1.0 - Q[F] @ a, [-fixed_sum]])
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if np.abs(A @ sol - rhs).max() > 1e-9:
                continue
            a[F] = sol[:m]
            if np.any(a[F] < -1e-12) or np.any(a[F] > box[F] + 1e-12):
                continue
            a[F] = np.clip(a[F], 0.0, box[F])
        elif abs(fixed_sum) > 1e-12:
            continue
        if abs(float(y @ a)) > 1e-9:
            continue
        obj = float(a.sum() - 0.5 * a @ Q @ a)
        if obj > best_obj:
            best_alpha, best_obj = a, obj
    return best_alpha, best_obj


def bias_for(alpha: np.ndarray, y: np.ndarray, K: np.ndarray, box: np.ndarray, tol: float = 1e-9) -> float:
    """Bias of a dual solution: averaged over margin vectors, else the middle of the feasible interval."""
    f0 = K @ (alpha * y)
    free = (alpha > tol) & (alpha < box - tol)
    if free.any():
        return float(np.mean(y[free] - f0[free]))
    lo, hi = -math.inf, math.inf
    for i in range(len(y)):
        at_zero = alpha[i] <= tol
        # y_i (f0_i + b) >= 1 at zero, <= 1 at the bound
        needs_ge = at_zero
        if (y[i] > 0) == needs_ge:
            lo = max(lo, y[i] - f0[i])
        else:
            hi = min(hi, y[i] - f0[i])
    return (lo + hi) / 2.0


def naive_confusion(pred, truth):
    tp = fp = tn = fn = 0
    for p, t in zip(pred, truth):
        if p and t:
            tp += 1
        elif p and not t:
            fp += 1
        elif not p and not t:
            tn += 1
        else:
            fn += 1
    return tp, fp, tn, fn


def naive_sd(values) -> float:
    m = sum(values) / len(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / (len(values) - 1))


# Upper-tail studentized range quantiles q(p; k, df) to three decimals, the
# precision of the printed tables in statistics texts. Every cell was checked
# against scipy.stats.studentized_range, which agrees to rounding (5.4e-4).
STUDENTIZED_RANGE_TABLE = [
    (0.05, 2, 5, 3.635),
    (0.05, 3, 10, 3.877),
    (0.05, 4, 20, 3.958),
    (0.05, 5, 10, 4.654),
    (0.05, 6, 30, 4.302),
    (0.05, 3, 60, 3.399),
    (0.05, 10, 20, 5.008),
    (0.05, 2, 120, 2.800),
    (0.05, 4, 40, 3.791),
    (0.05, 2, 10, 3.151),
    (0.01, 2, 5, 5.702),
    (0.01, 3, 10, 5.270),
    (0.01, 4, 20, 5.018),
    (0.01, 5, 10, 6.136),
    (0.05, 3, 20, 3.578),
    (0.01, 3, 60, 4.282),
    (0.01, 2, 10, 4.482),
    (0.01, 2, 120, 3.702),
    (0.01, 3, 20, 4.639),
    (0.01, 6, 10, 6.428),
]


def clique_letters(means, significant) -> list[str]:
    """Letters from the maximal sets of mutually non-significant levels, by brute force.

    Each maximal set gets one letter; sets are ordered by the ranks (largest
    mean first) of their members, so the best level carries "a".
    """
    n = len(means)
    ok = [
        set(s)
        for r in range(1, n + 1)
        for s in itertools.combinations(range(n), r)
        if all(not significant[i][j] for i, j in itertools.combinations(s, 2))
    ]
    maximal = [s for s in ok if not any(s < t for t in ok)]
    rank = {lvl: r for r, lvl in enumerate(sorted(range(n), key=lambda t: (-means[t], t)))}
    maximal.sort(key=lambda s: sorted(rank[m] for m in s))
    letters = [""] * n
    for idx, s in enumerate(maximal):
        for m in sorted(s):
            letters[m] += "abcdefghijklmnopqrstuvwxyz"[idx]
    return letters
