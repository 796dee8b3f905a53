"""One-way ANOVA, Tukey-Kramer HSD and compact letter displays."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import fdtrc, ndtr

# Gauss-Legendre panels for the studentized range integrals
_INNER_PANELS = 24
_OUTER_PANELS = 24
_NODES = 16


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class GroupSample:
    label: str
    observations: Sequence[float]


@dataclass(frozen=True)
class AnovaResult:
    f: float
    df_between: int
    df_within: int
    p: float
    ms_within: float


@dataclass(frozen=True)
class TukeyGrouping:
    labels: list[str]
    means: list[float]
    significant: np.ndarray  # bool matrix, symmetric, False on the diagonal
    letters: list[str]
    q_crit: float


def _check_groups(groups: Sequence[GroupSample]) -> list[np.ndarray]:
    if len(groups) < 2:
        raise StatsError("need at least two groups")
    arrays = [np.asarray(g.observations, dtype=float) for g in groups]
    for g, a in zip(groups, arrays):
        if a.size < 2:
            raise StatsError(f"group {g.label!r} has fewer than two observations")
    return arrays


def one_way_anova(groups: Sequence[GroupSample]) -> AnovaResult:
    arrays = _check_groups(groups)
    n_total = sum(a.size for a in arrays)
    grand = np.concatenate(arrays).mean()
    ss_between = sum(a.size * (a.mean() - grand) ** 2 for a in arrays)
    ss_within = sum(((a - a.mean()) ** 2).sum() for a in arrays)
    df_b = len(arrays) - 1
    df_w = n_total - len(arrays)
    ms_b = ss_between / df_b
    ms_w = ss_within / df_w
    if ms_w == 0.0:
        if ms_b == 0.0:
            return AnovaResult(math.nan, df_b, df_w, 1.0, ms_w)
        return AnovaResult(math.inf, df_b, df_w, 0.0, ms_w)
    f = ms_b / ms_w
    return AnovaResult(float(f), df_b, df_w, float(fdtrc(df_b, df_w, f)), float(ms_w))


@lru_cache(maxsize=None)
def _gauss_legendre(panels: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(_NODES)
    edges = np.linspace(lo, hi, panels + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _range_cdf(w: np.ndarray, k: int) -> np.ndarray:
    """P(range of k iid standard normals <= w), for each w."""
    z, wz = _gauss_legendre(_INNER_PANELS, -8.5, 8.5)
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    diff = np.clip(ndtr(z[None, :]) - ndtr(z[None, :] - np.asarray(w)[:, None]), 0.0, 1.0)
    return np.clip(k * (diff ** (k - 1) * phi[None, :]) @ wz, 0.0, 1.0)


def studentized_range_cdf(q: float, k: int, df: float) -> float:
    """P(Q <= q) for the studentized range with ``k`` means and ``df`` error d.f."""
    if q <= 0:
        return 0.0
    # s = chi_df / sqrt(df) has mean ~1 and sd ~ 1/sqrt(2 df)
    sd = 1.0 / math.sqrt(2.0 * df)
    lo = max(0.0, 1.0 - 14.0 * sd)
    hi = 1.0 + 14.0 * sd + (6.0 if df < 4 else 0.0)
    # the range CDF saturates once q*s passes ~12; resolve that region separately
    split = min(max(12.0 / q, lo), hi)
    parts = [_gauss_legendre(_OUTER_PANELS, a, b) for a, b in ((lo, split), (split, hi)) if b > a]
    s = np.concatenate([p[0] for p in parts])
    ws = np.concatenate([p[1] for p in parts])
    s, ws = s[s > 0], ws[s > 0]
    log_dens = (
        math.log(2.0)
        + (df / 2.0) * math.log(df / 2.0)
        - math.lgamma(df / 2.0)
        + (df - 1.0) * np.log(s)
        - df * s * s / 2.0
    )
    return float(np.clip((np.exp(log_dens) * _range_cdf(q * s, k)) @ ws, 0.0, 1.0))


def studentized_range_quantile(p: float, k: int, df: float) -> float:
    """Upper-tail quantile: the q with P(Q > q) = p."""
    if not 0.0 < p < 1.0:
        raise StatsError("p must lie in (0, 1)")
    if k < 2 or df < 1:
        raise StatsError("need k >= 2 and df >= 1")
    return _quantile(float(p), int(k), float(df))


@lru_cache(maxsize=4096)
def _quantile(p: float, k: int, df: float) -> float:
    target = 1.0 - p

    def f(q: float) -> float:
        return studentized_range_cdf(q, k, df) - target

    lo, hi = 0.0, 4.0
    while f(hi) < 0:
        lo, hi = hi, hi * 2.0
        if hi > 1e4:
            raise StatsError(f"studentized range quantile did not bracket (p={p}, k={k}, df={df})")
    # bisection to a bracket width well under the 1e-4 target
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9:
            return 0.5 * (lo + hi)
    raise StatsError(f"studentized range quantile did not converge (p={p}, k={k}, df={df})")


def compact_letters(means: Sequence[float], significant: np.ndarray) -> list[str]:
    """Insert-and-absorb compact letter display.

    Columns start as one set holding every level; each significant pair splits
    every column containing both members, and columns contained in another are
    absorbed. Letters are assigned by the best-ranked (largest mean) member of
    each column, so the top group is "a".
    """
    n = len(means)
    columns: list[frozenset[int]] = [frozenset(range(n))]
    for i in range(n):
        for j in range(i + 1, n):
            if not significant[i, j]:
                continue
            new: list[frozenset[int]] = []
            for col in columns:
                if i in col and j in col:
                    new.extend([col - {i}, col - {j}])
                else:
                    new.append(col)
            columns = [c for c in new if not any(c < other for other in new)]
            columns = list(dict.fromkeys(columns))
    rank = {lvl: r for r, lvl in enumerate(sorted(range(n), key=lambda t: (-means[t], t)))}
    columns.sort(key=lambda col: sorted(rank[m] for m in col))
    letters = [""] * n
    for idx, col in enumerate(columns):
        letter = _letter(idx)
        for m in col:
            letters[m] += letter
    return letters


def _letter(idx: int) -> str:
    alphabet = "abcdefghijklmnopqrstuvwxyz"
    if idx < 26:
        return alphabet[idx]
    return alphabet[idx // 26 - 1] + alphabet[idx % 26]


def tukey_hsd(groups: Sequence[GroupSample], alpha: float = 0.01) -> TukeyGrouping:
    """All-pairs Tukey-Kramer comparison with letters."""
    if len(groups) == 1:
        # nothing to compare: a lone level forms group "a"
        mean = float(np.mean(np.asarray(groups[0].observations, dtype=float)))
        return TukeyGrouping([groups[0].label], [mean], np.zeros((1, 1), dtype=bool), ["a"], math.nan)
    arrays = _check_groups(groups)
    anova = one_way_anova(groups)
    k = len(arrays)
    means = [float(a.mean()) for a in arrays]
    sizes = [a.size for a in arrays]
    q = studentized_range_quantile(alpha, k, anova.df_within)
    sig = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            se = math.sqrt(anova.ms_within / 2.0 * (1.0 / sizes[i] + 1.0 / sizes[j]))
            diff = abs(means[i] - means[j])
            sig[i, j] = sig[j, i] = diff > q * se
    return TukeyGrouping(
        labels=[g.label for g in groups],
        means=means,
        significant=sig,
        letters=compact_letters(means, sig),
        q_crit=q,
    )
