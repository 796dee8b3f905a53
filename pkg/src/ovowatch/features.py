"""Sliding-window features, forecast-interval targets and per-fold scaling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .flockdata import DataError, ProductionSeries, ReferenceCurve, build_reference_curve

FEATURE_NAMES = ("a", "b", "c", "d", "e", "f")
N_FEATURES = len(FEATURE_NAMES)
MAX_FORECAST_INTERVAL = 5


@dataclass(frozen=True)
class FeatureConfig:
    window_size: int = 14
    forecast_interval: int = 0

    def __post_init__(self) -> None:
        if self.window_size < 7 or self.window_size % 7:
            raise ValueError(f"window_size must be a multiple of 7, got {self.window_size}")
        if not 0 <= self.forecast_interval <= MAX_FORECAST_INTERVAL:
            raise ValueError(f"forecast_interval must lie in [0, {MAX_FORECAST_INTERVAL}]")

    @property
    def first_day(self) -> int:
        """Earliest day index with a full window and a value seven days back."""
        return max(self.window_size - 1, 7)


class FeatureVector(NamedTuple):
    a: float  # rate minus reference for the age week
    b: float  # rate at window end minus rate at window start
    c: float  # rate minus rate seven days earlier
    d: float  # coefficient of variation of the second half, percent
    e: float  # sd of first half minus sd of second half
    f: float  # age in whole weeks


@dataclass(frozen=True)
class Pattern:
    features: FeatureVector
    target: bool
    flock_id: str
    day_index: int


def extract_features(
    series: ProductionSeries, reference: ReferenceCurve, t: int, cfg: FeatureConfig
) -> FeatureVector:
    """Features for the window ending on day index ``t``."""
    w = cfg.window_size
    if t < cfg.first_day or t >= len(series):
        raise DataError(
            f"day {t} needs {cfg.first_day} days of history in a series of length {len(series)}"
        )
    rates = series.rates
    window = rates[t - w + 1 : t + 1]
    half = w // 2
    first, second = window[:half], window[half:]
    mean2 = float(second.mean())
    if mean2 == 0.0:
        raise DataError(f"flock {series.flock_id} day {t}: zero production in second half-window")
    sd1 = float(np.std(first, ddof=1))
    sd2 = float(np.std(second, ddof=1))
    age = int(series.age_days[t])
    return FeatureVector(
        a=float(rates[t] - reference[age // 7]),
        b=float(rates[t] - rates[t - w + 1]),
        c=float(rates[t] - rates[t - 7]),
        d=100.0 * sd2 / mean2,
        e=sd1 - sd2,
        f=float(age // 7),
    )


def eligible_days(length: int, cfg: FeatureConfig) -> np.ndarray:
    last = length - 1 - cfg.forecast_interval
    return np.arange(cfg.first_day, last + 1)


def window_features(
    series: ProductionSeries, cfg: FeatureConfig, days: Optional[np.ndarray] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Reference-free features b..f for every eligible day, vectorised.

    Returns ``(days, matrix)`` where ``matrix`` has columns b, c, d, e, f.
    """
    if days is None:
        days = eligible_days(len(series), cfg)
    rates = series.rates
    w = cfg.window_size
    half = w // 2
    if len(days) == 0:
        return days, np.empty((0, N_FEATURES - 1))
    idx = days[:, None] + np.arange(-w + 1, 1)[None, :]
    windows = rates[idx]
    first, second = windows[:, :half], windows[:, half:]
    mean2 = second.mean(axis=1)
    if np.any(mean2 == 0.0):
        bad = int(days[np.flatnonzero(mean2 == 0.0)[0]])
        raise DataError(f"flock {series.flock_id} day {bad}: zero production in second half-window")
    sd1 = first.std(axis=1, ddof=1)
    sd2 = second.std(axis=1, ddof=1)
    cur = rates[days]
    mat = np.column_stack(
        [
            cur - rates[days - w + 1],
            cur - rates[days - 7],
            100.0 * sd2 / mean2,
            sd1 - sd2,
            (series.age_days[days] // 7).astype(float),
        ]
    )
    return days, mat


def reference_delta(series: ProductionSeries, reference: ReferenceCurve, days: np.ndarray) -> np.ndarray:
    return series.rates[days] - reference.lookup(series.age_days[days] // 7)


def flock_matrix(
    series: ProductionSeries, reference: ReferenceCurve, cfg: FeatureConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(days, X, targets)`` for one labelled flock."""
    days, rest = window_features(series, cfg)
    a = reference_delta(series, reference, days)
    X = np.column_stack([a, rest]) if len(days) else np.empty((0, N_FEATURES))
    y = series.labels[days + cfg.forecast_interval]
    return days, X, y


def history_days(series: ProductionSeries, cfg: FeatureConfig) -> np.ndarray:
    """Every day with enough history to be scored, labelled or not."""
    if len(series) <= cfg.first_day:
        raise DataError(
            f"flock {series.flock_id} has {len(series)} days; window {cfg.window_size} "
            f"needs at least {cfg.first_day + 1} days of history"
        )
    return np.arange(cfg.first_day, len(series))


def scoring_matrix(
    series: ProductionSeries, reference: ReferenceCurve, cfg: FeatureConfig
) -> tuple[np.ndarray, np.ndarray]:
    """``(days, X)`` for alerting: no targets, so the forecast interval does not trim the end."""
    days, rest = window_features(series, cfg, history_days(series, cfg))
    return days, np.column_stack([reference_delta(series, reference, days), rest])


def build_patterns(
    series_set: Sequence[ProductionSeries],
    cfg: FeatureConfig,
    reference_pool: Optional[Sequence[ProductionSeries]] = None,
) -> list[Pattern]:
    """Patterns for every eligible day of every flock, ordered by flock id then day.

    Each flock is featurised against a reference curve built from
    ``reference_pool`` (default: ``series_set``) with that flock left out.
    """
    pool = list(series_set if reference_pool is None else reference_pool)
    out: list[Pattern] = []
    for s in sorted(series_set, key=lambda s: s.flock_id):
        ref = build_reference_curve(pool, exclude=s.flock_id)
        days, X, y = flock_matrix(s, ref, cfg)
        out.extend(
            Pattern(FeatureVector(*map(float, row)), bool(tgt), s.flock_id, int(d))
            for d, row, tgt in zip(days, X, y)
        )
    return out


def patterns_to_arrays(patterns: Sequence[Pattern]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([p.features for p in patterns], dtype=float).reshape(-1, N_FEATURES)
    y = np.array([p.target for p in patterns], dtype=bool)
    return X, y


@dataclass(frozen=True)
class Scaler:
    mean: tuple[float, ...]
    std: tuple[float, ...]

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - np.asarray(self.mean)) / np.asarray(self.std)

    def inverse(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) * np.asarray(self.std) + np.asarray(self.mean)

    @classmethod
    def identity(cls, dim: int) -> "Scaler":
        return cls((0.0,) * dim, (1.0,) * dim)


def fit_scaler(train: Iterable[Pattern] | np.ndarray) -> Scaler:
    """Z-score scaler from training features; zero-spread features keep std 1."""
    X = train if isinstance(train, np.ndarray) else patterns_to_arrays(list(train))[0]
    if X.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty training set")
    mean = X.mean(axis=0)
    if X.shape[0] > 1:
        std = X.std(axis=0, ddof=1)
    else:
        std = np.zeros(X.shape[1])
    std = np.where((std > 0) & np.isfinite(std), std, 1.0)
    return Scaler(tuple(map(float, mean)), tuple(map(float, std)))


def apply_scaler(scaler: Scaler, v: Sequence[float]) -> FeatureVector:
    return FeatureVector(*map(float, scaler.transform(np.asarray(v, dtype=float))))


def format_features_csv(patterns: Sequence[Pattern]) -> str:
    lines = ["flock_id,day_index," + ",".join(FEATURE_NAMES) + ",target"]
    for p in patterns:
        vals = ",".join(repr(float(x)) for x in p.features)
        lines.append(f"{p.flock_id},{p.day_index},{vals},{int(p.target)}")
    return "\n".join(lines) + "\n"
