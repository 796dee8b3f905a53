"""Seeded synthetic flock generator with injected production-drop episodes.

Each flock follows a logistic onset of lay followed by a linear decline, a
weekday collection routine, multiplicative daily noise, binomial egg counts and
binomial mortality. Problem episodes are multiplicative deficits; labels come
from a deterministic deficit rule against the flock's own expected curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from typing import Optional

import numpy as np

from .flockdata import DailyRecord, DataError, ProductionSeries, ReferenceCurve

RISE_MIDPOINT_WEEK = 21.5
RISE_SCALE_WEEKS = 0.8
PEAK_WEEK = 28.0
CYCLE_DECLINE = 0.22
# zero-mean weekday routine shape, max |value| = 1
WEEKDAY_PATTERN = np.array([-1.0, -0.4, 0.0, 0.1, 0.3, 0.4, 0.6])
# events start once the flock is at peak production
EARLIEST_EVENT_WEEK = 26
# average labelled days produced by one event under the default label rule;
# measured on the default corpus, used to turn problem_rate into an event count
LABELLED_DAYS_PER_EVENT = 9.3
FIRST_START = date(2008, 1, 1)
LAST_START = date(2013, 6, 30)


@dataclass(frozen=True)
class LabelRule:
    deficit_threshold: float = 0.04
    min_consecutive_days: int = 2
    smoothing_days: int = 3

    def __post_init__(self) -> None:
        if self.deficit_threshold <= 0:
            raise ValueError("deficit_threshold must be positive")
        if self.min_consecutive_days < 1 or self.smoothing_days < 1:
            raise ValueError("min_consecutive_days and smoothing_days must be >= 1")


@dataclass(frozen=True)
class GeneratorConfig:
    n_flocks: int = 24
    housed_birds_range: tuple[int, int] = (19500, 20400)
    start_age_week: int = 19
    end_age_week: int = 79
    peak_rate_range: tuple[float, float] = (0.955, 0.98)
    weekly_cycle_amplitude: float = 0.02
    daily_noise_sd: float = 0.006
    # share of a day's eggs counted the next day (collection-time routine)
    collection_carry_sd: float = 0.02
    collection_carry_max: float = 0.12
    mortality_daily_hazard: float = 2.5e-4
    problem_rate: float = 0.0185
    clean_flock_fraction: float = 0.5
    onset_shift_range: tuple[float, float] = (-0.8, 0.8)
    decline_range: tuple[float, float] = (0.16, 0.28)
    event_depth_range: tuple[float, float] = (0.07, 0.25)
    event_duration_range: tuple[int, int] = (4, 14)
    max_ramp_days: int = 2
    label_rule: LabelRule = field(default_factory=LabelRule)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_flocks < 1:
            raise ValueError("n_flocks must be >= 1")
        if self.start_age_week >= self.end_age_week:
            raise ValueError("start_age_week must precede end_age_week")
        lo, hi = self.housed_birds_range
        if not 0 < lo <= hi:
            raise ValueError("housed_birds_range must be positive and ordered")
        for name in ("weekly_cycle_amplitude", "daily_noise_sd", "mortality_daily_hazard", "clean_flock_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("peak_rate_range", "event_depth_range"):
            lo_f, hi_f = getattr(self, name)
            if not 0.0 <= lo_f <= hi_f <= 1.0:
                raise ValueError(f"{name} must be an ordered pair in [0, 1]")
        if not 0.0 <= self.problem_rate <= 0.1:
            raise ValueError("problem_rate must lie in [0, 0.1]")
        dmin, dmax = self.event_duration_range
        if not 1 <= dmin <= dmax:
            raise ValueError("event_duration_range must be ordered and >= 1")

    @property
    def n_days(self) -> int:
        return 7 * (self.end_age_week - self.start_age_week)


@dataclass(frozen=True)
class ProblemEvent:
    onset_day: int
    duration_days: int
    depth: float
    ramp_days: int = 0

    def __post_init__(self) -> None:
        if self.duration_days < 1 or not 0.0 < self.depth <= 1.0 or self.ramp_days < 0:
            raise ValueError(f"invalid event {self}")

    def profile(self) -> np.ndarray:
        """Relative deficit for each day of the event (ramps inside the window)."""
        k = np.arange(self.duration_days)
        ramp = min(self.ramp_days, (self.duration_days - 1) // 2)
        rise = (k + 1) / (ramp + 1)
        fall = (self.duration_days - k) / (ramp + 1)
        return self.depth * np.minimum(1.0, np.minimum(rise, fall))


@dataclass(frozen=True)
class SyntheticFlock:
    series: ProductionSeries
    events: tuple[ProblemEvent, ...]
    peak_rate: float
    expected_rate: np.ndarray  # noise- and event-free daily lay rate

    @property
    def expected_curve(self) -> ReferenceCurve:
        weeks = self.series.age_days // 7
        return ReferenceCurve(
            {int(w): float(self.expected_rate[weeks == w].mean()) for w in np.unique(weeks)}
        )


def mean_curve(
    age_week: float, peak_rate: float, onset_shift: float = 0.0, decline: float = CYCLE_DECLINE
) -> float:
    """Expected lay rate at an age in weeks (fractional ages allowed).

    ``onset_shift`` moves the onset of lay later (weeks); ``decline`` is the
    total drop from peak reached at week 79.
    """
    rise = peak_rate / (1.0 + math.exp(-(age_week - RISE_MIDPOINT_WEEK - onset_shift) / RISE_SCALE_WEEKS))
    if age_week > PEAK_WEEK:
        rise -= decline / (79.0 - PEAK_WEEK) * (age_week - PEAK_WEEK)
    return min(1.0, max(0.0, rise))


def _flock_rng(seed: int, flock_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 1, flock_index]))


def _dataset_plan(config: GeneratorConfig) -> np.ndarray:
    """Number of problem events assigned to each flock index.

    The split between clean and problem flocks and the event total are fixed
    per dataset, so corpus-level statistics stay close to their targets.
    """
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    n = config.n_flocks
    n_problem = n - int(round(config.clean_flock_fraction * n))
    total_events = int(round(config.problem_rate * config.n_days * n / LABELLED_DAYS_PER_EVENT))
    plan = np.zeros(n, dtype=int)
    if n_problem == 0 or total_events == 0:
        return plan
    order = rng.permutation(n)
    problem = np.sort(order[:n_problem])
    base = min(total_events, n_problem)
    plan[problem[rng.permutation(n_problem)[:base]]] = 1
    extra = total_events - base
    if extra > 0:
        plan[problem] += rng.multinomial(extra, np.full(n_problem, 1.0 / n_problem))
    return plan


def _place_events(rng: np.random.Generator, config: GeneratorConfig, count: int) -> list[ProblemEvent]:
    first = 7 * (EARLIEST_EVENT_WEEK - config.start_age_week)
    events: list[ProblemEvent] = []
    taken: list[tuple[int, int]] = []
    dmin, dmax = config.event_duration_range
    for _ in range(count):
        for _attempt in range(200):
            duration = int(rng.integers(dmin, dmax + 1))
            last_onset = config.n_days - duration - 1
            if last_onset < first:
                break
            onset = int(rng.integers(first, last_onset + 1))
            # keep a week between episodes so labels stay separable
            if all(onset + duration + 7 <= a or b + 7 <= onset for a, b in taken):
                lo, hi = config.event_depth_range
                depth = float(rng.uniform(lo, hi))
                ramp = int(rng.integers(0, config.max_ramp_days + 1))
                events.append(ProblemEvent(onset, duration, depth, ramp))
                taken.append((onset, onset + duration))
                break
    return sorted(events, key=lambda e: e.onset_day)


def generate_flock(config: GeneratorConfig, flock_index: int) -> SyntheticFlock:
    """Simulate one flock; the result depends only on ``(config, flock_index)``."""
    plan = _dataset_plan(config)
    n_events = int(plan[flock_index]) if flock_index < len(plan) else 0
    rng = _flock_rng(config.seed, flock_index)
    n_days = config.n_days
    flock_id = f"F{flock_index + 1:03d}"

    housed = int(rng.integers(config.housed_birds_range[0], config.housed_birds_range[1] + 1))
    peak = float(rng.uniform(*config.peak_rate_range))
    hazard = config.mortality_daily_hazard * float(rng.uniform(0.4, 1.6))
    span = (LAST_START - FIRST_START).days
    start = FIRST_START + timedelta(days=int(rng.integers(0, span + 1)))
    weekday_effect = config.weekly_cycle_amplitude * WEEKDAY_PATTERN[rng.permutation(7)]
    age0 = 7 * config.start_age_week
    ages = age0 + np.arange(n_days)
    shift = float(rng.uniform(*config.onset_shift_range))
    decline = float(rng.uniform(*config.decline_range))
    expected = np.array([mean_curve(a / 7.0, peak, shift, decline) for a in ages])

    events = _place_events(rng, config, n_events)
    deficit = np.zeros(n_days)
    for ev in events:
        deficit[ev.onset_day : ev.onset_day + ev.duration_days] = np.maximum(
            deficit[ev.onset_day : ev.onset_day + ev.duration_days], ev.profile()
        )

    dates = [start + timedelta(days=int(d)) for d in range(n_days)]
    weekday = np.array([d.weekday() for d in dates])
    noise = 1.0 + config.daily_noise_sd * rng.standard_normal(n_days)
    rate = np.clip(expected * (1.0 + weekday_effect[weekday]) * noise * (1.0 - deficit), 0.0, 1.0)

    carry_share = np.clip(
        np.abs(config.collection_carry_sd * rng.standard_normal(n_days)), 0.0, config.collection_carry_max
    )
    hens = np.empty(n_days, dtype=np.int64)
    eggs = np.empty(n_days, dtype=np.int64)
    alive = housed
    carried = 0
    for d in range(n_days):
        if d > 0:
            alive -= int(rng.binomial(alive, hazard))
        hens[d] = alive
        laid = int(rng.binomial(alive, rate[d]))
        held = int(rng.binomial(laid, carry_share[d])) if d < n_days - 1 else 0
        eggs[d] = laid - held + carried
        carried = held

    records = tuple(
        DailyRecord(flock_id, dates[d], int(ages[d]), int(hens[d]), int(eggs[d]), None)
        for d in range(n_days)
    )
    unlabeled = SyntheticFlock(ProductionSeries(flock_id, records), tuple(events), peak, expected)
    labels = oracle_labels(unlabeled.series, unlabeled.expected_curve, config.label_rule)
    return replace(unlabeled, series=unlabeled.series.with_labels(labels))


def trailing_mean(values: np.ndarray, window: int) -> np.ndarray:
    """Mean of the last ``window`` values ending at each index (shorter at the start)."""
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(len(values))
    lo = np.maximum(0, idx - window + 1)
    return (csum[idx + 1] - csum[lo]) / (idx + 1 - lo)


def oracle_labels(series: ProductionSeries, reference: ReferenceCurve, rule: LabelRule) -> np.ndarray:
    """Deterministic stand-in for an expert labelling panel.

    A day is flagged when the trailing mean lay rate sits more than
    ``deficit_threshold`` below the equally smoothed reference (interpolated to
    day resolution, so the lag of the trailing mean cancels on the rising
    curve); a day is positive when it belongs to a run of at least
    ``min_consecutive_days`` flagged days.
    """
    expected = trailing_mean(reference.at_days(series.age_days), rule.smoothing_days)
    smoothed = trailing_mean(series.rates, rule.smoothing_days)
    flagged = (expected - smoothed) > rule.deficit_threshold
    labels = np.zeros(len(flagged), dtype=bool)
    start: Optional[int] = None
    for i, f in enumerate(np.append(flagged, False)):
        if f and start is None:
            start = i
        elif not f and start is not None:
            if i - start >= rule.min_consecutive_days:
                labels[start:i] = True
            start = None
    return labels


def generate_dataset(config: GeneratorConfig) -> list[SyntheticFlock]:
    return [generate_flock(config, i) for i in range(config.n_flocks)]


def format_ground_truth(flocks: list[SyntheticFlock]) -> str:
    lines = ["flock_id,onset_day,duration,depth,ramp"]
    for fl in flocks:
        for ev in fl.events:
            lines.append(f"{fl.series.flock_id},{ev.onset_day},{ev.duration_days},{ev.depth!r},{ev.ramp_days}")
    return "\n".join(lines) + "\n"


def read_ground_truth(path) -> dict[str, list[ProblemEvent]]:
    import csv

    out: dict[str, list[ProblemEvent]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ev = ProblemEvent(int(row["onset_day"]), int(row["duration"]), float(row["depth"]), int(row["ramp"]))
            out.setdefault(row["flock_id"], []).append(ev)
    return out
