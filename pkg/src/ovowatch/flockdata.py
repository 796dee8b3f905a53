"""Daily egg-production records, CSV ingestion/validation and reference curves."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

CSV_HEADER = ("flock_id", "date", "age_days", "hens", "eggs", "label")
REFERENCE_HEADER = ("age_week", "rate")

# eggs may exceed hens slightly (double yolks, collection backlog)
MAX_EGGS_PER_HEN = 1.2


class DataError(ValueError):
    """Raised for malformed or inconsistent production data."""


@dataclass(frozen=True)
class DailyRecord:
    flock_id: str
    date: date
    age_days: int
    hens_alive: int
    eggs_collected: int
    label: Optional[bool] = None

    @property
    def age_week(self) -> int:
        return self.age_days // 7


def lay_rate(record: DailyRecord) -> float:
    """Eggs collected per hen alive on that day."""
    if record.hens_alive <= 0:
        raise DataError(f"lay rate undefined with {record.hens_alive} hens alive")
    return record.eggs_collected / record.hens_alive


@dataclass(frozen=True)
class ProductionSeries:
    flock_id: str
    records: tuple[DailyRecord, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def hens(self) -> np.ndarray:
        return np.array([r.hens_alive for r in self.records], dtype=np.int64)

    @cached_property
    def eggs(self) -> np.ndarray:
        return np.array([r.eggs_collected for r in self.records], dtype=np.int64)

    @cached_property
    def age_days(self) -> np.ndarray:
        return np.array([r.age_days for r in self.records], dtype=np.int64)

    @cached_property
    def rates(self) -> np.ndarray:
        hens = self.hens
        if np.any(hens <= 0):
            raise DataError(f"flock {self.flock_id}: lay rate undefined on days with no hens")
        return self.eggs / hens

    @cached_property
    def weekly_means(self) -> dict[int, float]:
        """Mean lay rate within each age-week present in the series."""
        weeks = self.age_days // 7
        uniq, inverse = np.unique(weeks, return_inverse=True)
        sums = np.bincount(inverse, weights=self.rates)
        counts = np.bincount(inverse)
        return {int(w): float(sm / c) for w, sm, c in zip(uniq, sums, counts)}

    @property
    def has_labels(self) -> bool:
        return all(r.label is not None for r in self.records)

    @cached_property
    def labels(self) -> np.ndarray:
        if not self.has_labels:
            raise DataError(f"flock {self.flock_id}: labels missing")
        return np.array([bool(r.label) for r in self.records], dtype=bool)

    def with_labels(self, labels: Sequence[bool]) -> "ProductionSeries":
        if len(labels) != len(self.records):
            raise DataError("label vector length differs from series length")
        recs = tuple(
            DailyRecord(r.flock_id, r.date, r.age_days, r.hens_alive, r.eggs_collected, bool(lab))
            for r, lab in zip(self.records, labels)
        )
        return ProductionSeries(self.flock_id, recs)


@dataclass(frozen=True)
class ReferenceCurve:
    """Expected lay rate per age-week."""

    entries: dict[int, float]

    def __post_init__(self) -> None:
        for week, rate in self.entries.items():
            if not 0.0 <= rate <= 1.0 or math.isnan(rate):
                raise DataError(f"reference rate {rate!r} for week {week} outside [0, 1]")

    def __getitem__(self, age_week: int) -> float:
        try:
            return self.entries[int(age_week)]
        except KeyError:
            raise DataError(f"reference curve has no entry for age week {age_week}") from None

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray]:
        weeks = np.array(sorted(self.entries), dtype=np.int64)
        return weeks, np.array([self.entries[w] for w in weeks.tolist()], dtype=float)

    def lookup(self, age_weeks: np.ndarray) -> np.ndarray:
        weeks, values = self._table
        q = np.asarray(age_weeks, dtype=np.int64)
        pos = np.clip(np.searchsorted(weeks, q), 0, max(len(weeks) - 1, 0))
        hit = (weeks[pos] == q) if len(weeks) else np.zeros(q.shape, dtype=bool)
        if not np.all(hit):
            missing = sorted(set(q[~hit].tolist()))
            raise DataError(f"reference curve has no entry for age weeks {missing}")
        return values[pos]

    def at_days(self, age_days: np.ndarray) -> np.ndarray:
        """Rate at day resolution, linear between week midpoints.

        The half-weeks before the first and after the last midpoint continue the
        end segments' slope; holding them flat would read the steep onset of lay
        as a production deficit.
        """
        weeks = sorted(self.entries)
        centres = np.array([7 * w + 3.0 for w in weeks])
        values = np.array([self.entries[w] for w in weeks])
        days = np.asarray(age_days, dtype=float)
        missing = set((days // 7).astype(int).tolist()) - set(weeks)
        if missing:
            raise DataError(f"reference curve has no entry for age weeks {sorted(missing)}")
        out = np.interp(days, centres, values)
        if len(weeks) > 1:
            head = days < centres[0]
            tail = days > centres[-1]
            slope_head = (values[1] - values[0]) / (centres[1] - centres[0])
            slope_tail = (values[-1] - values[-2]) / (centres[-1] - centres[-2])
            out[head] = values[0] + slope_head * (days[head] - centres[0])
            out[tail] = values[-1] + slope_tail * (days[tail] - centres[-1])
        return np.clip(out, 0.0, 1.0)


@dataclass
class ValidationReport:
    errors: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_series(series: ProductionSeries) -> ValidationReport:
    """Check every series invariant and report violations by record index."""
    report = ValidationReport()
    prev: Optional[DailyRecord] = None
    for i, rec in enumerate(series.records):
        if rec.flock_id != series.flock_id:
            report.errors.append((i, f"flock id {rec.flock_id!r} differs from series {series.flock_id!r}"))
        if rec.hens_alive < 0:
            report.errors.append((i, "negative hens"))
        if rec.eggs_collected < 0:
            report.errors.append((i, "negative eggs"))
        if rec.age_days < 0:
            report.errors.append((i, "negative age"))
        if rec.eggs_collected > MAX_EGGS_PER_HEN * max(rec.hens_alive, 0):
            report.errors.append((i, f"eggs exceed {MAX_EGGS_PER_HEN} x hens"))
        if rec.hens_alive == 0:
            report.warnings.append((i, "no hens alive; lay rate undefined"))
        if prev is not None:
            step = rec.age_days - prev.age_days
            if step > 1:
                report.errors.append((i, f"gap: age jumps by {step} days"))
            elif step < 1:
                report.errors.append((i, "age not strictly increasing"))
            if rec.hens_alive > prev.hens_alive:
                report.errors.append((i, "hens increased (restocking)"))
            if (rec.date - prev.date).days != step:
                report.warnings.append((i, "calendar date step differs from age step"))
        prev = rec
    return report


def _parse_label(text: str, lineno: int) -> Optional[bool]:
    text = text.strip()
    if text == "":
        return None
    if text in ("0", "1"):
        return text == "1"
    raise DataError(f"line {lineno}: label must be 0, 1 or empty, got {text!r}")


def _parse_int(text: str, name: str, lineno: int) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise DataError(f"line {lineno}: non-numeric {name} {text!r}") from None


def parse_flock_csv(path: str | Path) -> ProductionSeries:
    """Read one flock's daily records. Rows are sorted by date; duplicates are rejected."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if tuple(header) not in (CSV_HEADER, CSV_HEADER[:-1]):
            raise DataError(f"{path}: bad header {','.join(header)!r}")
        has_label = len(header) == len(CSV_HEADER)
        records = []
        seen: dict[date, int] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                day = date.fromisoformat(row[1].strip())
            except ValueError:
                raise DataError(f"{path}: line {lineno}: bad date {row[1]!r}") from None
            if day in seen:
                raise DataError(f"{path}: line {lineno}: duplicate date {day} (first on line {seen[day]})")
            seen[day] = lineno
            records.append(
                DailyRecord(
                    flock_id=row[0].strip(),
                    date=day,
                    age_days=_parse_int(row[2], "age_days", lineno),
                    hens_alive=_parse_int(row[3], "hens", lineno),
                    eggs_collected=_parse_int(row[4], "eggs", lineno),
                    label=_parse_label(row[5], lineno) if has_label else None,
                )
            )
    if not records:
        raise DataError(f"{path}: no records")
    ids = {r.flock_id for r in records}
    if len(ids) != 1:
        raise DataError(f"{path}: expected one flock, found {sorted(ids)}")
    records.sort(key=lambda r: r.date)
    return ProductionSeries(records[0].flock_id, tuple(records))


def format_flock_csv(series: ProductionSeries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in series.records:
        label = "" if r.label is None else str(int(r.label))
        writer.writerow([r.flock_id, r.date.isoformat(), r.age_days, r.hens_alive, r.eggs_collected, label])
    return buf.getvalue()


def write_flock_csv(series: ProductionSeries, path: str | Path) -> None:
    from .io_utils import atomic_write_text

    atomic_write_text(path, format_flock_csv(series))


def load_flock_dir(directory: str | Path) -> list[ProductionSeries]:
    """Every ``*.csv`` flock file in a directory, ordered by flock id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"data directory {directory} not found")
    files = sorted(p for p in directory.glob("*.csv") if p.name != "ground_truth.csv")
    if not files:
        raise DataError(f"no flock CSV files in {directory}")
    flocks = [parse_flock_csv(p) for p in files]
    return sorted(flocks, key=lambda s: s.flock_id)


def build_reference_curve(
    series_set: Iterable[ProductionSeries], exclude: Optional[str] = None
) -> ReferenceCurve:
    """Per age-week mean lay rate: week mean within each flock, then mean over flocks.

    Flocks are summed in sorted flock-id order so the result does not depend on
    the order of ``series_set``.
    """
    pool = sorted((s for s in series_set if s.flock_id != exclude), key=lambda s: s.flock_id)
    if not pool:
        raise DataError("no flocks left to build a reference curve from")
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for s in pool:
        for week, rate in s.weekly_means.items():
            sums[week] = sums.get(week, 0.0) + rate
            counts[week] = counts.get(week, 0) + 1
    return ReferenceCurve({w: min(1.0, sums[w] / counts[w]) for w in sorted(sums)})


def read_reference_csv(path: str | Path) -> ReferenceCurve:
    path = Path(path)
    entries = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader, ()))
        if header != REFERENCE_HEADER:
            raise DataError(f"{path}: bad reference header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                entries[int(row[0])] = float(row[1])
            except (ValueError, IndexError):
                raise DataError(f"{path}: line {lineno}: malformed reference row") from None
    return ReferenceCurve(entries)


def format_reference_csv(curve: ReferenceCurve) -> str:
    lines = [",".join(REFERENCE_HEADER)]
    lines += [f"{w},{curve.entries[w]!r}" for w in sorted(curve.entries)]
    return "\n".join(lines) + "\n"
