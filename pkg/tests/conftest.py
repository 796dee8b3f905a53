import sys
from datetime import date, timedelta
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ovowatch.flockdata import DailyRecord, ProductionSeries  # noqa: E402
from ovowatch.simgen import GeneratorConfig, generate_dataset  # noqa: E402


def make_series(rates, hens=20000, flock_id="T01", start_age=133, labels=None):
    """Series with the given daily lay rates (eggs rounded) and constant hens."""
    start = date(2010, 1, 4)
    records = []
    for i, r in enumerate(rates):
        h = hens[i] if isinstance(hens, (list, tuple)) else hens
        lab = None if labels is None else bool(labels[i])
        records.append(DailyRecord(flock_id, start + timedelta(days=i), start_age + i, h, round(r * h), lab))
    return ProductionSeries(flock_id, tuple(records))


@pytest.fixture(scope="session")
def corpus():
    """The default 24-flock synthetic corpus (seed 0)."""
    return generate_dataset(GeneratorConfig(seed=0))


@pytest.fixture(scope="session")
def corpus_series(corpus):
    return [f.series for f in corpus]
