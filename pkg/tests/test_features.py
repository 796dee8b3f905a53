import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_series
from ovowatch.flockdata import DataError, ReferenceCurve, build_reference_curve
from ovowatch.features import (
    FeatureConfig,
    Scaler,
    apply_scaler,
    build_patterns,
    extract_features,
    fit_scaler,
    flock_matrix,
    format_features_csv,
    patterns_to_arrays,
    scoring_matrix,
)
from oracles import naive_sd


def _flat_reference(value=0.9, weeks=range(15, 90)):
    return ReferenceCurve({w: value for w in weeks})


def test_constant_series_gives_zero_features():
    s = make_series([0.9] * 40, hens=10000)
    fv = extract_features(s, _flat_reference(), 20, FeatureConfig(14, 0))
    # the relative-spread feature only vanishes up to rounding in the mean
    assert np.allclose(fv[:5], 0.0, rtol=0, atol=1e-12)
    assert fv.f == (133 + 20) // 7


def test_age_feature_exact_week():
    s = make_series([0.9] * 30, start_age=196 - 20)
    assert extract_features(s, _flat_reference(), 20, FeatureConfig(14, 0)).f == 28


def _naive_features(rates, ref_value, t, w, age):
    window = rates[t - w + 1 : t + 1]
    first, second = window[: w // 2], window[w // 2 :]
    mean2 = sum(second) / len(second)
    return (
        rates[t] - ref_value,
        rates[t] - rates[t - w + 1],
        rates[t] - rates[t - 7],
        100.0 * naive_sd(second) / mean2,
        naive_sd(first) - naive_sd(second),
        age // 7,
    )


def test_second_half_example():
    rates = [0.85] * 7 + [0.9] * 6 + [0.8]
    s = make_series(rates, hens=10)
    fv = extract_features(s, _flat_reference(), 13, FeatureConfig(14, 0))
    half = [0.9] * 6 + [0.8]
    assert fv.d == pytest.approx(100 * naive_sd(half) / (sum(half) / 7), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(500, 1000), min_size=40, max_size=60),
    st.sampled_from([7, 14, 21, 28]),
    st.data(),
)
def test_features_match_naive_oracle(eggs, w, data):
    rates = [e / 1000 for e in eggs]
    s = make_series(rates, hens=1000)
    cfg = FeatureConfig(w, 0)
    t = data.draw(st.integers(cfg.first_day, len(rates) - 1))
    fv = extract_features(s, _flat_reference(0.8), t, cfg)
    expected = _naive_features(s.rates.tolist(), 0.8, t, w, int(s.age_days[t]))
    assert np.allclose(fv, expected, rtol=0, atol=1e-12)
    # the vectorised path agrees with the scalar one
    days, X, _ = flock_matrix(s.with_labels([False] * len(s)), _flat_reference(0.8), cfg)
    assert np.allclose(X[list(days).index(t)], fv, atol=1e-12)


def test_odd_window_split_puts_middle_day_second():
    # W=21: first 10 days vs last 11 days
    rates = [0.5] * 10 + [0.9] * 11 + [0.9] * 5
    s = make_series(rates, hens=100)
    fv = extract_features(s, _flat_reference(), 20, FeatureConfig(21, 0))
    assert fv.d == 0.0 and fv.e == 0.0


def test_extract_errors():
    s = make_series([0.9] * 20)
    cfg = FeatureConfig(14, 0)
    with pytest.raises(DataError):
        extract_features(s, _flat_reference(), 12, cfg)
    with pytest.raises(DataError):
        extract_features(s, _flat_reference(), 20, cfg)
    zero = make_series([0.9] * 7 + [0.0] * 7)
    with pytest.raises(DataError, match="zero"):
        extract_features(zero, _flat_reference(), 13, cfg)
    with pytest.raises(DataError):
        extract_features(s, ReferenceCurve({1: 0.5}), 15, cfg)


@pytest.mark.parametrize("kwargs", [{"window_size": 10}, {"window_size": 0}, {"forecast_interval": 6}, {"forecast_interval": -1}])
def test_feature_config_validation(kwargs):
    with pytest.raises(ValueError):
        FeatureConfig(**kwargs)


def test_pattern_count_and_target_shift():
    L = 60
    labels = [i % 9 == 0 for i in range(L)]
    s = make_series([0.9] * L, labels=labels)
    other = make_series([0.8] * L, flock_id="T02", labels=[False] * L)
    pats = [p for p in build_patterns([s, other], FeatureConfig(14, 1)) if p.flock_id == "T01"]
    assert len(pats) == L - 14
    assert all(p.target == labels[p.day_index + 1] for p in pats)
    zero = [p for p in build_patterns([s, other], FeatureConfig(14, 0)) if p.flock_id == "T01"]
    assert all(p.target == labels[p.day_index] for p in zero)


def test_target_shift_law(corpus_series):
    s = corpus_series[2]
    base = {p.day_index: p.target for p in build_patterns([s], FeatureConfig(14, 0), corpus_series)}
    for k in range(1, 6):
        for p in build_patterns([s], FeatureConfig(14, k), corpus_series):
            assert p.target == base.get(p.day_index + k, s.labels[p.day_index + k])


def test_all_negative_flock_gives_negative_targets(corpus):
    clean = next(f.series for f in corpus if not f.events)
    assert not any(p.target for p in build_patterns([clean], FeatureConfig(14, 2), [f.series for f in corpus]))


def test_reference_is_leave_flock_out(corpus_series):
    s = corpus_series[0]
    pats = build_patterns([s], FeatureConfig(14, 0), corpus_series)
    ref = build_reference_curve(corpus_series, exclude=s.flock_id)
    p = pats[10]
    assert p.features.a == s.rates[p.day_index] - ref[s.age_days[p.day_index] // 7]


def test_causality_appending_future_days(corpus_series):
    s = corpus_series[1]
    short = type(s)(s.flock_id, s.records[:200])
    ref = build_reference_curve(corpus_series, exclude=s.flock_id)
    cfg = FeatureConfig(14, 0)
    for t in (50, 120, 199):
        assert extract_features(short, ref, t, cfg) == extract_features(s, ref, t, cfg)


def test_scaler_moments_match_naive_recount():
    rng = np.random.default_rng(0)
    X = rng.normal([0, 1, -2, 5, 0, 40], [0.01, 0.5, 2.0, 3.0, 0.1, 10.0], size=(1000, 6))
    sc = fit_scaler(X)
    Z = sc.transform(X)
    for col in range(6):
        vals = Z[:, col].tolist()
        assert abs(sum(vals) / len(vals)) < 1e-9
        assert abs(naive_sd(vals) - 1.0) < 1e-9
    back = sc.inverse(Z)
    assert np.max(np.abs(back - X)) < 1e-12 * max(1.0, np.abs(X).max())


def test_scaler_degenerate_and_single_pattern():
    X = np.array([[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]])
    sc = fit_scaler(X)
    assert sc.std == (1.0,) * 6
    assert apply_scaler(sc, X[0]) == (0.0,) * 6
    const = np.tile([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], (5, 1))
    const[:, 0] = np.arange(5)
    sc = fit_scaler(const)
    assert sc.std[1:] == (1.0,) * 5 and sc.std[0] > 0
    with pytest.raises((ValueError, DataError)):
        fit_scaler(np.empty((0, 6)))


def test_scaler_round_trip_vector():
    sc = Scaler((1.0, 2.0, 3.0, 4.0, 5.0, 6.0), (0.5, 2.0, 1.0, 3.0, 0.1, 7.0))
    v = np.array([0.3, -1.0, 2.5, 10.0, 5.0, 40.0])
    assert np.max(np.abs(sc.inverse(sc.transform(v[None, :]))[0] - v)) < 1e-12


def test_fit_scaler_accepts_patterns(corpus_series):
    pats = build_patterns(corpus_series[:3], FeatureConfig(14, 0))
    X, y = patterns_to_arrays(pats)
    assert fit_scaler(pats) == fit_scaler(X)
    assert X.shape == (len(pats), 6) and y.dtype == bool


def test_features_csv_layout(corpus_series):
    pats = build_patterns(corpus_series[:2], FeatureConfig(14, 0))
    lines = format_features_csv(pats).splitlines()
    assert lines[0] == "flock_id,day_index,a,b,c,d,e,f,target"
    assert len(lines) == len(pats) + 1


def test_scoring_matrix_covers_every_day_and_names_history():
    s = make_series([0.9] * 30)
    days, X = scoring_matrix(s, _flat_reference(), FeatureConfig(14, 3))
    assert days[0] == 13 and days[-1] == 29 and X.shape == (17, 6)
    with pytest.raises(DataError, match="at least 14 days"):
        scoring_matrix(make_series([0.9] * 10), _flat_reference(), FeatureConfig(14, 0))
