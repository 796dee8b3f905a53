import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from ovowatch.stats import (
    GroupSample,
    StatsError,
    compact_letters,
    one_way_anova,
    studentized_range_cdf,
    studentized_range_quantile,
    tukey_hsd,
)
from oracles import STUDENTIZED_RANGE_TABLE, clique_letters


def _groups(*samples):
    return [GroupSample(str(i), list(s)) for i, s in enumerate(samples)]


def test_anova_matches_independent_computation():
    rng = np.random.default_rng(0)
    samples = [m + rng.normal(0, 2.0, 8) for m in (5, 10, 15)]
    res = one_way_anova(_groups(*samples))
    ref = sps.f_oneway(*samples)
    assert res.f == pytest.approx(ref.statistic, rel=1e-9)
    assert res.p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-300)
    assert (res.df_between, res.df_within) == (2, 21)


def test_two_group_anova_is_t_squared():
    rng = np.random.default_rng(1)
    a, b = rng.normal(0, 1, 12), rng.normal(0.7, 1, 9)
    t = sps.ttest_ind(a, b).statistic
    assert one_way_anova(_groups(a, b)).f == pytest.approx(t * t, rel=1e-10)


def test_anova_degenerate_constants():
    res = one_way_anova(_groups([2.0, 2.0], [2.0, 2.0, 2.0]))
    assert res.p == 1.0
    assert one_way_anova(_groups([1.0, 1.0], [2.0, 2.0])).p == 0.0


def test_anova_preconditions():
    with pytest.raises(StatsError):
        one_way_anova(_groups([1.0, 2.0]))
    with pytest.raises(StatsError):
        one_way_anova(_groups([1.0, 2.0], [3.0]))


@pytest.mark.parametrize("p, k, df, q", STUDENTIZED_RANGE_TABLE)
def test_quantile_against_printed_table(p, k, df, q):
    # the table is rounded to three decimals; the routine promises 1e-4 on top of that
    assert studentized_range_quantile(p, k, df) == pytest.approx(q, abs=5e-4 + 1e-4)


def test_quantile_examples():
    assert studentized_range_quantile(0.05, 3, 10) == pytest.approx(3.877, abs=1e-3)
    normal_limit = math.sqrt(2.0) * sps.norm.isf(0.005)
    assert studentized_range_quantile(0.01, 2, 10000) == pytest.approx(normal_limit, abs=1e-3)
    assert normal_limit == pytest.approx(3.643, abs=1e-3)


def test_quantile_monotone_over_grid():
    ks, dfs = [2, 3, 4, 6, 10], [3, 5, 10, 30, 120]
    q = {(k, df): studentized_range_quantile(0.01, k, df) for k in ks for df in dfs}
    for df in dfs:
        assert all(q[(a, df)] < q[(b, df)] for a, b in zip(ks, ks[1:]))
    for k in ks:
        assert all(q[(k, a)] > q[(k, b)] for a, b in zip(dfs, dfs[1:]))


def test_cdf_inverts_quantile_and_errors():
    q = studentized_range_quantile(0.01, 4, 45)
    assert studentized_range_cdf(q, 4, 45) == pytest.approx(0.99, abs=1e-8)
    assert studentized_range_cdf(0.0, 3, 10) == 0.0
    for args in ((0.0, 3, 10), (1.0, 3, 10), (0.05, 1, 10), (0.05, 3, 0)):
        with pytest.raises(StatsError):
            studentized_range_quantile(*args)


def test_identical_groups_share_letter():
    g = tukey_hsd(_groups([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]))
    assert g.letters == ["a", "a"]
    assert not g.significant.any()


def test_outlying_group_matches_statsmodels():
    from statsmodels.stats.multicomp import pairwise_tukeyhsd

    rng = np.random.default_rng(2)
    samples = [rng.normal(0.98, 0.004, 10) for _ in range(3)] + [rng.normal(0.95, 0.004, 10)]
    g = tukey_hsd(_groups(*samples), alpha=0.01)
    assert g.letters == ["a", "a", "a", "b"]
    data = np.concatenate(samples)
    labels = np.repeat([str(i) for i in range(4)], 10)
    ref = pairwise_tukeyhsd(data, labels, alpha=0.01)
    for (i, j), reject in zip(itertools.combinations(range(4), 2), ref.reject):
        assert g.significant[i, j] == bool(reject)


def test_significance_matches_statsmodels_on_random_designs():
    from statsmodels.stats.multicomp import pairwise_tukeyhsd

    rng = np.random.default_rng(3)
    for _ in range(10):
        k = int(rng.integers(2, 6))
        sizes = rng.integers(3, 12, k)
        samples = [rng.normal(rng.normal(0, 1), 1, n) for n in sizes]
        g = tukey_hsd(_groups(*samples), alpha=0.01)
        ref = pairwise_tukeyhsd(np.concatenate(samples), np.repeat([str(i) for i in range(k)], sizes), alpha=0.01)
        for (i, j), reject, lo, hi in zip(itertools.combinations(range(k), 2), ref.reject, ref.confint[:, 0], ref.confint[:, 1]):
            # skip pairs sitting on the critical boundary to within the quantile accuracy
            if min(abs(lo), abs(hi)) > 1e-3:
                assert g.significant[i, j] == bool(reject)


def _check_letters(letters, sig):
    n = len(letters)
    for i in range(n):
        assert not sig[i, i]
        for j in range(n):
            assert sig[i, j] == sig[j, i]
            if i != j:
                share = bool(set(letters[i]) & set(letters[j]))
                assert share == (not sig[i, j]), (letters, i, j)


@settings(max_examples=200)
@given(st.integers(2, 6).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0, 1), min_size=n, max_size=n),
    st.lists(st.booleans(), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2),
)))
def test_compact_letters_consistent(case):
    means, bits = case
    n = len(means)
    sig = np.zeros((n, n), dtype=bool)
    for (i, j), b in zip(itertools.combinations(range(n), 2), bits):
        sig[i, j] = sig[j, i] = b
    letters = compact_letters(means, sig)
    _check_letters(letters, sig)
    assert "a" in letters[int(np.argmax(means))] or all(letters)


def test_letter_layout_four_kernels():
    rng = np.random.default_rng(4)
    samples = [rng.normal(m, 0.002, 10) for m in (0.987, 0.988, 0.987, 0.975)]
    g = tukey_hsd(_groups(*samples))
    assert g.letters == ["a", "a", "a", "b"]
    _check_letters(g.letters, g.significant)


def test_scale_and_shift_equivariance():
    rng = np.random.default_rng(5)
    samples = [rng.normal(m, 1.0, 8) for m in (0.0, 1.0, 2.5, 2.6)]
    base = tukey_hsd(_groups(*samples))
    moved = tukey_hsd(_groups(*[3.0 * s + 7.0 for s in samples]))
    assert base.letters == moved.letters
    assert np.array_equal(base.significant, moved.significant)


def test_single_group_gets_letter_a():
    g = tukey_hsd([GroupSample("only", [0.9, 0.91])])
    assert g.letters == ["a"] and g.means == [pytest.approx(0.905)]


@settings(max_examples=200)
@given(st.integers(2, 6).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0, 1), min_size=n, max_size=n, unique=True),
    st.lists(st.booleans(), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2),
)))
def test_compact_letters_match_clique_oracle(case):
    means, bits = case
    n = len(means)
    sig = np.zeros((n, n), dtype=bool)
    for (i, j), b in zip(itertools.combinations(range(n), 2), bits):
        sig[i, j] = sig[j, i] = b
    assert compact_letters(means, sig) == clique_letters(means, sig)
