import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps
from statsmodels.stats.diagnostic import lilliefors as sm_lilliefors

from oracles import cliffs_delta_loop, mann_whitney_exact_enumeration
from tennis_frontier.stats import (
    DegenerateSample,
    bonferroni,
    bootstrap_ci,
    cliffs_delta,
    cohens_d,
    cohens_d_value,
    compare_tiers,
    lilliefors_test,
    mann_whitney_u,
    pearson_and_regression,
    tukey_kramer,
)

small_samples = st.lists(st.integers(0, 6).map(float), min_size=1, max_size=6)


def test_cliffs_delta_matches_loop_on_random_samples():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = rng.integers(0, 8, rng.integers(1, 12)).astype(float)
        b = rng.integers(0, 8, rng.integers(1, 12)).astype(float)
        assert cliffs_delta(a, b) == cliffs_delta_loop(a, b)


@settings(max_examples=200, deadline=None)
@given(small_samples, small_samples)
def test_cliffs_delta_antisymmetric_and_bounded(a, b):
    d = cliffs_delta(a, b)
    assert -1.0 <= d <= 1.0
    assert cliffs_delta(b, a) == -d


def test_mann_whitney_exact_small_case():
    u, p = mann_whitney_u([1, 2], [3, 4])
    assert u == 0
    assert p == pytest.approx(1 / 3, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 5).map(float), min_size=1, max_size=5),
       st.lists(st.integers(0, 5).map(float), min_size=1, max_size=5))
def test_mann_whitney_exact_matches_enumeration(a, b):
    if len(set(a + b)) == 1:
        return
    _, p = mann_whitney_u(a, b)
    assert p == pytest.approx(mann_whitney_exact_enumeration(a, b), abs=1e-12)


def test_mann_whitney_against_scipy():
    rng = np.random.default_rng(1)
    a, b = rng.normal(0, 1, 12), rng.normal(0.8, 1, 15)
    u, p = mann_whitney_u(a, b)
    ref = sps.mannwhitneyu(a, b, alternative="two-sided", method="exact")
    assert u == ref.statistic
    assert p == pytest.approx(ref.pvalue, rel=1e-9)
    a, b = rng.normal(0, 1, 40), rng.normal(0.5, 1, 30)  # normal approximation branch
    u, p = mann_whitney_u(a, b)
    ref = sps.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    assert p == pytest.approx(ref.pvalue, rel=1e-9)


def test_bonferroni_arithmetic():
    assert bonferroni([0.01, 0.2, 0.5]) == [0.03, 0.6000000000000001, 1.0]
    assert bonferroni([]) == []


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=10))
def test_bonferroni_properties(ps):
    adj = bonferroni(ps)
    assert all(p <= q <= 1.0 for p, q in zip(ps, adj))


def test_cohens_d_worked_example():
    assert cohens_d_value([1, 2, 3], [2, 3, 4]) == pytest.approx(-1.0, abs=1e-15)
    d, (lo, hi) = cohens_d([1, 2, 3, 5], [2, 3, 4, 6], iterations=300, seed=1)
    assert lo <= hi


def test_cohens_d_degenerate():
    with pytest.raises(DegenerateSample):
        cohens_d_value([1, 1], [1, 1])


def test_bootstrap_ci_deterministic_and_ordered():
    rng = np.random.default_rng(3)
    a, b = rng.normal(1, 1, 20), rng.normal(0, 1, 25)
    ci1 = bootstrap_ci("cliffs_delta", a, b, 500, seed=9)
    ci2 = bootstrap_ci("cliffs_delta", a, b, 500, seed=9)
    assert ci1 == ci2
    assert ci1[0] <= cliffs_delta(a, b) <= ci1[1]


def test_lilliefors_against_statsmodels():
    rng = np.random.default_rng(5)
    for x in (rng.normal(size=30), rng.exponential(size=30)):
        stat, p = lilliefors_test(x, n_sim=4000, seed=2)
        ref_stat, ref_p = sm_lilliefors(x, dist="norm", pvalmethod="table")
        assert stat == pytest.approx(ref_stat, abs=1e-12)
        assert abs(p - ref_p) < 0.03 or (p < 0.01 and ref_p <= 0.01)


def test_lilliefors_degenerate():
    with pytest.raises(DegenerateSample):
        lilliefors_test([1.0, 2.0, 3.0])
    with pytest.raises(DegenerateSample):
        lilliefors_test([2.0] * 6)


def test_tukey_kramer_against_scipy():
    rng = np.random.default_rng(7)
    groups = [rng.normal(0, 1, 8), rng.normal(0.5, 1, 11), rng.normal(1.5, 1, 6)]
    rows = tukey_kramer(groups)
    ref = sps.tukey_hsd(*groups)
    for r in rows:
        assert r["mean_diff"] == pytest.approx(ref.statistic[r["i"], r["j"]], abs=1e-12)
        assert r["p"] == pytest.approx(ref.pvalue[r["i"], r["j"]], abs=1e-6)


def test_regression_against_linregress():
    rng = np.random.default_rng(2)
    x = rng.uniform(0.3, 0.7, 40)
    y = 0.3 - 0.4 * x + rng.normal(0, 0.01, 40)
    res = pearson_and_regression(x, y)
    ref = sps.linregress(x, y)
    assert res.r == pytest.approx(ref.rvalue, abs=1e-12)
    assert res.p == pytest.approx(ref.pvalue, rel=1e-6)
    assert res.slope == pytest.approx(ref.slope, abs=1e-12)
    fit, lo, hi = res.band(np.array([0.3, 0.5, 0.7]))
    assert np.all(lo < fit) and np.all(fit < hi)
    # the band is narrowest at the mean of x
    widths = hi - lo
    assert widths[1] < widths[0] and widths[1] < widths[2]


def test_regression_band_matches_statsmodels():
    import statsmodels.api as sm

    rng = np.random.default_rng(8)
    x = rng.uniform(0, 1, 25)
    y = 2 * x + rng.normal(0, 0.3, 25)
    res = pearson_and_regression(x, y)
    ols = sm.OLS(y, sm.add_constant(x)).fit()
    x0 = np.array([0.1, 0.9])
    pred = ols.get_prediction(sm.add_constant(x0)).summary_frame(alpha=0.05)
    fit, lo, hi = res.band(x0)
    np.testing.assert_allclose(lo, pred["mean_ci_lower"], atol=1e-10)
    np.testing.assert_allclose(hi, pred["mean_ci_upper"], atol=1e-10)


def test_compare_tiers_nonparametric():
    rng = np.random.default_rng(4)
    values = {"low": rng.normal(0.5, 0.1, 12), "mid": rng.normal(0.6, 0.1, 15), "high": rng.normal(0.8, 0.1, 10)}
    res = compare_tiers(values, "nonparametric", bootstrap_iterations=200, seed=1, n_sim=500)
    assert res["family"] == "nonparametric"
    pairs = [tuple(c["pair"]) for c in res["comparisons"]]
    assert pairs == [("high", "low"), ("high", "mid"), ("mid", "low")]
    hl = res["comparisons"][0]
    assert hl["effect_name"] == "cliffs_delta" and hl["large_effect"] is True
    assert hl["p_adjusted"] == pytest.approx(min(1.0, 3 * hl["p_value"]))


def test_compare_tiers_parametric_uses_tukey():
    rng = np.random.default_rng(4)
    values = {"low": rng.normal(0.5, 0.1, 12), "mid": rng.normal(0.6, 0.1, 15), "high": rng.normal(0.8, 0.1, 10)}
    res = compare_tiers(values, "parametric", bootstrap_iterations=200, seed=1, n_sim=500)
    assert all(c["method"] == "tukey_kramer" and c["effect_name"] == "cohens_d" for c in res["comparisons"])


def test_compare_tiers_insufficient_groups():
    res = compare_tiers({"mid": [0.5, 0.6, 0.7, 0.65]}, "nonparametric", bootstrap_iterations=50, n_sim=100)
    assert all(c["note"] == "insufficient groups" for c in res["comparisons"])
