import math

import numpy as np
import pytest
import scipy.stats as sps
from hypothesis import given, settings, strategies as st

from buscut.stats import (StatsError, betainc, elasticity, f_sf, gaussian_kde, histogram_pmf, kendall,
                          ks_statistic, ols, rankdata, scott_bandwidth, spearman, stars, t_sf_two_sided,
                          tv_distance, zscore)

# ---------------------------------------------------------------- distributions

def test_betainc_against_scipy():
    from scipy.special import betainc as ref
    for a, b, x in [(0.5, 0.5, 0.3), (2, 3, 0.7), (10, 1.5, 0.95), (30, 40, 0.4), (1, 1, 0.0), (3, 2, 1.0)]:
        assert betainc(a, b, x) == pytest.approx(ref(a, b, x), abs=1e-12)


@pytest.mark.parametrize("t,df", [(0.0, 5), (1.3, 3), (-2.7, 12), (8.0, 40), (0.2, 1)])
def test_t_pvalue_against_scipy(t, df):
    assert t_sf_two_sided(t, df) == pytest.approx(2 * sps.t.sf(abs(t), df), abs=1e-10)


@pytest.mark.parametrize("f,d1,d2", [(0.5, 1, 10), (3.2, 3, 20), (12.0, 5, 60), (1e-3, 2, 2)])
def test_f_pvalue_against_scipy(f, d1, d2):
    assert f_sf(f, d1, d2) == pytest.approx(sps.f.sf(f, d1, d2), abs=1e-10)


# ---------------------------------------------------------------- OLS

def test_ols_hand_example():
    # normal equations by hand: slope = Sxy / Sxx = 1 / 2, intercept = 5/3 - 1/2, R^2 = 1 - (1/6) / (2/3)
    res = ols([[0.0], [1.0], [2.0]], [1.0, 2.0, 2.0])
    assert abs(res.coefficients[0] - 0.5) <= 1e-10
    assert abs(res.intercept - 7 / 6) <= 1e-10
    assert abs(res.r_squared - 0.75) <= 1e-10
    assert res.n == 3


def test_ols_against_scipy_linregress():
    rng = np.random.default_rng(0)
    x = rng.normal(size=30)
    y = 2 - 0.7 * x + rng.normal(scale=0.5, size=30)
    res = ols(x, y)
    ref = sps.linregress(x, y)
    assert res.coefficients[0] == pytest.approx(ref.slope, abs=1e-10)
    assert res.intercept == pytest.approx(ref.intercept, abs=1e-10)
    assert res.r_squared == pytest.approx(ref.rvalue ** 2, abs=1e-10)
    assert res.p_values[0] == pytest.approx(ref.pvalue, abs=1e-10)
    assert res.std_errors[0] == pytest.approx(ref.stderr, abs=1e-10)
    # with one regressor F = t^2 and shares its p-value
    assert res.f_p_value == pytest.approx(ref.pvalue, abs=1e-10)


def test_ols_against_pinv_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n, p = int(rng.integers(8, 201)), int(rng.integers(1, 6))
        X = rng.normal(size=(n, p))
        y = X @ rng.normal(size=p) + rng.normal(size=n)
        res = ols(X, y)
        beta = np.linalg.pinv(np.column_stack([np.ones(n), X])) @ y
        np.testing.assert_allclose([res.intercept, *res.coefficients], beta, atol=1e-8)
        assert 0.0 <= res.r_squared <= 1.0
        assert all(0.0 <= q <= 1.0 for q in (*res.p_values, res.p_intercept, res.f_p_value))


def test_ols_standardized_intercept_vanishes():
    rng = np.random.default_rng(2)
    X = np.column_stack([zscore(c) for c in rng.normal(size=(3, 50))])
    res = ols(X, rng.normal(size=50) * 4 + 9, standardize_y=True)
    assert abs(res.intercept) < 1e-10


def test_ols_errors():
    with pytest.raises(StatsError, match="N > p"):
        ols([[1.0], [2.0]], [1.0, 2.0])
    with pytest.raises(StatsError, match="zero-variance"):
        ols([[1.0], [2.0], [3.0]], [1.0, 1.0, 1.0])
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.1 - 0.1]])
    with pytest.raises(StatsError, match="beta is a linear"):
        ols(X, [1.0, 3.0, 2.0, 5.0], names=("alpha", "beta"))
    with pytest.raises(StatsError):
        ols([[1.0], [2.0], [3.0]], [1.0, 2.0])


def test_regression_json_layout():
    res = ols(np.arange(10.0), np.arange(10.0) ** 1.5, names=("x",))
    blob = res.to_json()
    assert set(blob) == {"coefficients", "intercept", "R2", "F", "F_p", "F_stars", "N"}
    assert blob["coefficients"]["x"]["stars"] == "***" and blob["N"] == 10


def test_stars():
    assert [stars(p) for p in (0.001, 0.02, 0.07, 0.2, math.nan)] == ["***", "**", "*", "", ""]


# ---------------------------------------------------------------- z-scores

def test_zscore_population_and_degenerate():
    z = zscore([1.0, 2.0, 3.0, 4.0])
    assert z.mean() == pytest.approx(0.0) and z.std() == pytest.approx(1.0)
    with pytest.warns(RuntimeWarning):
        assert zscore([2.0, 2.0]).tolist() == [0.0, 0.0]


# ---------------------------------------------------------------- KDE

def test_kde_against_scipy_and_normalization():
    x = np.random.default_rng(3).gamma(2.0, 3.0, size=400)
    grid, dens = gaussian_kde(x)
    ref = sps.gaussian_kde(x, bw_method="scott")
    np.testing.assert_allclose(dens, ref(grid), rtol=1e-9, atol=1e-14)
    assert scott_bandwidth(x) == pytest.approx(x.std(ddof=1) * 400 ** -0.2)
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-3)
    assert np.all(dens >= 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=40, unique=True), st.floats(-100, 100))
def test_kde_shift_equivariance(xs, c):
    x = np.array(xs)
    if x.std() < 1e-3:
        return
    grid = np.linspace(x.min() - 5, x.max() + 5, 64)
    _, d1 = gaussian_kde(x, grid)
    _, d2 = gaussian_kde(x + c, grid + c)
    np.testing.assert_allclose(d1, d2, rtol=1e-7, atol=1e-12)
    assert np.all(d1 >= 0)


def test_kde_errors():
    with pytest.raises(StatsError):
        gaussian_kde([1.0])
    with pytest.raises(StatsError):
        gaussian_kde([1.0, 1.0, 1.0])


# ---------------------------------------------------------------- rank correlation

def test_rankdata_average_ties():
    assert rankdata([3, 1, 3, 2]).tolist() == [3.5, 1.0, 3.5, 2.0]
    np.testing.assert_array_equal(rankdata([5, 5, 1, 9, 5]), sps.rankdata([5, 5, 1, 9, 5]))


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=2, max_size=30))
def test_rank_correlations_against_scipy(pairs):
    a = np.array([p[0] for p in pairs], dtype=float)
    b = np.array([p[1] for p in pairs], dtype=float)
    s, k = spearman(a, b), kendall(a, b)
    if len(set(a)) < 2 or len(set(b)) < 2:
        assert not s.defined and not k.defined
        return
    assert s.statistic == pytest.approx(sps.spearmanr(a, b).statistic, abs=1e-12)
    assert k.statistic == pytest.approx(sps.kendalltau(a, b).statistic, abs=1e-12)
    # spearman of raw values equals spearman of their ranks
    assert spearman(rankdata(a), rankdata(b)).statistic == s.statistic


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(-1000, 1000), st.integers(-1000, 1000)), min_size=2, max_size=25))
def test_kendall_invariant_under_monotone_transform(pairs):
    # integer inputs keep the transforms strictly monotone in floating point too
    a = np.array([p[0] for p in pairs], dtype=float)
    b = np.array([p[1] for p in pairs], dtype=float)
    k1 = kendall(a, b).statistic
    k2 = kendall(a ** 3 + 5 * a, np.exp(b / 50.0)).statistic
    assert (math.isnan(k1) and math.isnan(k2)) or k1 == pytest.approx(k2, abs=1e-12)


def test_kendall_one_swap_and_threshold():
    k = kendall([1, 2, 3], [1, 3, 2], threshold=1.0)
    assert k.statistic == pytest.approx(1 / 3) and k.passed is False
    assert kendall([1, 2, 3, 4], [2, 3, 4, 9], threshold=1.0).passed is True
    assert kendall([1, 2, 3, 4], [1, 2, 4, 3]).statistic == pytest.approx(2 / 3)
    with pytest.raises(StatsError):
        spearman([1], [2])


# ---------------------------------------------------------------- elasticity and distances

def test_elasticity():
    assert elasticity(10.0, 12.0, 1.0, 2.0) == pytest.approx(0.2)
    assert elasticity(10.0, 10.0, 1.0, 2.0) == 0.0
    with pytest.warns(RuntimeWarning):
        assert math.isnan(elasticity(0.0, 1.0, 1.0, 2.0))
    with pytest.raises(StatsError):
        elasticity(1.0, 2.0, 0.0, 1.0)
    with pytest.raises(StatsError):
        elasticity(1.0, 2.0, 1.0, 1.0)


def test_ks_against_scipy():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=80), rng.normal(0.3, size=55)
    assert ks_statistic(a, b) == pytest.approx(sps.ks_2samp(a, b).statistic, abs=1e-12)
    assert ks_statistic(a, a) == 0.0
    c = np.round(a)
    assert ks_statistic(c, np.round(b)) == pytest.approx(sps.ks_2samp(c, np.round(b)).statistic, abs=1e-12)


def test_tv_and_pmf():
    support, pa, pb = histogram_pmf([0, 0, 1, 2], [0, 1, 1, 1])
    assert support.tolist() == [0, 1, 2]
    assert pa.tolist() == [0.5, 0.25, 0.25] and pb.tolist() == [0.25, 0.75, 0.0]
    assert tv_distance(pa, pb) == pytest.approx(0.5)
    assert tv_distance(pa, pa) == 0.0
    with pytest.raises(StatsError):
        tv_distance([1.0], [0.5, 0.5])
