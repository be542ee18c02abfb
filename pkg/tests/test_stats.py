import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dobrushin.ising import SpinConfig
from dobrushin.lattice import Region
from dobrushin.stats import (
    alpha_estimate,
    alpha_from_splitting,
    alpha_from_tail,
    bulk_range,
    clt_report,
    effective_sample_size,
    height_tail,
    increment_bin,
    increment_moments,
    integrated_autocorr_time,
    lln_ratio,
    marginal_stability,
    max_height,
    mixing_profile,
    pair_check,
    splitting_estimate,
    survival_slope,
    tv_joint_vs_product,
)


def ar1(rng, n, phi):
    x = np.empty(n)
    x[0] = rng.normal()
    for t in range(1, n):
        x[t] = phi * x[t - 1] + math.sqrt(1 - phi ** 2) * rng.normal()
    return x


def test_autocorrelation_time_of_ar1():
    rng = np.random.default_rng(0)
    phi = 0.8
    tau = integrated_autocorr_time(ar1(rng, 200_000, phi))
    assert tau == pytest.approx((1 + phi) / (1 - phi), rel=0.1)
    assert integrated_autocorr_time(rng.normal(size=50_000)) == pytest.approx(1.0, abs=0.1)
    assert effective_sample_size(np.ones(10)) == 10


def test_geometric_tail_slope_is_recovered():
    rng = np.random.default_rng(1)
    alpha = 0.9
    heights = rng.geometric(1 - math.exp(-alpha), size=200_000) - 1
    tail = height_tail(heights, 8, n_boot=50)
    assert np.all(tail.lo <= tail.survival) and np.all(tail.survival <= tail.hi)
    est = alpha_from_tail(tail)
    assert abs(est.alpha - alpha) <= 3 * est.se + 0.01


def test_alpha_needs_enough_heights():
    with pytest.raises(ValueError):
        alpha_estimate([1, 2, 3], [-1.0, -np.inf, -np.inf], [0.1, np.inf, np.inf])


def test_splitting_recovers_product_of_crossing_rates():
    rng = np.random.default_rng(2)
    q = [0.3, 0.2, 0.25, 0.2, 0.22]
    stages = [rng.random(50_000) < p for p in q]
    est = splitting_estimate(stages)
    assert np.allclose(est.log_p, np.cumsum(np.log(q)), atol=4 * est.log_se.max())
    assert np.all(np.diff(est.log_se) > 0)
    a = alpha_from_splitting(est)
    assert math.isfinite(a.alpha) and a.lo < a.alpha < a.hi


def test_splitting_with_an_empty_stage_is_censored():
    est = splitting_estimate([[True, False], [False, False], [True, True]])
    assert est.log_p[0] == pytest.approx(math.log(0.5))
    assert est.log_p[1] == -np.inf and est.log_se[1] == np.inf


def test_max_height_of_simple_configurations():
    r = Region.box(3, 3, 4)
    g = SpinConfig.ground_state(r)
    assert max_height(g) == 0
    assert max_height(g.with_spins({(1, 1, 1): 1, (1, 1, 3): 1})) == 2
    rows = lln_ratio({16: np.array([2, 3, 3]), 32: np.array([4, 4, 5])})
    assert rows[0].median == 3 and rows[1].ratio == pytest.approx(4 / math.log(32))


def test_bulk_range():
    assert bulk_range(16, 1.0) == (3, 13)
    assert bulk_range(8, 0.5) == (2, 6)


def test_increment_moments_recover_zero_means_and_covariance():
    rng = np.random.default_rng(3)
    T = 16
    cov = np.array([[1.0, 0.5], [0.5, 2.0]])
    samples = []
    for _ in range(4000):
        x = rng.multivariate_normal([0.0, 1.0], cov, size=T)
        x[:2] = np.nan  # base increments
        samples.append(x)
    st_ = increment_moments(samples, T)
    a, b = st_.bulk
    assert abs(st_.zscore(0)) < 4
    assert st_.bulk_mean[1] == pytest.approx(1.0, abs=4 * st_.bulk_se[1])
    n_bulk = b - a + 1
    assert st_.bulk_cov == pytest.approx(cov / n_bulk, rel=0.1)
    assert np.all(np.isnan(st_.index_means[:2]))


def test_survival_slope_of_geometric_values():
    rng = np.random.default_rng(4)
    v = rng.geometric(0.5, size=100_000)
    assert survival_slope(v) == pytest.approx(math.log(0.5), rel=0.05)
    assert math.isnan(survival_slope([0, 0, 1]))


@given(st.integers(0, 20), st.integers(-3, 6))
def test_increment_bins_stay_in_range(m, f3):
    assert 0 <= increment_bin(m, f3) < 12


def test_mixing_profile_detects_coupling():
    rng = np.random.default_rng(5)
    n, T = 600, 16
    indep = rng.integers(0, 4, size=(n, T))
    coupled = np.empty((n, T), dtype=int)
    coupled[:, 0] = rng.integers(0, 4, size=n)
    for t in range(1, T):
        keep = rng.random(n) < 0.7
        coupled[:, t] = np.where(keep, coupled[:, t - 1], rng.integers(0, 4, size=n))
    gaps = [1, 2, 4, 8]
    mp_c = mixing_profile(coupled, gaps, n_boot=100)
    mp_i = mixing_profile(indep, gaps, n_boot=100)
    assert mp_c.p_trend < 0.05 and mp_c.kendall_tau < 0
    assert mp_c.alpha[0] > 5 * mp_i.alpha[0]
    assert mp_i.p_trend > 0.01
    assert tv_joint_vs_product(np.zeros(10, int), np.zeros(10, int)) == 0


def test_marginal_stability():
    rng = np.random.default_rng(6)
    same = [rng.integers(0, 5, size=400) for _ in range(3)]
    assert marginal_stability(same, ["a", "b", "c"], n_boot=100).stable
    shifted = same[:2] + [np.minimum(rng.integers(0, 5, size=400) + 1, 11)]
    assert not marginal_stability(shifted, ["a", "b", "c"], n_boot=100).stable


def test_clt_accepts_gaussian_like_integer_sums():
    rng = np.random.default_rng(7)
    T = 16
    values = [rng.integers(-2, 3, size=T) for _ in range(500)]
    rep = clt_report(values, T)
    assert rep.lam == pytest.approx(0, abs=0.05)
    assert rep.sigma2 == pytest.approx(2.0, rel=0.15)
    assert math.isfinite(rep.chi2_p) and rep.normal_not_rejected()


def test_clt_rejects_skewed_sums():
    rng = np.random.default_rng(8)
    T = 16
    values = [rng.exponential(size=T) ** 3 for _ in range(500)]
    rep = clt_report(values, T, integer_valued=False)
    assert not rep.normal_not_rejected()


def test_clt_without_chi_square_dof_falls_back_to_anderson_darling():
    rng = np.random.default_rng(9)
    T = 16
    values = [np.ones(T) + (rng.random(T) < 0.003) for _ in range(500)]
    rep = clt_report(values, T)
    assert math.isnan(rep.chi2_p)
    assert rep.ad_stat > rep.ad_crit01 and not rep.normal_not_rejected()


def test_clt_constant_sums_are_rejected():
    rep = clt_report([np.ones(4)] * 10, 4)
    assert rep.sigma2 == 0 and not rep.normal_not_rejected()


def test_pair_check_on_independent_and_correlated_sums():
    rng = np.random.default_rng(10)
    a, b = rng.normal(size=2000), rng.normal(size=2000)
    pc = pair_check(a, b, n_boot=200)
    assert pc.cov_zero and pc.equal_variances
    pc = pair_check(a, a + 0.2 * b, n_boot=200)
    assert not pc.cov_zero
    pc = pair_check(a, 2 * b, n_boot=200)
    assert not pc.equal_variances
