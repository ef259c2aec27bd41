import math

import numpy as np
import pytest
from scipy import stats as st

from covertime.stats import (
    ConvergenceError,
    chi_square_pvalue,
    gumbel_cdf,
    gumbel_fit,
    ks_gumbel_vs_gaussian,
    ks_statistic,
    ks_two_sample,
    merge_bins,
    skewness,
    tv_distance,
)


def test_ks_matches_scipy_for_continuous():
    x = np.random.default_rng(1).normal(size=3000)
    ours = ks_statistic(x, st.norm.cdf)
    ref = st.kstest(x, st.norm.cdf)
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-14)


def test_ks_meta_rejection_rate():
    rng = np.random.default_rng(2)
    rejects = sum(ks_statistic(rng.exponential(size=500), st.expon.cdf).pvalue < 0.01 for _ in range(100))
    assert rejects <= 2


def test_ks_degenerate_inputs():
    assert ks_statistic(np.zeros(50), st.norm.cdf).statistic >= 0.5
    assert ks_statistic(np.zeros(50), lambda z: st.norm.cdf(z, loc=1e300)).statistic == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ks_statistic(np.zeros(3), st.norm.cdf)


def test_ks_with_atom():
    # half the mass at zero, the rest exponential
    rng = np.random.default_rng(3)
    x = np.where(rng.random(20000) < 0.5, 0.0, rng.exponential(size=20000))
    cdf = lambda z: np.where(np.asarray(z) >= 0, 0.5 + 0.5 * st.expon.cdf(z), 0.0)
    assert ks_statistic(x, cdf).statistic < 0.02


def test_two_sample():
    rng = np.random.default_rng(4)
    assert ks_two_sample(rng.normal(size=2000), rng.normal(size=2000)).pvalue > 0.001
    assert ks_two_sample(rng.normal(size=2000), rng.normal(1, size=2000)).pvalue < 1e-6


def test_tv_and_bins():
    assert tv_distance([0.5, 0.5], [1.0, 0.0]) == 0.5
    with pytest.raises(ValueError):
        tv_distance([1.0], [0.5, 0.5])
    o, e = merge_bins([1, 2, 3, 4], [1.0, 2.0, 3.0, 4.0], minimum=5)
    # 1+2+3 reaches the minimum; the leftover 4 folds into the last bin
    assert e.tolist() == [10.0] and o.tolist() == [10.0]
    o, e = merge_bins([5, 5, 5], [5.0, 6.0, 7.0])
    assert e.tolist() == [5.0, 6.0, 7.0]


def test_chi_square():
    exp = np.array([100.0, 200.0, 300.0])
    assert chi_square_pvalue(exp, exp) == pytest.approx(1.0)
    assert chi_square_pvalue([300, 200, 100], exp) < 1e-10
    with pytest.raises(ValueError):
        chi_square_pvalue([10], [10.0])
    with pytest.raises(ValueError):
        chi_square_pvalue([1, 2], [1.0])


def test_skewness_sign():
    x = np.random.default_rng(5).gumbel(size=20000)
    assert skewness(x) > 0


def test_gumbel_fit_synthetic():
    x = np.random.default_rng(6).gumbel(0.0, 1.0, 100_000)
    f = gumbel_fit(x)
    assert f.converged
    assert abs(f.location) < 0.02 and abs(f.scale - 1) < 0.02
    ref = st.gumbel_r.fit(x)
    assert f.location == pytest.approx(ref[0], abs=1e-3)
    assert f.scale == pytest.approx(ref[1], abs=1e-3)


def test_gumbel_equivariance():
    x = np.random.default_rng(7).gumbel(0.3, 0.7, 5000)
    f = gumbel_fit(x)
    g = gumbel_fit(x + 12.5)
    assert g.location == pytest.approx(f.location + 12.5, abs=1e-9)
    assert g.scale == pytest.approx(f.scale, abs=1e-9)
    h = gumbel_fit(x * 3.0)
    assert h.location == pytest.approx(3 * f.location, abs=1e-8)
    assert h.scale == pytest.approx(3 * f.scale, abs=1e-8)


def test_gumbel_errors():
    with pytest.raises(ValueError):
        gumbel_fit(np.ones(100))
    with pytest.raises(ValueError):
        gumbel_fit(np.arange(10.0))
    x = np.random.default_rng(8).gumbel(size=200)
    with pytest.raises(ConvergenceError):
        gumbel_fit(x, max_iter=1, tol=1e-15)
    assert not gumbel_fit(x, max_iter=1, tol=1e-15, strict=False).converged


def test_gumbel_beats_normal_on_gumbel_data():
    x = np.random.default_rng(9).gumbel(size=5000)
    r = ks_gumbel_vs_gaussian(x)
    assert r["ks_gumbel"] < r["ks_normal"]
    assert gumbel_cdf(0.0, 0.0, 1.0) == pytest.approx(math.exp(-1))
