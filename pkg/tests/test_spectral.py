import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from rffderiv.errors import InvalidArgument, OutOfScopeOrder, UnsupportedDimension
from rffderiv.spectral import (
    Z_MIN,
    Gaussian,
    GeneralizedGaussian,
    SpectralMeasure,
    abs_moment,
    appendix_K,
    as_multi_index,
    bernstein_check,
    bernstein_ratio,
    c_pq,
    certified_K,
    log_bernstein_ratio,
    sample,
    sigma_pq,
)

G1 = SpectralMeasure.gaussian(1.0)


def double_factorial(n):
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def normal_abs_moment(k, sigma=1.0):
    # independent of the log-gamma path: integer double factorials
    v = sigma ** k * double_factorial(k - 1)
    return v if k % 2 == 0 else v * math.sqrt(2 / math.pi)


# ---------------------------------------------------------------------------
# marginals and measures
# ---------------------------------------------------------------------------


def test_gengauss_normalizer_integrates_to_one():
    for ell in (1, 2, 3, 5):
        mg = GeneralizedGaussian(ell)
        total, _ = quad(lambda w: float(mg.pdf(w)), -np.inf, np.inf, epsabs=1e-13)
        assert total == pytest.approx(1.0, rel=1e-10)
        assert mg.normalizer == pytest.approx(ell / math.gamma(1 / (2 * ell)), rel=1e-15)


def test_invalid_marginals():
    with pytest.raises(InvalidArgument):
        Gaussian(0.0)
    with pytest.raises(InvalidArgument):
        GeneralizedGaussian(0)
    with pytest.raises(InvalidArgument):
        GeneralizedGaussian(1.5)
    with pytest.raises(InvalidArgument):
        SpectralMeasure(())


def test_descriptor_round_trip():
    m = SpectralMeasure((Gaussian(0.5), GeneralizedGaussian(2)))
    assert SpectralMeasure.from_json(m.to_json()) == m
    assert json.loads(m.to_json()) == {
        "d": 2,
        "marginals": [{"kind": "gaussian", "sigma": 0.5}, {"kind": "gengauss", "ell": 2}],
    }
    assert SpectralMeasure.from_dict({"kind": "gengauss", "ell": 2}) == SpectralMeasure.gengauss(2)
    with pytest.raises(InvalidArgument):
        SpectralMeasure.from_dict({"d": 3, "marginals": [{"kind": "gaussian", "sigma": 1.0}]})
    with pytest.raises(InvalidArgument):
        SpectralMeasure.from_dict({"kind": "laplace"})


def test_multi_index():
    assert as_multi_index("1,0") == (1, 0)
    assert as_multi_index(2) == (2,)
    assert as_multi_index(0, d=3) == (0, 0, 0)
    assert sum(as_multi_index([1, 2, 3])) == 6
    with pytest.raises(InvalidArgument):
        as_multi_index([-1])
    with pytest.raises(InvalidArgument):
        as_multi_index([1, 0], d=3)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def test_sample_gaussian_second_moment():
    s = sample(G1, 10 ** 6, 42)
    assert s.frequencies.shape == (10 ** 6, 1)
    assert abs(np.mean(s.frequencies ** 2) - 1.0) <= 3 * math.sqrt(2 / 10 ** 6)


def test_sample_gengauss1_second_moment():
    s = sample(SpectralMeasure.gengauss(1), 10 ** 6, 7)
    w2 = s.frequencies[:, 0] ** 2
    se = w2.std(ddof=1) / math.sqrt(w2.size)
    # E w^2 = Gamma(3/2) / Gamma(1/2)
    expected = float(mpmath.gamma(1.5) / mpmath.gamma(0.5))
    assert expected == 0.5
    assert abs(w2.mean() - expected) <= 5 * se


@pytest.mark.parametrize("ell", [2, 3])
def test_sample_gengauss_moments(ell):
    measure = SpectralMeasure.gengauss(ell)
    w = sample(measure, 4 * 10 ** 5, 11).frequencies[:, 0]
    for k in (1, 2, 4):
        vals = np.abs(w) ** k
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - abs_moment(measure, k)) <= 5 * se
    # symmetric around zero
    assert abs(w.mean()) <= 5 * w.std() / math.sqrt(w.size)


def test_sample_is_deterministic():
    for measure in (G1, SpectralMeasure.gengauss(2), SpectralMeasure((Gaussian(2.0), GeneralizedGaussian(3)))):
        a = sample(measure, 5, 123)
        b = sample(measure, 5, 123)
        np.testing.assert_array_equal(a.frequencies, b.frequencies)
        assert a.frequencies.tobytes() == b.frequencies.tobytes()
    assert not np.array_equal(sample(G1, 5, 1).frequencies, sample(G1, 5, 2).frequencies)


def test_sample_scales_and_columns():
    m = SpectralMeasure((Gaussian(3.0), Gaussian(0.1)))
    w = sample(m, 200000, 5).frequencies
    np.testing.assert_allclose(w.std(axis=0), [3.0, 0.1], rtol=0.01)
    assert abs(np.corrcoef(w.T)[0, 1]) < 0.01


def test_sample_rejects_zero():
    with pytest.raises(InvalidArgument):
        sample(G1, 0, 1)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


def test_abs_moment_examples():
    assert abs_moment(G1, [2]) == pytest.approx(1.0, rel=1e-14)
    assert abs_moment(G1, [4]) == pytest.approx(3.0, rel=1e-14)
    assert abs_moment(G1, [1]) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-14)
    expected = float(mpmath.gamma(mpmath.mpf(3) / 4) / mpmath.gamma(mpmath.mpf(1) / 4))
    assert expected == pytest.approx(0.33798912003364, rel=1e-12)
    assert abs_moment(SpectralMeasure.gengauss(2), [2]) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("sigma", [0.3, 1.0, 2.5])
def test_gaussian_moments_match_double_factorials(sigma):
    m = SpectralMeasure.gaussian(sigma)
    for k in range(0, 41):
        assert abs_moment(m, k) == pytest.approx(normal_abs_moment(k, sigma), rel=1e-12)


@pytest.mark.parametrize("measure", [G1, SpectralMeasure.gaussian(0.7), SpectralMeasure.gengauss(1),
                                     SpectralMeasure.gengauss(2), SpectralMeasure.gengauss(3)])
def test_even_moments_match_quadrature(measure):
    mg = measure.marginals[0]
    for n in range(0, 13, 2):
        # cutoff where the tail is analytically below 1e-16 relative
        cutoff = mg.tail_cutoff(n, 1e-16 * abs_moment(measure, n))
        val, _ = quad(lambda w: w ** n * float(mg.pdf(w)), 0, cutoff, epsabs=0, epsrel=1e-13, limit=200)
        assert 2 * val == pytest.approx(abs_moment(measure, n), rel=1e-9)


def test_gengauss1_equals_gaussian_inv_sqrt2():
    a = SpectralMeasure.gengauss(1)
    b = SpectralMeasure.gaussian(1 / math.sqrt(2))
    for k in range(13):
        assert abs_moment(a, k) == pytest.approx(abs_moment(b, k), rel=1e-12)


def test_product_moments():
    m = SpectralMeasure((Gaussian(1.0), GeneralizedGaussian(2)))
    assert abs_moment(m, [2, 2]) == pytest.approx(abs_moment(G1, 2) * abs_moment(SpectralMeasure.gengauss(2), 2))
    with pytest.raises(InvalidArgument):
        abs_moment(m, [2])


def test_sigma_pq_examples():
    assert sigma_pq(G1, 0, 0) == pytest.approx(1.0, rel=1e-14)
    assert sigma_pq(G1, 1, 1) == pytest.approx(math.sqrt(3), rel=1e-14)
    for s in (0.5, 2.0):
        assert sigma_pq(SpectralMeasure.gaussian(s), 1, 1) == pytest.approx(s * s * math.sqrt(3), rel=1e-13)


def test_c_pq_examples():
    assert c_pq(G1, 0, 0) == pytest.approx(1.0, rel=1e-14)
    assert c_pq(G1, 1, 1) == pytest.approx(math.sqrt(5), rel=1e-13)
    assert c_pq(SpectralMeasure.gaussian(d=2), 0, 0) == pytest.approx(math.sqrt(2), rel=1e-14)
    # d = 2, p = (1, 0): sqrt(E w1^4 + E w1^2 w2^2) / sqrt(E w1^2) = sqrt(3 + 1)
    assert c_pq(SpectralMeasure.gaussian(d=2), (1, 0), (0, 0)) == pytest.approx(2.0, rel=1e-13)


# ---------------------------------------------------------------------------
# Bernstein ratios
# ---------------------------------------------------------------------------


def test_bernstein_ratio_examples():
    for r in range(1, 7):
        assert bernstein_ratio(G1, r, 2) == pytest.approx(1.0, abs=1e-13)
    assert bernstein_ratio(G1, 2, 3) == pytest.approx(15 / 3 ** 1.5, rel=1e-13)
    assert bernstein_ratio(G1, 1, 3) == pytest.approx(2 * math.sqrt(2 / math.pi), rel=1e-13)


def test_bernstein_ratio_sigma_free():
    for r, n in [(1, 5), (2, 7), (3, 4)]:
        assert bernstein_ratio(SpectralMeasure.gaussian(3.7), r, n) == pytest.approx(bernstein_ratio(G1, r, n), rel=1e-12)


def test_bernstein_ratio_matches_gengauss_closed_form():
    for ell in (1, 2, 3):
        for r in (1, 2, 3):
            for n in (2, 3, 6, 11):
                two_l = mpmath.mpf(2 * ell)
                g0 = mpmath.gamma(1 / two_l)
                expected = (mpmath.gamma((r * n + 1) / two_l) / g0) / (mpmath.gamma((2 * r + 1) / two_l) / g0) ** (mpmath.mpf(n) / 2)
                assert bernstein_ratio(SpectralMeasure.gengauss(ell), r, n) == pytest.approx(float(expected), rel=1e-11)


def test_bernstein_ratio_large_n_stays_in_log_space():
    lv = log_bernstein_ratio(G1, 4, 200)
    assert math.isfinite(lv) and lv > 709
    assert bernstein_ratio(G1, 4, 200) == math.inf


def test_bernstein_ratio_errors():
    with pytest.raises(UnsupportedDimension):
        bernstein_ratio(SpectralMeasure.gaussian(d=2), 1, 3)
    with pytest.raises(InvalidArgument):
        bernstein_ratio(G1, 1, 1)


def test_bernstein_check_known_cases():
    assert bernstein_check(G1, 1, 1, 30).verdict == "pass"
    assert bernstein_check(G1, 2, 2, 30).verdict == "pass"
    rep = bernstein_check(G1, 4, 10, 200)
    assert rep.verdict == "fail"
    assert rep.first_violating_n <= 200


# first violating n for N(0, 1), located with 60-digit mpmath and integer
# double factorials (see test_violations_against_mpmath)
GAUSSIAN_VIOLATIONS = {
    (3, 1): 3, (3, 2): 5, (3, 5): 35, (3, 10): 147,
    (4, 1): 3, (4, 2): 3, (4, 5): 6, (4, 10): 14,
}


@pytest.mark.parametrize("rk,n_first", sorted(GAUSSIAN_VIOLATIONS.items()))
def test_gaussian_first_violation(rk, n_first):
    r, K = rk
    rep = bernstein_check(G1, r, K, 200)
    assert rep.first_violating_n == n_first
    assert rep.violation_ratio > 1.0
    assert len(rep.ratios) == 199


def test_violations_against_mpmath():
    mpmath.mp.dps = 60
    try:
        def moment(k):
            v = mpmath.mpf(double_factorial(k - 1))
            return v if k % 2 == 0 else v * mpmath.sqrt(2 / mpmath.pi)

        for (r, K), n_first in GAUSSIAN_VIOLATIONS.items():
            for n in range(2, n_first + 1):
                lhs = moment(r * n) / moment(2 * r) ** (mpmath.mpf(n) / 2)
                rhs = mpmath.factorial(n) / 2 * mpmath.mpf(K) ** (n - 2)
                assert (lhs > rhs) == (n == n_first)
    finally:
        mpmath.mp.dps = 15


def test_bernstein_check_rejects_small_K():
    with pytest.raises(InvalidArgument):
        bernstein_check(G1, 1, 0.99, 30)
    with pytest.raises(InvalidArgument):
        bernstein_check(G1, 1, 1, 1)


@settings(max_examples=40, deadline=None)
@given(r=st.integers(1, 5), K=st.floats(1.0, 20.0), extra=st.floats(0.0, 20.0), n_max=st.integers(2, 60))
def test_bernstein_verdict_monotone_in_K(r, K, extra, n_max):
    for measure in (G1, SpectralMeasure.gengauss(2)):
        if bernstein_check(measure, r, K, n_max).passed:
            assert bernstein_check(measure, r, K + extra, n_max).passed


def test_report_serialization():
    rep = bernstein_check(G1, 4, 10, 200)
    d = rep.to_dict()
    assert d["verdict"] == "fail" and d["first_violating_n"] == 14
    assert d["ratios"][-1] is None  # overflowed, log value kept
    assert len(d["log_ratios"]) == 199
    json.dumps(d)


# ---------------------------------------------------------------------------
# closed-form generalized Gaussian constant
# ---------------------------------------------------------------------------


def test_z_min_is_digamma_root():
    assert float(mpmath.findroot(mpmath.digamma, 1.46)) == pytest.approx(Z_MIN, rel=1e-15)


def test_appendix_K_examples():
    res = appendix_K(1, 2)
    assert res.K == pytest.approx(2 / math.sqrt(3), rel=1e-13)
    assert res.n_s == 1
    assert res.c_r == pytest.approx(0.75, rel=1e-13)
    res = appendix_K(1, 1)
    assert res.K == pytest.approx(math.sqrt(2), rel=1e-13)
    assert res.c_r == pytest.approx(0.5, rel=1e-13)


# K_r, n_s from 30-digit mpmath evaluation of the same max(...) expression
APPENDIX_K = {
    (2, 1): (1.8976999933151774, 4), (2, 2): (2.8391086082825959, 4),
    (2, 3): (2.5892894491057249, 4), (2, 4): (1.7888543819998318, 4),
    (3, 1): (2.1479212919514358, 7), (3, 2): (3.9173937199155917, 7),
    (3, 3): (4.5336789251002197, 7), (3, 4): (4.1401074276549153, 7),
    (3, 5): (3.2407412102457059, 7), (3, 6): (2.2677868380553634, 7),
}


@pytest.mark.parametrize("key", sorted(APPENDIX_K))
def test_appendix_K_values(key):
    K, n_s = APPENDIX_K[key]
    res = appendix_K(*key)
    assert res.n_s == n_s
    assert res.K == pytest.approx(K, rel=1e-12)


def test_appendix_K_certifies():
    for ell in (1, 2, 3):
        for r in range(1, 2 * ell + 1):
            K = appendix_K(ell, r).K
            assert K >= 1
            assert bernstein_check(SpectralMeasure.gengauss(ell), r, K, 50).passed
    assert bernstein_check(SpectralMeasure.gengauss(2), 4, appendix_K(2, 4).K, 30).passed


def test_appendix_K_out_of_scope():
    with pytest.raises(OutOfScopeOrder):
        appendix_K(1, 3)


def test_certified_K():
    assert certified_K(G1, 0, 0) == 1.0
    assert certified_K(G1, 1, 0) == 1.0
    assert certified_K(G1, 1, 1) == 2.0
    assert certified_K(G1, 2, 1) is None
    assert certified_K(SpectralMeasure.gengauss(2), 2, 1) == appendix_K(2, 3).K
    assert certified_K(SpectralMeasure.gaussian(d=2), (1, 0), (0, 0)) is None
    assert certified_K(SpectralMeasure.gaussian(d=2), (0, 0), (0, 0)) == 1.0
