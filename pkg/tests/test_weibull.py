import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from weibull_rul import weibull
from weibull_rul.weibull import FailureRecord, WeibullParams

betas = st.floats(0.3, 6.0)
etas = st.floats(1e-2, 1e4)


def test_params_reject_non_positive():
    with pytest.raises(ValueError):
        WeibullParams(0.0, 1.0)
    with pytest.raises(ValueError):
        WeibullParams(2.0, -1.0)
    with pytest.raises(ValueError):
        FailureRecord(0.0, True)


@pytest.mark.parametrize(
    "t, expected",
    [
        (0.0, 0.0),
        (100.0, 1 - math.exp(-1)),  # 63.2% failed at the characteristic life
        (50.0, 0.22119921692859512),  # 1 - exp(-0.25)
    ],
)
def test_cdf_examples(t, expected):
    assert weibull.cdf(WeibullParams(2.0, 100.0), t) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_cdf_negative_time():
    with pytest.raises(weibull.WeibullDomainError):
        weibull.cdf(WeibullParams(2.0, 100.0), -1.0)


def test_cdf_small_time_precision():
    # naive 1 - exp(-z) loses everything for z ~ 1e-20
    p = WeibullParams(2.0, 1.0)
    assert weibull.cdf(p, 1e-10) == pytest.approx(1e-20, rel=1e-12)


@given(betas, etas)
def test_cdf_at_eta(beta, eta):
    assert weibull.cdf(WeibullParams(beta, eta), eta) == pytest.approx(1 - math.exp(-1), abs=1e-12)


@given(betas, etas)
def test_median_identity(beta, eta):
    t_med = eta * math.log(2) ** (1 / beta)
    assert weibull.cdf(WeibullParams(beta, eta), t_med) == pytest.approx(0.5, abs=1e-12)


@given(betas, etas, st.floats(0, 1e5), st.floats(0, 1e5))
def test_cdf_monotone(beta, eta, a, b):
    p = WeibullParams(beta, eta)
    lo, hi = sorted((a, b))
    assert weibull.cdf(p, lo) <= weibull.cdf(p, hi)


@pytest.mark.parametrize(
    "beta, eta, t, expected",
    [
        (2.0, 100.0, 0.0, 0.0),
        (1.0, 100.0, 0.0, 0.01),
        (2.0, 100.0, 100.0, 0.02 * math.exp(-1)),
    ],
)
def test_pdf_examples(beta, eta, t, expected):
    assert weibull.pdf(WeibullParams(beta, eta), t) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_pdf_singular_for_small_beta():
    with pytest.warns(weibull.DensitySingularityWarning):
        assert weibull.pdf(WeibullParams(0.5, 10.0), 0.0) == math.inf


@pytest.mark.parametrize("beta", [1.5, 2.0])
def test_pdf_integrates_to_one(beta):
    p = WeibullParams(beta, 37.0)
    total, _ = integrate.quad(lambda t: weibull.pdf(p, t), 0, 10 * p.eta, epsabs=1e-12, epsrel=1e-12, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("beta", [1.0, 1.5, 2.0, 3.0])
def test_cdf_gradient_matches_finite_differences(beta):
    p = WeibullParams(beta, 80.0)
    ts = np.linspace(3 * p.eta / 100, 3 * p.eta, 100)
    h = 1e-4 * p.eta
    fd = (weibull.cdf(p, ts + h) - weibull.cdf(p, ts - h)) / (2 * h)
    np.testing.assert_allclose(weibull.cdf_time_gradient(p, ts), fd, rtol=1e-5, atol=1e-12)


def test_cdf_gradient_examples():
    assert weibull.cdf_time_gradient(WeibullParams(2.0, 100.0), 100.0) == pytest.approx(0.0073575888234288, rel=1e-12)
    assert weibull.cdf_time_gradient(WeibullParams(2.0, 100.0), 0.0) == 0.0
    assert weibull.cdf_time_gradient(WeibullParams(1.0, 50.0), 1e-300) == pytest.approx(0.02)
    assert weibull.cdf_time_gradient(WeibullParams(1.0, 50.0), 0.0) == pytest.approx(0.02)
    with pytest.raises(weibull.WeibullDomainError):
        weibull.cdf_time_gradient(WeibullParams(0.7, 50.0), 0.0)


def test_pdf_equals_gradient():
    p = WeibullParams(2.5, 12.0)
    ts = np.linspace(0.1, 40, 50)
    np.testing.assert_array_equal(weibull.pdf(p, ts), weibull.cdf_time_gradient(p, ts))


class TestWeibayes:
    def test_single_failure_mean_life(self):
        assert weibull.weibayes_eta([FailureRecord(7, True)], 1.0) == pytest.approx(7.0, rel=1e-15)

    def test_two_failures(self):
        recs = [FailureRecord(3, True), FailureRecord(4, True)]
        assert weibull.weibayes_eta(recs, 2.0) == pytest.approx(math.sqrt(12.5), abs=1e-12)

    def test_censored_enters_sum_not_count(self):
        recs = [FailureRecord(3, True), FailureRecord(4, False)]
        assert weibull.weibayes_eta(recs, 2.0) == pytest.approx(5.0, abs=1e-12)

    def test_no_failures(self):
        with pytest.raises(weibull.WeibayesError):
            weibull.weibayes_eta([FailureRecord(3, False)], 2.0)
        with pytest.raises(weibull.WeibayesError):
            weibull.weibayes_eta([], 2.0)

    @given(st.lists(st.floats(0.01, 1e4), min_size=1, max_size=20), st.floats(1e-3, 1e3), betas)
    def test_scale_equivariance(self, times, k, beta):
        recs = [FailureRecord(t, i % 3 != 1) for i, t in enumerate(times)]
        scaled = [FailureRecord(r.time * k, r.failed) for r in recs]
        assert weibull.weibayes_eta(scaled, beta) == pytest.approx(k * weibull.weibayes_eta(recs, beta), rel=1e-12)

    @given(st.lists(st.floats(0.01, 1e4), min_size=1, max_size=30))
    def test_beta_one_all_failed_is_mean(self, times):
        recs = [FailureRecord(t, True) for t in times]
        assert weibull.weibayes_eta(recs, 1.0) == pytest.approx(np.mean(times), rel=1e-12)

    def test_large_times_do_not_overflow(self):
        recs = [FailureRecord(1e200, True), FailureRecord(2e200, True)]
        assert weibull.weibayes_eta(recs, 3.0) == pytest.approx(1e200 * (9 / 2) ** (1 / 3), rel=1e-12)
