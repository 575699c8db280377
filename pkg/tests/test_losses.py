import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from weibull_rul import losses
from weibull_rul.losses import LOSS_KINDS, LossSpec
from weibull_rul.weibull import WeibullParams

W = WeibullParams(2.0, 100.0)


def spec(kind, lam=1.0, w=W, **kw):
    return LossSpec(kind, lam=lam, weibull=w if kind not in losses.TRADITIONAL else None, **kw)


def reference_loss(kind, lam, y, yhat, t_total, params):
    """Loop-based reference, independent of the vectorised implementation."""
    def F(t):
        return 1.0 - math.exp(-((t / params.eta) ** params.beta))

    def metric(name, a, b):
        if name == "mse":
            return sum((x - z) ** 2 for x, z in zip(a, b)) / len(a)
        if name == "rmse":
            return math.sqrt(metric("mse", a, b))
        return math.sqrt(sum((math.log(1 + x) - math.log(1 + z)) ** 2 for x, z in zip(a, b)) / len(a))

    base = kind.split("-")[1].lower() if kind.startswith("W-") else kind.lower()
    total = 0.0
    if not kind.startswith("W-") or kind.endswith("Comb"):
        total += metric(base, y, yhat)
    if kind.startswith("W-"):
        ft = [F(a * t) for a, t in zip(y, t_total)]
        fp = [F(b * t) for b, t in zip(yhat, t_total)]
        total += lam * metric(base, ft, fp)
    return total


class TestMetrics:
    def test_examples(self):
        assert losses.mse([0, 0], [1, 1]) == 1.0
        assert losses.rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5))
        assert losses.rmse([1, 2, 3], [1, 2, 3]) == 0.0
        assert losses.rmsle([0], [math.e - 1]) == pytest.approx(1.0, abs=1e-15)

    def test_rmsle_domain(self):
        with pytest.raises(ValueError):
            losses.rmsle([0.5], [-1.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            losses.mse([1, 2], [1])
        with pytest.raises(ValueError):
            losses.mse([], [])

    @given(hnp.arrays(float, st.integers(1, 50), elements=st.floats(0, 1)), st.data())
    def test_permutation_invariance(self, y, data):
        yhat = data.draw(hnp.arrays(float, y.shape, elements=st.floats(0, 1)))
        perm = np.random.default_rng(0).permutation(y.size)
        for f in (losses.mse, losses.rmse, losses.rmsle):
            assert f(y[perm], yhat[perm]) == pytest.approx(f(y, yhat), rel=1e-12, abs=1e-15)
            assert f(y, yhat) >= 0.0


class TestSpec:
    def test_lambda_range(self):
        with pytest.raises(losses.LossConfigError):
            LossSpec("W-MSE", lam=3.5, weibull=W)
        with pytest.raises(losses.LossConfigError):
            LossSpec("W-MSE", lam=-0.1, weibull=W)

    def test_unknown_kind(self):
        with pytest.raises(losses.LossConfigError):
            LossSpec("MAE")

    def test_weibull_kind_needs_params(self):
        with pytest.raises(losses.LossConfigError):
            LossSpec("W-RMSE", lam=1.0)

    def test_family(self):
        assert [LossSpec(k, weibull=W).family for k in LOSS_KINDS].count("traditional") == 3


class TestValues:
    def test_weibull_mse_hand_value(self):
        # t = eta, t_hat = 0: F = 0.63212 vs 0
        v = losses.loss_value(spec("W-MSE", 2.0), [1.0], [0.0], [100.0], [0.0])
        assert v == pytest.approx(2 * (1 - math.exp(-1)) ** 2, rel=1e-12)
        assert v == pytest.approx(0.79915, abs=5e-6)

    def test_combined_is_sum(self):
        y, yhat, t = [0.2, 0.9], [0.3, 0.7], [150.0, 150.0]
        comb = losses.loss_from_fractions(spec("W-RMSE-Comb", 1.7), y, yhat, t)
        trad = losses.loss_from_fractions(spec("RMSE"), y, yhat, t)
        wb = losses.loss_from_fractions(spec("W-RMSE", 1.0), y, yhat, t)
        assert comb == pytest.approx(trad + 1.7 * wb, rel=1e-13)

    def test_zero_lambda_collapses(self):
        y, yhat, t = [0.2, 0.9], [0.3, 0.7], [150.0, 80.0]
        assert losses.loss_from_fractions(spec("W-MSE", 0.0), y, yhat, t) == 0.0
        assert losses.loss_from_fractions(spec("W-MSE-Comb", 0.0), y, yhat, t) == losses.mse(y, yhat)

    def test_missing_times(self):
        with pytest.raises(losses.LossConfigError):
            losses.loss_value(spec("W-MSE"), [0.1], [0.2])

    def test_rmsle_scale(self):
        a = losses.loss_from_fractions(spec("RMSLE", rmsle_scale=100.0), [0.5], [0.25], [1.0])
        assert a == pytest.approx(abs(math.log(51) - math.log(26)), rel=1e-12)

    @pytest.mark.parametrize("kind", LOSS_KINDS)
    @pytest.mark.parametrize("lam", [0.0, 0.53, 2.28])
    def test_against_reference(self, kind, lam):
        rng = np.random.default_rng(11)
        y, yhat = rng.random(9), rng.random(9)
        t = rng.uniform(50, 200, 9)
        got = losses.loss_from_fractions(spec(kind, lam), y, yhat, t)
        assert got == pytest.approx(reference_loss(kind, lam, y, yhat, t, W), rel=1e-12, abs=1e-15)

    @pytest.mark.parametrize("kind", LOSS_KINDS)
    def test_perfect_prediction_is_zero(self, kind):
        y = np.array([0.1, 0.5, 1.0])
        assert losses.loss_from_fractions(spec(kind, 2.0), y, y, [100.0] * 3) == 0.0


class TestGradient:
    @pytest.mark.parametrize("kind", LOSS_KINDS)
    @pytest.mark.parametrize("n", [1, 7, 64])
    @pytest.mark.parametrize("lam", [0.0, 0.53, 2.28])
    def test_finite_differences(self, kind, n, lam):
        rng = np.random.default_rng(n)
        y = rng.uniform(0.05, 1.0, n)
        yhat = rng.uniform(0.05, 0.95, n)
        t = rng.uniform(60, 160, n)
        s = spec(kind, lam)
        grad, degenerate = losses.loss_gradient(s, y, yhat, t)
        assert not degenerate
        h = 1e-6
        fd = np.empty(n)
        for i in range(n):
            up, dn = yhat.copy(), yhat.copy()
            up[i] += h
            dn[i] -= h
            fd[i] = (losses.loss_from_fractions(s, y, up, t) - losses.loss_from_fractions(s, y, dn, t)) / (2 * h)
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-9)

    @pytest.mark.parametrize("kind", ["RMSE", "RMSLE", "W-RMSE", "W-RMSLE-Comb"])
    def test_zero_loss_degenerate(self, kind):
        y = np.array([0.2, 0.6])
        grad, degenerate = losses.loss_gradient(spec(kind, 1.0), y, y, [100.0, 100.0])
        assert degenerate
        np.testing.assert_array_equal(grad, 0.0)

    def test_mse_zero_loss_not_degenerate(self):
        grad, degenerate = losses.loss_gradient(spec("MSE"), [0.3], [0.3], [1.0])
        assert not degenerate and grad[0] == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.sampled_from(LOSS_KINDS), st.floats(0, 3), st.integers(1, 20), st.integers(0, 2**32 - 1))
    def test_gradient_finite(self, kind, lam, n, seed):
        rng = np.random.default_rng(seed)
        grad, _ = losses.loss_gradient(spec(kind, lam), rng.random(n), rng.random(n), rng.uniform(1, 300, n))
        assert np.all(np.isfinite(grad))
