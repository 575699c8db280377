"""Traditional and Weibull-informed regression losses with analytic gradients.

Predictions ``yhat`` and labels ``y`` are life fractions in [0, 1]. The
Weibull terms compare fractions failing, F(t) against F(t_hat), where the
absolute times come from ``t = y * t_total`` and ``t_hat = yhat * t_total``
with ``t_total`` the recorded run length of each sample's run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import weibull
from .weibull import WeibullParams

TRADITIONAL = ("MSE", "RMSE", "RMSLE")
WEIBULL_ONLY = ("W-MSE", "W-RMSE", "W-RMSLE")
WEIBULL_COMBINED = ("W-MSE-Comb", "W-RMSE-Comb", "W-RMSLE-Comb")
LOSS_KINDS = TRADITIONAL + WEIBULL_ONLY + WEIBULL_COMBINED

# metric used by each kind's label term and Weibull term (None = absent)
_PARTS = {
    "MSE": ("mse", None),
    "RMSE": ("rmse", None),
    "RMSLE": ("rmsle", None),
    "W-MSE": (None, "mse"),
    "W-RMSE": (None, "rmse"),
    "W-RMSLE": (None, "rmsle"),
    "W-MSE-Comb": ("mse", "mse"),
    "W-RMSE-Comb": ("rmse", "rmse"),
    "W-RMSLE-Comb": ("rmsle", "rmsle"),
}

LAMBDA_RANGE = (0.0, 3.0)


class LossConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LossSpec:
    kind: str
    lam: float = 0.0
    weibull: WeibullParams | None = None
    # multiplies labels inside the RMSLE label term; 100 gives the percentage variant
    rmsle_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _PARTS:
            raise LossConfigError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if not (LAMBDA_RANGE[0] <= self.lam <= LAMBDA_RANGE[1]):
            raise LossConfigError(f"lambda must lie in {LAMBDA_RANGE}, got {self.lam}")
        if self.uses_weibull and self.weibull is None:
            raise LossConfigError(f"loss {self.kind} requires Weibull parameters")

    @property
    def uses_weibull(self) -> bool:
        return _PARTS[self.kind][1] is not None

    @property
    def family(self) -> str:
        return "traditional" if self.kind in TRADITIONAL else "weibull"


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.size == 0 or y.size != yhat.size:
        raise ValueError(f"need equal non-empty lengths, got {y.size} and {yhat.size}")
    return y, yhat


def mse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean((y - yhat) ** 2))


def rmse(y, yhat) -> float:
    return float(np.sqrt(mse(y, yhat)))


def rmsle(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    if np.any(y <= -1) or np.any(yhat <= -1):
        raise ValueError("RMSLE arguments must exceed -1")
    return float(np.sqrt(np.mean((np.log1p(y) - np.log1p(yhat)) ** 2)))


_METRICS = {"mse": mse, "rmse": rmse, "rmsle": rmsle}


def weibull_fraction_failing(times, params: WeibullParams):
    return weibull.cdf(params, times)


def _weibull_term(metric: str, times_true, times_pred, params: WeibullParams) -> float:
    f_true = weibull.cdf(params, np.asarray(times_true, dtype=float))
    f_pred = weibull.cdf(params, np.asarray(times_pred, dtype=float))
    return _METRICS[metric](f_true, f_pred)


def _label_term(spec: LossSpec, metric: str, y, yhat) -> float:
    if metric == "rmsle" and spec.rmsle_scale != 1.0:
        return rmsle(np.asarray(y) * spec.rmsle_scale, np.asarray(yhat) * spec.rmsle_scale)
    return _METRICS[metric](y, yhat)


def loss_value(spec: LossSpec, y, yhat, times_true=None, times_pred=None) -> float:
    label_metric, weibull_metric = _PARTS[spec.kind]
    total = 0.0
    if label_metric is not None:
        total += _label_term(spec, label_metric, y, yhat)
    if weibull_metric is not None:
        if times_true is None or times_pred is None:
            raise LossConfigError(f"loss {spec.kind} needs true and predicted times")
        total += spec.lam * _weibull_term(weibull_metric, times_true, times_pred, spec.weibull)
    return total


def loss_from_fractions(spec: LossSpec, y, yhat, t_total) -> float:
    """:func:`loss_value` with times derived from life fractions and run lengths."""
    y, yhat = _pair(y, yhat)
    t_total = np.broadcast_to(np.asarray(t_total, dtype=float), y.shape)
    if not spec.uses_weibull:
        return loss_value(spec, y, yhat)
    return loss_value(spec, y, yhat, y * t_total, yhat * t_total)


def _metric_grad(metric: str, a: np.ndarray, b: np.ndarray, db: np.ndarray):
    """Gradient of metric(a, b) w.r.t. the variable x where db = d b / d x.

    Returns (gradient, degenerate) where degenerate marks a square-root metric
    sitting exactly at zero.
    """
    n = a.size
    if metric == "mse":
        return 2.0 * (b - a) * db / n, False
    if metric == "rmse":
        resid = b - a
        value = np.sqrt(np.mean(resid**2))
        if value == 0.0:
            return np.zeros(n), True
        return resid * db / (n * value), False
    if metric == "rmsle":
        resid = np.log1p(b) - np.log1p(a)
        value = np.sqrt(np.mean(resid**2))
        if value == 0.0:
            return np.zeros(n), True
        return resid * db / ((1.0 + b) * n * value), False
    raise KeyError(metric)


def loss_gradient(spec: LossSpec, y, yhat, t_total):
    """Gradient of :func:`loss_from_fractions` w.r.t. ``yhat``.

    Returns ``(grad, degenerate)``. ``degenerate`` is True when a square-root
    term is exactly zero; that term then contributes a zero gradient.
    """
    y, yhat = _pair(y, yhat)
    label_metric, weibull_metric = _PARTS[spec.kind]
    grad = np.zeros_like(yhat)
    degenerate = False
    if label_metric is not None:
        scale = spec.rmsle_scale if label_metric == "rmsle" else 1.0
        g, d = _metric_grad(label_metric, scale * y, scale * yhat, np.full_like(yhat, scale))
        grad += g
        degenerate |= d
    if weibull_metric is not None and spec.lam != 0.0:
        t_total = np.broadcast_to(np.asarray(t_total, dtype=float), y.shape)
        params = spec.weibull
        f_true = weibull.cdf(params, y * t_total)
        t_pred = yhat * t_total
        f_pred = weibull.cdf(params, t_pred)
        # chain rule: dF(yhat * t_N)/dyhat = pdf(t_hat) * t_N
        df = weibull.cdf_time_gradient(params, t_pred) * t_total
        g, d = _metric_grad(weibull_metric, f_true, f_pred, df)
        grad += spec.lam * g
        degenerate |= d
    return grad, degenerate
