"""Mini-batch ADAM training with validation early stopping, and evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import network
from .dataset import FeatureSet
from .losses import LossSpec, loss_from_fractions, loss_gradient, mse, rmse, rmsle
from .network import NetworkState

BATCH_SIZES = (32, 64, 128, 256, 512)
LEARNING_RATES = (0.1, 0.01, 0.001, 0.0001)

DEFAULT_PATIENCE = 50
DEFAULT_MAX_EPOCHS = 2000


class TrainConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    loss: LossSpec
    batch_size: int = 32
    learning_rate: float = 0.001
    max_epochs: int = DEFAULT_MAX_EPOCHS
    patience: int = DEFAULT_PATIENCE
    seed: int = 0
    # fault injection for containment tests: the training loss reads as NaN from this epoch on
    inject_nan_epoch: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise TrainConfigError(f"batch_size must be positive, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise TrainConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise TrainConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise TrainConfigError(f"patience must be >= 1, got {self.patience}")


@dataclass(frozen=True)
class Metrics:
    mse: float
    rmse: float
    rmsle: float
    r2: float

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.mse, self.rmse, self.rmsle, self.r2))

    @classmethod
    def missing(cls) -> "Metrics":
        nan = float("nan")
        return cls(nan, nan, nan, nan)


@dataclass
class FitResult:
    state: NetworkState
    stop_epoch: int
    epochs_run: int
    train_curve: list[float] = field(default_factory=list)
    val_curve: list[float] = field(default_factory=list)
    status: str = "ok"
    message: str = ""

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"


def r2_score(y, yhat) -> float:
    """1 - SS_res/SS_tot; NaN when the labels are constant."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return float("nan")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def metrics_for(y, yhat) -> Metrics:
    m = mse(y, yhat)
    return Metrics(m, rmse(y, yhat), rmsle(y, yhat), r2_score(y, yhat))


def evaluate(state: NetworkState, fs: FeatureSet, loss: LossSpec | None = None) -> Metrics:
    """Eval-mode predictions scored against the life-fraction labels."""
    return metrics_for(fs.labels, network.predict(state, fs.features))


def split_loss(state: NetworkState, fs: FeatureSet, loss: LossSpec) -> float:
    yhat = network.predict(state, fs.features)
    return loss_from_fractions(loss, fs.labels, yhat, fs.total_times)


def fit(state: NetworkState, train: FeatureSet, val: FeatureSet, cfg: TrainConfig) -> FitResult:
    """Train until validation loss stalls for ``cfg.patience`` epochs.

    ``state`` is updated in place during training; the returned state is a
    copy of the best-validation snapshot and ``stop_epoch`` is its (1-based)
    epoch. A non-finite loss aborts the trial with status ``diverged``.
    """
    rng = np.random.default_rng(cfg.seed)
    n = len(train)
    best_val = math.inf
    best_state = state.copy()
    best_epoch = 0
    result = FitResult(best_state, 0, 0)
    stale = 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for epoch in range(1, cfg.max_epochs + 1):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                x = train.features[idx]
                yhat, cache = network.forward(state, x, "train", rng)
                grad, _ = loss_gradient(cfg.loss, train.labels[idx], yhat, train.total_times[idx])
                if not np.all(np.isfinite(grad)):
                    return _diverged(result, epoch, "non-finite loss gradient")
                network.adam_step(state, network.backward(state, cache, grad), cfg.learning_rate)

            train_loss = split_loss(state, train, cfg.loss)
            val_loss = split_loss(state, val, cfg.loss)
            if cfg.inject_nan_epoch is not None and epoch >= cfg.inject_nan_epoch:
                train_loss = float("nan")
            result.train_curve.append(train_loss)
            result.val_curve.append(val_loss)
            result.epochs_run = epoch
            if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
                return _diverged(result, epoch, "non-finite loss")

            if val_loss < best_val:
                best_val, best_epoch, stale = val_loss, epoch, 0
                best_state = state.copy()
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    result.state = best_state
    result.stop_epoch = best_epoch
    return result


def _diverged(result: FitResult, epoch: int, message: str) -> FitResult:
    result.status = "diverged"
    result.message = f"{message} at epoch {epoch}"
    result.epochs_run = epoch
    return result
