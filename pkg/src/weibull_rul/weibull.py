"""Two-parameter Weibull distribution and Weibayes characteristic-life estimation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np

DEFAULT_BETA = 2.0


class WeibullDomainError(ValueError):
    """Raised for times outside the support of an operation."""


class WeibayesError(ValueError):
    """Raised when Weibayes estimation is undefined for the given records."""


class DensitySingularityWarning(RuntimeWarning):
    """The density diverges at t = 0 when beta < 1."""


@dataclass(frozen=True)
class WeibullParams:
    beta: float
    eta: float

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive and finite, got {self.beta!r}")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive and finite, got {self.eta!r}")


@dataclass(frozen=True)
class FailureRecord:
    time: float
    failed: bool

    def __post_init__(self):
        if not (np.isfinite(self.time) and self.time > 0):
            raise ValueError(f"record time must be positive, got {self.time!r}")


def _as_times(t) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise WeibullDomainError("time must be non-negative")
    return arr


def _ret(arr: np.ndarray, like):
    return float(arr) if np.ndim(like) == 0 else arr


def cdf(p: WeibullParams, t):
    """Fraction failing by time ``t``: 1 - exp(-(t/eta)^beta).

    Evaluated as ``-expm1(-z)`` so early-life values keep full precision.
    Accepts scalars or arrays.
    """
    arr = _as_times(t)
    z = (arr / p.eta) ** p.beta
    return _ret(-np.expm1(-z), t)


def pdf(p: WeibullParams, t):
    """Weibull density. Returns ``inf`` (with a warning) at t = 0 when beta < 1."""
    arr = _as_times(t)
    x = arr / p.eta
    with np.errstate(divide="ignore"):
        dens = (p.beta / p.eta) * x ** (p.beta - 1.0) * np.exp(-(x**p.beta))
    if p.beta < 1.0 and np.any(arr == 0):
        warnings.warn(
            f"Weibull density diverges at t=0 for beta={p.beta}",
            DensitySingularityWarning,
            stacklevel=2,
        )
        dens = np.where(arr == 0, np.inf, dens)
    return _ret(dens, t)


def cdf_time_gradient(p: WeibullParams, t):
    """dF/dt, used to backpropagate through the fraction-failing term.

    At t = 0 the derivative is 0 for beta > 1 and 1/eta for beta = 1; for
    beta < 1 it diverges and a :class:`WeibullDomainError` is raised.
    """
    arr = _as_times(t)
    if p.beta < 1.0 and np.any(arr == 0):
        raise WeibullDomainError(f"dF/dt diverges at t=0 for beta={p.beta}")
    x = arr / p.eta
    with np.errstate(divide="ignore", invalid="ignore"):
        xb = x**p.beta
        # beta/eta * x^(beta-1) written so that beta == 1 gives 1/eta at x = 0
        grad = (p.beta / p.eta) * np.power(x, p.beta - 1.0) * np.exp(-xb)
    return _ret(grad, t)


def weibayes_eta(records: Iterable[FailureRecord], beta: float) -> float:
    """Characteristic life from few failures with an assumed shape.

    eta = (sum_i t_i^beta / r)^(1/beta), where the sum runs over every record
    (failed and censored) and ``r`` counts only failures.
    """
    records = list(records)
    if not records:
        raise WeibayesError("no records given")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    r = sum(1 for rec in records if rec.failed)
    if r == 0:
        raise WeibayesError("no failures among records: Weibayes undefined")
    times = np.array([rec.time for rec in records], dtype=float)
    # factor out the largest time so t^beta cannot overflow for long runs
    scale = times.max()
    total = np.sum((times / scale) ** beta)
    return float(scale * (total / r) ** (1.0 / beta))


def weibayes_params(records: Iterable[FailureRecord], beta: float = DEFAULT_BETA) -> WeibullParams:
    return WeibullParams(beta=beta, eta=weibayes_eta(records, beta))
