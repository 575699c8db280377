"""Vibration window -> binned spectrum features.

Each window is linearly detrended, tapered with a Kaiser window, transformed
to a one-sided FFT magnitude spectrum, and reduced to ``bin_count`` values by
taking the maximum magnitude inside each contiguous frequency bin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal as sp_signal

DEFAULT_BIN_COUNT = 20
DEFAULT_KAISER_SHAPE = 14.0


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class RawWindow:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size < 2:
            raise SignalError(f"window needs >= 2 samples, got shape {samples.shape}")
        if not self.sample_rate > 0:
            raise SignalError(f"sample_rate must be positive, got {self.sample_rate!r}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def detrend_linear(w: RawWindow) -> RawWindow:
    """Remove the least-squares straight line from the window."""
    if len(w.samples) < 2:
        raise SignalError("detrend needs at least 2 samples")
    return RawWindow(sp_signal.detrend(w.samples, type="linear"), w.sample_rate)


def kaiser_window(n: int, shape: float = DEFAULT_KAISER_SHAPE) -> np.ndarray:
    if n < 1:
        raise SignalError(f"window length must be >= 1, got {n}")
    if shape < 0:
        raise SignalError(f"Kaiser shape must be non-negative, got {shape}")
    return np.kaiser(n, shape)


def fft_magnitude(w) -> np.ndarray:
    """Magnitudes of the one-sided DFT, length ``n // 2 + 1``.

    Unnormalised: ``|X_k|`` with ``X_k = sum_n x_n exp(-2j pi k n / N)``.
    """
    x = w.samples if isinstance(w, RawWindow) else np.asarray(w, dtype=float)
    if x.size == 0:
        raise SignalError("cannot transform an empty window")
    return np.abs(np.fft.rfft(x))


def bin_edges(length: int, bin_count: int) -> np.ndarray:
    """Segment boundaries; the remainder goes one sample each to the leading bins."""
    if bin_count < 1 or bin_count > length:
        raise SignalError(f"bin_count must be in [1, {length}], got {bin_count}")
    base, extra = divmod(length, bin_count)
    sizes = np.full(bin_count, base, dtype=int)
    sizes[:extra] += 1
    return np.concatenate([[0], np.cumsum(sizes)])


def bin_spectrum(spectrum: Sequence[float], bin_count: int = DEFAULT_BIN_COUNT) -> np.ndarray:
    spectrum = np.asarray(spectrum, dtype=float)
    edges = bin_edges(spectrum.size, bin_count)
    return np.maximum.reduceat(spectrum, edges[:-1])


def featurize_window(
    w: RawWindow,
    bin_count: int = DEFAULT_BIN_COUNT,
    kaiser_shape: float = DEFAULT_KAISER_SHAPE,
) -> np.ndarray:
    detrended = detrend_linear(w).samples
    tapered = detrended * kaiser_window(detrended.size, kaiser_shape)
    return bin_spectrum(fft_magnitude(tapered), bin_count)


def build_spectrogram(
    windows: Sequence[RawWindow],
    bin_count: int = DEFAULT_BIN_COUNT,
    kaiser_shape: float = DEFAULT_KAISER_SHAPE,
) -> np.ndarray:
    """Binned spectrum of every window, rows in time order.

    ``windows`` may also be a :class:`~weibull_rul.dataset.Run`.
    """
    windows = getattr(windows, "windows", windows)
    if len(windows) == 0:
        raise SignalError("run has no windows")
    rows = []
    for i, w in enumerate(windows):
        try:
            rows.append(featurize_window(w, bin_count, kaiser_shape))
        except SignalError as exc:
            raise SignalError(f"window {i}: {exc}") from exc
    return np.vstack(rows)
