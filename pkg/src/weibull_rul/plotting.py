"""Report figures.

Uses the object-oriented matplotlib API (no pyplot state) so figures can be
rendered from worker threads and saved with stable metadata.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from . import weibull
from .losses import TRADITIONAL

TRAD_COLOR = "#7f7f7f"
WEIBULL_COLOR = "#1f77b4"

_RC = {"dpi": 120}


def _figure(width=6.4, height=4.0, nrows=1, ncols=1, **kw):
    fig = Figure(figsize=(width, height), dpi=_RC["dpi"])
    FigureCanvasAgg(fig)
    axes = fig.subplots(nrows, ncols, **kw)
    return fig, axes


def save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    return path


def _kind_colors(kinds):
    return [TRAD_COLOR if k in TRADITIONAL else WEIBULL_COLOR for k in kinds]


def loss_frequency(freqs, path, title="Winning loss per architecture"):
    """Horizontal bars of winner percentages, most frequent on top."""
    fig, ax = _figure()
    kinds = [f.kind for f in freqs][::-1]
    pct = [f.percent for f in freqs][::-1]
    ax.barh(kinds, pct, color=_kind_colors(kinds))
    for y, p in enumerate(pct):
        ax.text(p, y, f" {p:.1f}%", va="center", fontsize=8)
    ax.set_xlabel("share of architectures (%)")
    ax.set_title(title)
    return save(fig, path)


def correlations(corrs, path, alpha=0.05):
    fig, ax = _figure()
    valid = [c for c in corrs if c.valid]
    valid.sort(key=lambda c: c.r)
    kinds = [c.kind for c in valid]
    bars = ax.barh(kinds, [c.r for c in valid], color=_kind_colors(kinds))
    for bar, c in zip(bars, valid):
        if c.p >= alpha:
            bar.set_hatch("//")
            bar.set_alpha(0.5)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlabel("point-biserial r vs. test $R^2$ (hatched: p >= %.2f)" % alpha)
    ax.set_xlim(-1, 1)
    return save(fig, path)


def early_stopping(epochs_by_group: Mapping[str, Sequence[int]], path):
    fig, ax = _figure()
    groups = [g for g, v in epochs_by_group.items() if len(v)]
    data = [np.asarray(epochs_by_group[g], dtype=float) for g in groups]
    if data:
        ax.violinplot(data, showmedians=True)
        rng = np.random.default_rng(0)
        for i, d in enumerate(data, start=1):
            ax.scatter(i + rng.uniform(-0.08, 0.08, d.size), d, s=4, color="k", alpha=0.5)
    ax.set_xticks(range(1, len(groups) + 1), groups)
    ax.set_ylabel("early-stopping epoch")
    return save(fig, path)


def learning_curves(train_curve, val_curve, stop_epoch, path):
    fig, ax = _figure()
    epochs = np.arange(1, len(train_curve) + 1)
    ax.plot(epochs, train_curve, label="train")
    ax.plot(epochs, val_curve, label="validation")
    if stop_epoch:
        ax.axvline(stop_epoch, color="r", ls="--", lw=1, label=f"best epoch {stop_epoch}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    return save(fig, path)


def predictions(traces, path, time_unit=""):
    """One panel per run: true and predicted life percentage with a rolling mean.

    ``traces`` is a list of dicts with keys split, run_id, time, true, pred, rolling.
    """
    n = max(len(traces), 1)
    ncols = min(n, 3)
    nrows = int(np.ceil(n / ncols))
    fig, axes = _figure(4.0 * ncols, 3.0 * nrows, nrows, ncols, squeeze=False, sharey=True)
    for ax, tr in zip(axes.ravel(), traces):
        ax.plot(tr["time"], tr["true"], color="k", lw=1.2, label="true")
        ax.scatter(tr["time"], tr["pred"], s=5, alpha=0.4, label="predicted")
        ax.plot(tr["time"], tr["rolling"], color="C3", lw=1.2, label="rolling mean")
        ax.set_title(f"{tr['split']}: {tr['run_id']}", fontsize=9)
        ax.set_xlabel(f"time ({time_unit})" if time_unit else "time")
    for ax in axes.ravel()[len(traces):]:
        ax.set_visible(False)
    axes[0, 0].set_ylabel("life (%)")
    axes[0, 0].legend(fontsize=7)
    return save(fig, path)


def spectrogram(features, path, title="Binned spectrogram"):
    fig, ax = _figure()
    im = ax.imshow(np.asarray(features).T, aspect="auto", origin="lower", interpolation="nearest")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("sample")
    ax.set_ylabel("frequency bin")
    ax.set_title(title)
    return save(fig, path)


def weibull_curves(params: weibull.WeibullParams, path, time_unit=""):
    """CDF and PDF over [0, 3 eta]."""
    fig, ax = _figure()
    t = np.linspace(0.0, 3.0 * params.eta, 400)
    ax.plot(t, weibull.cdf(params, t), label="CDF")
    ax.set_ylabel("fraction failing")
    ax.set_xlabel(f"time ({time_unit})" if time_unit else "time")
    twin = ax.twinx()
    twin.plot(t[1:], weibull.pdf(params, t[1:]), color="C1", label="PDF")
    twin.set_ylabel("density")
    ax.axvline(params.eta, color="k", ls=":", lw=1)
    ax.set_title(f"beta={params.beta:g}, eta={params.eta:.3g}")
    return save(fig, path)
