"""Report bundle: delimited analysis tables, plot-ready series, and figures."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from . import network, plotting, search
from .dataset import SPLITS, Assembled
from .losses import TRADITIONAL
from .search import Analysis, TrialResult, fmt
from .weibull import WeibullParams


def _csv(rows, header, comments: dict | None = None) -> str:
    out = io.StringIO()
    for k, v in (comments or {}).items():
        out.write(f"# {k}={v}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return out.getvalue()


def frequency_table(a: Analysis, comments=None) -> str:
    return _csv([(f.kind, f.count, f.percent) for f in a.frequency], ["loss", "count", "percent"], comments)


def correlation_table(a: Analysis, comments=None) -> str:
    rows = [(c.kind, c.r, c.p, c.n_in, c.n_out, c.valid, c.reason) for c in a.correlations]
    return _csv(rows, ["loss", "r_pb", "p_value", "n_in", "n_out", "valid", "reason"], comments)


def early_stop_table(a: Analysis, comments=None) -> str:
    groups = ["traditional", "weibull"]
    cols = [a.early_stop[g].row() for g in groups]
    rows = [[name] + [float(c[i]) if i else int(c[i]) for c in cols] for i, name in enumerate(search.SUMMARY_ROWS)]
    return _csv(rows, ["statistic"] + groups, comments)


def rolling_mean(times, values, window: float) -> np.ndarray:
    """Trailing mean over (t - window, t] for each sample."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    lo = np.searchsorted(times, times - window, side="right")
    hi = np.arange(1, times.size + 1)
    return (csum[hi] - csum[lo]) / (hi - lo)


def prediction_traces(state: network.NetworkState, data: Assembled, window: float | None) -> list[dict]:
    traces = []
    for s in SPLITS:
        fs = data.split(s)
        pred = network.predict(state, fs.features)
        for rid in dict.fromkeys(fs.run_ids):
            sel = fs.run_ids == rid
            t = fs.sample_times[sel]
            w = window if window else 0.05 * float(fs.total_times[sel][0])
            p = 100.0 * pred[sel]
            traces.append({
                "split": s, "run_id": str(rid), "time": t,
                "true": 100.0 * fs.labels[sel], "pred": p, "rolling": rolling_mean(t, p, w),
            })
    return traces


def traces_table(traces, comments=None) -> str:
    rows = []
    for tr in traces:
        for i in range(tr["time"].size):
            rows.append((tr["split"], tr["run_id"], float(tr["time"][i]), float(tr["true"][i]),
                         float(tr["pred"][i]), float(tr["rolling"][i])))
    header = ["split", "run_id", "time", "true_life_pct", "predicted_life_pct", "rolling_mean_pct"]
    return _csv(rows, header, comments)


def curves_table(fit, comments=None) -> str:
    rows = [(i + 1, tl, vl) for i, (tl, vl) in enumerate(zip(fit.train_curve, fit.val_curve))]
    return _csv(rows, ["epoch", "train_loss", "val_loss"], comments)


def best_overall(results: Sequence[TrialResult]) -> TrialResult | None:
    ok = [r for r in results if r.ok]
    return min(ok, key=search._winner_key) if ok else None


def best_model_summary(best: TrialResult, weibull: WeibullParams, time_unit: str, a: Analysis,
                       n_results: int) -> str:
    c = best.config
    lines = [
        "Best model (highest test R^2 among surviving trials)",
        f"  Loss Function    {c.loss_kind}",
        f"  Layers           {c.hidden_layers}",
        f"  Units per Layer  {c.units_per_layer}",
        f"  Drop Prob.       {c.dropout_prob:g}",
        f"  lambda           {c.lam:.2f}",
        f"  beta             {weibull.beta:g}",
        f"  eta              {weibull.eta:.4g} {time_unit}",
        f"  batch size       {c.batch_size}",
        f"  learning rate    {c.learning_rate:g}",
        f"  stop epoch       {best.stop_epoch}",
        "",
        "Metrics        " + "".join(f"{s:>12}" for s in SPLITS),
    ]
    for m in search.METRIC_NAMES:
        lines.append(f"  {m:<12} " + "".join(f"{best.metric(s, m):12.4f}" for s in SPLITS))
    n_arch = len(a.winners)
    weibull_wins = sum(1 for w in a.winners if w.config.loss_kind not in TRADITIONAL)
    share = 100.0 * weibull_wins / n_arch if n_arch else math.nan
    lines += [
        "",
        f"Trials: {n_results}; surviving filter: {len(a.surviving)}; architectures with a survivor: {n_arch}",
        f"Architectures won by a Weibull-based loss: {weibull_wins}/{n_arch} ({share:.1f}%)",
    ]
    sig = [c.kind for c in a.correlations if c.valid and c.p < 0.05]
    lines.append("Losses with significant point-biserial correlation (p < 0.05): " + (", ".join(sig) or "none"))
    return "\n".join(lines) + "\n"


def write_figures(out: Path, a: Analysis, fit, traces, weibull: WeibullParams, data: Assembled,
                  time_unit: str) -> list[Path]:
    figs = out / "figures"
    paths = [
        plotting.loss_frequency(a.frequency, figs / "loss_frequency.png"),
        plotting.correlations(a.correlations, figs / "correlations.png"),
        plotting.early_stopping(
            {
                "traditional": [r.stop_epoch for r in a.surviving if r.config.loss_kind in TRADITIONAL],
                "weibull": [r.stop_epoch for r in a.surviving if r.config.loss_kind not in TRADITIONAL],
            },
            figs / "early_stopping.png",
        ),
        plotting.weibull_curves(weibull, figs / "weibull.png", time_unit),
        plotting.spectrogram(data.train.features, figs / "spectrogram_train.png", "Training spectrogram (scaled)"),
    ]
    if fit is not None:
        paths.append(plotting.learning_curves(fit.train_curve, fit.val_curve, fit.stop_epoch, figs / "learning_curves.png"))
        paths.append(plotting.predictions(traces, figs / "predictions.png", time_unit))
    return paths
