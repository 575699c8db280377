"""Run-to-failure recordings, life-fraction labels, scaling, and splits.

Runs come either from the IMS / PRONOSTIA directory layouts or from a
synthetic tone-plus-noise degradation model. ``assemble`` turns a list of
runs plus a split assignment into scaled train/validation/test feature sets
and the failure records used for Weibayes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import re
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import spectral
from .spectral import RawWindow
from .weibull import FailureRecord, WeibullParams, weibayes_eta

log = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")

TIME_UNITS = {"s": 1.0, "min": 60.0, "h": 3600.0, "d": 86400.0}


class DatasetError(ValueError):
    pass


class IngestError(DatasetError):
    pass


class ConstantColumnWarning(UserWarning):
    pass


@dataclass
class Run:
    id: str
    windows: list[RawWindow]
    times: np.ndarray
    total_runtime: float
    failed: bool = True

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.windows) != self.times.size:
            raise DatasetError(f"run {self.id}: {len(self.windows)} windows but {self.times.size} times")
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise DatasetError(f"run {self.id}: times must be strictly increasing")
        if not self.total_runtime > 0:
            raise DatasetError(f"run {self.id}: total runtime must be positive")
        if self.times.size and self.times[-1] > self.total_runtime * (1 + 1e-12):
            raise DatasetError(f"run {self.id}: last time exceeds total runtime")

    def record(self) -> FailureRecord:
        return FailureRecord(self.total_runtime, self.failed)


@dataclass
class FeatureSet:
    features: np.ndarray
    labels: np.ndarray
    sample_times: np.ndarray
    run_ids: np.ndarray
    total_times: np.ndarray
    split: str

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float)
        self.sample_times = np.asarray(self.sample_times, dtype=float)
        self.run_ids = np.asarray(self.run_ids, dtype=str)
        self.total_times = np.asarray(self.total_times, dtype=float)
        n = self.features.shape[0]
        sizes = {a.shape[0] for a in (self.labels, self.sample_times, self.run_ids, self.total_times)}
        if sizes != {n}:
            raise DatasetError(f"{self.split}: row counts disagree")
        if np.any(self.labels < 0) or np.any(self.labels > 1):
            raise DatasetError(f"{self.split}: labels must lie in [0, 1]")
        if self.split not in SPLITS:
            raise DatasetError(f"unknown split {self.split!r}")

    def __len__(self):
        return self.features.shape[0]

    def with_features(self, features: np.ndarray) -> "FeatureSet":
        return FeatureSet(features, self.labels, self.sample_times, self.run_ids, self.total_times, self.split)


@dataclass(frozen=True)
class MinMaxScaler:
    mins: np.ndarray
    maxs: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        out = (np.asarray(x, dtype=float) - self.mins) / safe
        return np.where(span > 0, out, 0.0)


def label_life_fraction(run: Run) -> np.ndarray:
    """t_i / t_N as a fraction (the x100 percentage is applied only in reports)."""
    if not run.total_runtime > 0:
        raise DatasetError(f"run {run.id}: total runtime must be positive")
    return np.clip(run.times / run.total_runtime, 0.0, 1.0)


def fit_scaler(train: FeatureSet) -> MinMaxScaler:
    if len(train) == 0:
        raise DatasetError("cannot fit scaler on an empty training set")
    mins = train.features.min(axis=0)
    maxs = train.features.max(axis=0)
    const = np.flatnonzero(maxs == mins)
    if const.size:
        warnings.warn(f"constant feature columns {const.tolist()} scale to 0", ConstantColumnWarning, stacklevel=2)
    return MinMaxScaler(mins, maxs)


def apply_scaler(scaler: MinMaxScaler, fs: FeatureSet) -> FeatureSet:
    """Scale columns with training statistics; values outside [0, 1] are kept."""
    return fs.with_features(scaler.transform(fs.features))


# -- assembly ------------------------------------------------------------------


@dataclass
class Assembled:
    train: FeatureSet
    validation: FeatureSet
    test: FeatureSet
    records: list[FailureRecord]
    record_runs: list[str]
    scaler: MinMaxScaler
    bin_count: int
    kaiser_shape: float

    def split(self, name: str) -> FeatureSet:
        return {"train": self.train, "validation": self.validation, "test": self.test}[name]

    def weibull(self, beta: float) -> WeibullParams:
        return WeibullParams(beta, weibayes_eta(self.records, beta))


def _featurize(runs: Sequence[Run], split: str, bin_count: int, kaiser_shape: float) -> FeatureSet:
    if not runs:
        raise DatasetError(f"split {split!r} has no runs")
    feats, labels, times, ids, totals = [], [], [], [], []
    for run in runs:
        try:
            feats.append(spectral.build_spectrogram(run.windows, bin_count, kaiser_shape))
        except spectral.SignalError as exc:
            raise DatasetError(f"run {run.id}: {exc}") from exc
        labels.append(label_life_fraction(run))
        times.append(run.times)
        ids.append(np.full(run.times.size, run.id))
        totals.append(np.full(run.times.size, run.total_runtime))
    return FeatureSet(
        np.vstack(feats),
        np.concatenate(labels),
        np.concatenate(times),
        np.concatenate(ids),
        np.concatenate(totals),
        split,
    )


def assemble(
    runs: Sequence[Run],
    splits: Mapping[str, str],
    bin_count: int = spectral.DEFAULT_BIN_COUNT,
    kaiser_shape: float = spectral.DEFAULT_KAISER_SHAPE,
) -> Assembled:
    """Featurize, label, and scale runs per ``splits`` (run id -> split name).

    The scaler and the Weibayes failure records use training runs only.
    """
    by_id = {r.id: r for r in runs}
    if len(by_id) != len(runs):
        raise DatasetError("duplicate run ids")
    missing = set(by_id) - set(splits)
    if missing:
        raise DatasetError(f"runs without a split assignment: {sorted(missing)}")
    unknown = set(splits) - set(by_id)
    if unknown:
        raise DatasetError(f"split assignment names unknown runs: {sorted(unknown)}")
    bad = {s for s in splits.values() if s not in SPLITS}
    if bad:
        raise DatasetError(f"unknown split names {sorted(bad)}")

    grouped = {s: [r for r in runs if splits[r.id] == s] for s in SPLITS}
    train_runs = grouped["train"]
    if not any(r.failed for r in train_runs):
        raise DatasetError("no failed run in the training split; Weibayes would be undefined")

    raw = {s: _featurize(grouped[s], s, bin_count, kaiser_shape) for s in SPLITS}
    scaler = fit_scaler(raw["train"])
    scaled = {s: apply_scaler(scaler, fs) for s, fs in raw.items()}
    return Assembled(
        scaled["train"],
        scaled["validation"],
        scaled["test"],
        [r.record() for r in train_runs],
        [r.id for r in train_runs],
        scaler,
        bin_count,
        kaiser_shape,
    )


# -- ingestion -----------------------------------------------------------------

_IMS_NAME = re.compile(r"^(\d{4})\.(\d{2})\.(\d{2})\.(\d{2})\.(\d{2})\.(\d{2})$")
_PRONOSTIA_NAME = re.compile(r"^acc_(\d+)\.csv$")

FORMAT_DEFAULTS = {
    "ims": {"sample_rate": 20480.0, "delimiter": "\t", "channel": 0},
    "pronostia": {"sample_rate": 25600.0, "delimiter": ",", "channel": 4},
}


def _load_table(path: Path, delimiter: str, expected_cols: int | None) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=delimiter, ndmin=2)
    except ValueError as exc:
        raise IngestError(f"{path.name}: cannot parse ({exc})") from exc
    if data.size == 0:
        raise IngestError(f"{path.name}: file is empty")
    if expected_cols is not None and data.shape[1] != expected_cols:
        raise IngestError(f"{path.name}: expected {expected_cols} columns, found {data.shape[1]}")
    return data


def ingest_run(
    path,
    format: str = "ims",
    channel: int | None = None,
    *,
    run_id: str | None = None,
    sample_rate: float | None = None,
    delimiter: str | None = None,
    columns: int | None = None,
    time_unit: str = "s",
    failed: bool = True,
) -> Run:
    """Read one run directory.

    IMS: one tab-delimited file per record, named ``YYYY.MM.DD.hh.mm.ss``.
    PRONOSTIA: ``acc_NNNNN.csv`` files whose first four columns are hour,
    minute, second, microsecond. ``channel`` is the column index holding the
    acceleration signal. Times are offsets from the first record, expressed
    in ``time_unit``.
    """
    if format not in FORMAT_DEFAULTS:
        raise IngestError(f"unknown format {format!r}; expected one of {sorted(FORMAT_DEFAULTS)}")
    if time_unit not in TIME_UNITS:
        raise IngestError(f"unknown time unit {time_unit!r}")
    defaults = FORMAT_DEFAULTS[format]
    channel = defaults["channel"] if channel is None else channel
    sample_rate = defaults["sample_rate"] if sample_rate is None else sample_rate
    delimiter = defaults["delimiter"] if delimiter is None else delimiter
    directory = Path(path)
    if not directory.is_dir():
        raise IngestError(f"{directory} is not a directory")

    pattern = _IMS_NAME if format == "ims" else _PRONOSTIA_NAME
    entries = sorted(p for p in directory.iterdir() if p.is_file() and pattern.match(p.name))
    if not entries:
        raise IngestError(f"{directory}: no {format} files found")

    stamps, windows = [], []
    for p in entries:
        data = _load_table(p, delimiter, columns)
        if columns is None:
            columns = data.shape[1]
        if channel >= data.shape[1]:
            raise IngestError(f"{p.name}: channel {channel} out of range for {data.shape[1]} columns")
        if format == "ims":
            stamp = datetime(*map(int, _IMS_NAME.match(p.name).groups()), tzinfo=timezone.utc).timestamp()
            order = stamp
        else:
            h, m, s, us = data[0, :4]
            stamp = h * 3600 + m * 60 + s + us * 1e-6
            order = int(_PRONOSTIA_NAME.match(p.name).group(1))
        stamps.append((order, stamp))
        windows.append(RawWindow(data[:, channel], sample_rate))

    idx = sorted(range(len(stamps)), key=lambda i: stamps[i][0])
    secs = np.array([stamps[i][1] for i in idx], dtype=float)
    windows = [windows[i] for i in idx]
    if format == "pronostia":
        # time-of-day stamps wrap at midnight
        secs = secs + 86400.0 * np.concatenate([[0], np.cumsum(np.diff(secs) < -43200.0)])
    offsets = secs - secs[0]
    if np.any(np.diff(offsets) <= 0):
        bad = int(np.flatnonzero(np.diff(offsets) <= 0)[0]) + 1
        raise IngestError(f"{entries[idx[bad]].name}: timestamp does not increase")
    scale = TIME_UNITS[time_unit]
    total = offsets[-1] + windows[-1].duration
    return Run(run_id or directory.name, windows, offsets / scale, total / scale, failed)


# -- synthesis -----------------------------------------------------------------


@dataclass(frozen=True)
class SynthesisSpec:
    """Tone-plus-noise degradation runs with Weibull-distributed lifetimes.

    Each run's life is drawn from Weibull(onset_beta, onset_eta). The fault
    tone appears at ``onset_fraction`` of life and its amplitude grows
    quadratically until failure; broadband noise also grows linearly with age.
    Runs still alive at ``censor_time`` are stopped there and marked censored.
    """

    n_runs: int = 12
    windows_per_run: int = 30
    window_length: int = 1024
    sample_rate: float = 20480.0
    noise_level: float = 0.3
    onset_beta: float = 2.0
    onset_eta: float = 100.0
    censor_time: float | None = None
    onset_fraction: float = 0.5
    shaft_freq: float = 33.3
    fault_freq: float = 4000.0
    fault_amplitude: float = 2.0
    wear_gain: float = 1.5
    drift: float = 0.05

    def __post_init__(self):
        for name in ("n_runs", "windows_per_run"):
            if getattr(self, name) < 1:
                raise DatasetError(f"synthesis {name} must be positive")
        if self.window_length < 2:
            raise DatasetError("synthesis window_length must be >= 2")
        if self.windows_per_run < 2:
            raise DatasetError("synthesis windows_per_run must be >= 2")
        for name in ("sample_rate", "onset_beta", "onset_eta"):
            if not getattr(self, name) > 0:
                raise DatasetError(f"synthesis {name} must be positive")
        if self.noise_level < 0:
            raise DatasetError("synthesis noise_level must be non-negative")
        if self.censor_time is not None and not self.censor_time > 0:
            raise DatasetError("synthesis censor_time must be positive")
        if not 0 <= self.onset_fraction < 1:
            raise DatasetError("synthesis onset_fraction must be in [0, 1)")


def draw_lifetimes(spec: SynthesisSpec, seed: int, n: int | None = None) -> np.ndarray:
    n = spec.n_runs if n is None else n
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    return spec.onset_eta * rng.weibull(spec.onset_beta, size=n)


def fault_severity(t, life: float, onset_fraction: float):
    onset = onset_fraction * life
    frac = np.clip((np.asarray(t, dtype=float) - onset) / (life - onset), 0.0, None)
    return frac**2


def synthesize_runs(spec: SynthesisSpec, seed: int) -> list[Run]:
    lives = draw_lifetimes(spec, seed)
    children = np.random.SeedSequence([seed, 1]).spawn(spec.n_runs)
    tau = np.arange(spec.window_length) / spec.sample_rate
    width = len(str(spec.n_runs - 1))
    runs = []
    for k, (life, ss) in enumerate(zip(lives, children)):
        rng = np.random.default_rng(ss)
        censored = spec.censor_time is not None and life > spec.censor_time
        recorded = spec.censor_time if censored else life
        times = recorded * np.arange(spec.windows_per_run) / (spec.windows_per_run - 1)
        windows = []
        for t in times:
            phase_shaft, phase_fault = rng.uniform(0, 2 * np.pi, size=2)
            x = np.sin(2 * np.pi * spec.shaft_freq * tau + phase_shaft)
            x += spec.fault_amplitude * fault_severity(t, life, spec.onset_fraction) * np.sin(
                2 * np.pi * spec.fault_freq * tau + phase_fault
            )
            x += spec.drift * tau * spec.sample_rate / spec.window_length
            noise = rng.standard_normal(spec.window_length)
            x += spec.noise_level * (1.0 + spec.wear_gain * t / life) * noise
            windows.append(RawWindow(x, spec.sample_rate))
        runs.append(Run(f"run-{k:0{width}d}", windows, times, float(recorded), not censored))
    return runs


# -- on-disk formats -----------------------------------------------------------


def save_runs(path, runs: Sequence[Run], provenance: dict | None = None) -> None:
    arrays = {}
    meta = []
    for k, run in enumerate(runs):
        arrays[f"samples_{k}"] = np.vstack([w.samples for w in run.windows]) if _uniform(run) else np.array(
            [w.samples for w in run.windows], dtype=object
        )
        arrays[f"times_{k}"] = run.times
        meta.append(
            {
                "id": run.id,
                "total_runtime": run.total_runtime,
                "failed": run.failed,
                "sample_rate": run.windows[0].sample_rate,
            }
        )
    header = {"runs": meta, "provenance": provenance or {}}
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _uniform(run: Run) -> bool:
    return len({w.samples.size for w in run.windows}) == 1


def load_runs(path) -> tuple[list[Run], dict]:
    with np.load(path, allow_pickle=True) as data:
        header = json.loads(data["header"].tobytes().decode())
        runs = []
        for k, meta in enumerate(header["runs"]):
            samples = data[f"samples_{k}"]
            windows = [RawWindow(np.asarray(s, dtype=float), meta["sample_rate"]) for s in samples]
            runs.append(Run(meta["id"], windows, data[f"times_{k}"], meta["total_runtime"], meta["failed"]))
    return runs, header["provenance"]


_CACHE_FIXED = ["split", "run_id", "sample_time", "total_time", "label"]


def _feature_rows(data: Assembled):
    for name in SPLITS:
        fs = data.split(name)
        for i in range(len(fs)):
            yield [name, fs.run_ids[i], repr(float(fs.sample_times[i])), repr(float(fs.total_times[i])),
                   repr(float(fs.labels[i]))] + [repr(float(v)) for v in fs.features[i]]


def save_features(path, data: Assembled, beta: float, provenance: dict | None = None) -> str:
    """Write all three splits to one CSV with a ``#``-prefixed JSON header.

    Returns the SHA-256 of the data rows, which is also stored in the header.
    """
    body = io.StringIO()
    writer = csv.writer(body, lineterminator="\n")
    writer.writerow(_CACHE_FIXED + [f"f{j}" for j in range(data.bin_count)])
    writer.writerows(_feature_rows(data))
    content = body.getvalue()
    digest = hashlib.sha256(content.encode()).hexdigest()
    eta = weibayes_eta(data.records, beta)
    header = {
        "bin_count": data.bin_count,
        "kaiser_shape": data.kaiser_shape,
        "scaler_min": [repr(float(v)) for v in data.scaler.mins],
        "scaler_max": [repr(float(v)) for v in data.scaler.maxs],
        "beta": beta,
        "eta": eta,
        "records": [{"run_id": rid, "time": r.time, "failed": r.failed} for rid, r in zip(data.record_runs, data.records)],
        "content_sha256": digest,
        "provenance": provenance or {},
    }
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write(content)
    return digest


@dataclass
class FeatureCache:
    data: Assembled
    beta: float
    eta: float
    header: dict = field(default_factory=dict)

    @property
    def weibull(self) -> WeibullParams:
        return WeibullParams(self.beta, self.eta)


def load_features(path) -> FeatureCache:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise DatasetError(f"{path}: missing feature-cache header")
        header = json.loads(first[2:])
        content = fh.read()
    if hashlib.sha256(content.encode()).hexdigest() != header["content_sha256"]:
        raise DatasetError(f"{path}: content hash mismatch")
    reader = csv.reader(io.StringIO(content))
    next(reader)
    rows = {s: [] for s in SPLITS}
    for row in reader:
        rows[row[0]].append(row)
    sets = {}
    for s in SPLITS:
        r = rows[s]
        sets[s] = FeatureSet(
            np.array([[float(v) for v in x[5:]] for x in r]).reshape(len(r), header["bin_count"]),
            [float(x[4]) for x in r],
            [float(x[2]) for x in r],
            [x[1] for x in r],
            [float(x[3]) for x in r],
            s,
        )
    scaler = MinMaxScaler(np.array([float(v) for v in header["scaler_min"]]),
                          np.array([float(v) for v in header["scaler_max"]]))
    records = [FailureRecord(r["time"], r["failed"]) for r in header["records"]]
    data = Assembled(
        sets["train"], sets["validation"], sets["test"], records,
        [r["run_id"] for r in header["records"]], scaler, header["bin_count"], header["kaiser_shape"],
    )
    return FeatureCache(data, header["beta"], header["eta"], header)
