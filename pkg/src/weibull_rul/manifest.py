"""Experiment manifest: loading, validation, overrides, and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import numpy as np
import yaml

from . import spectral
from .dataset import FORMAT_DEFAULTS, SPLITS, TIME_UNITS, SynthesisSpec
from .losses import LOSS_KINDS
from .weibull import DEFAULT_BETA

DEFAULTS = {
    "seed": 0,
    "output_dir": "out",
    "time_unit": "h",
    "data": {"source": "synthetic", "synthesis": {}, "runs": [], "splits": None,
             "split_counts": {"train": 6, "validation": 3, "test": 3}},
    "features": {"bin_count": spectral.DEFAULT_BIN_COUNT, "kaiser_shape": spectral.DEFAULT_KAISER_SHAPE},
    "weibull": {"beta": DEFAULT_BETA, "records": None},
    "train": {"loss": "W-MSE-Comb", "lambda": 1.0, "hidden_layers": 2, "units_per_layer": 32,
              "dropout_prob": 0.1, "batch_size": 32, "learning_rate": 0.001,
              "max_epochs": 300, "patience": 50},
    "search": {"n_architectures": 40, "max_epochs": 300, "patience": 50, "lambda_per_trial": False},
    "filter": {"min_r2": 0.2, "max_rmse": 0.35},
    "report": {"rolling_window": None},
}

# fields that never change results and so stay out of the hash
UNHASHED = ("output_dir",)


class ManifestError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "splits":
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ManifestError("manifest", f"file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ManifestError("manifest", f"cannot parse: {exc}") from exc
    if not isinstance(raw, dict):
        raise ManifestError("manifest", "top level must be a mapping")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ManifestError(sorted(unknown)[0], "unknown manifest field")
    m = _merge(DEFAULTS, raw)
    m["_base_dir"] = str(path.parent.resolve())
    return m


def from_dict(raw: dict) -> dict:
    m = _merge(DEFAULTS, raw)
    m.setdefault("_base_dir", str(Path.cwd()))
    return m


def apply_overrides(m: dict, overrides: dict) -> dict:
    """Return a copy with flag overrides applied; the overrides are recorded."""
    m = copy.deepcopy(m)
    applied = {}
    for key, value in overrides.items():
        if value is None:
            continue
        node = m
        parts = key.split(".")
        for p in parts[:-1]:
            node = node[p]
        node[parts[-1]] = value
        applied[key] = value
    m["_overrides"] = applied
    return m


def validate(m: dict) -> None:
    if not isinstance(m["seed"], int):
        raise ManifestError("seed", "must be an integer")
    if m["time_unit"] not in TIME_UNITS:
        raise ManifestError("time_unit", f"must be one of {sorted(TIME_UNITS)}")
    data = m["data"]
    if data["source"] not in ("synthetic", "files"):
        raise ManifestError("data.source", "must be 'synthetic' or 'files'")
    if data["source"] == "synthetic":
        try:
            SynthesisSpec(**data["synthesis"])
        except TypeError as exc:
            raise ManifestError("data.synthesis", str(exc)) from exc
        except ValueError as exc:
            raise ManifestError("data.synthesis", str(exc)) from exc
    else:
        if not data["runs"]:
            raise ManifestError("data.runs", "file source needs at least one run")
        for i, run in enumerate(data["runs"]):
            where = f"data.runs[{i}]"
            for key in ("id", "path", "format"):
                if key not in run:
                    raise ManifestError(f"{where}.{key}", "required")
            if run["format"] not in FORMAT_DEFAULTS:
                raise ManifestError(f"{where}.format", f"must be one of {sorted(FORMAT_DEFAULTS)}")
    if data["splits"] is not None:
        bad = {v for v in data["splits"].values() if v not in SPLITS}
        if bad:
            raise ManifestError("data.splits", f"unknown split names {sorted(bad)}")
    else:
        counts = data["split_counts"]
        if set(counts) != set(SPLITS) or any(int(c) < 1 for c in counts.values()):
            raise ManifestError("data.split_counts", f"need positive counts for {SPLITS}")
    feats = m["features"]
    if int(feats["bin_count"]) < 1:
        raise ManifestError("features.bin_count", "must be positive")
    if float(feats["kaiser_shape"]) < 0:
        raise ManifestError("features.kaiser_shape", "must be non-negative")
    if not float(m["weibull"]["beta"]) > 0:
        raise ManifestError("weibull.beta", "must be positive")
    if m["train"]["loss"] not in LOSS_KINDS:
        raise ManifestError("train.loss", f"must be one of {LOSS_KINDS}")
    if int(m["search"]["n_architectures"]) < 1:
        raise ManifestError("search.n_architectures", "must be >= 1")


def hash_manifest(m: dict) -> str:
    """SHA-256 over the effective settings (private keys and output dir excluded)."""
    clean = {k: v for k, v in m.items() if not k.startswith("_") and k not in UNHASHED}
    blob = json.dumps(clean, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def derive_seed(master: int, purpose: str) -> int:
    """Sub-seed for one pipeline stage; every stage's randomness comes from ``master``."""
    tag = int.from_bytes(hashlib.sha256(purpose.encode()).digest()[:4], "little")
    return int(np.random.SeedSequence([master, tag]).generate_state(1, dtype=np.uint32)[0])


def resolve_path(m: dict, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else Path(m["_base_dir"]) / p


def split_assignment(m: dict, run_ids) -> dict:
    data = m["data"]
    if data["splits"] is not None:
        return dict(data["splits"])
    counts = data["split_counts"]
    need = sum(int(counts[s]) for s in SPLITS)
    if need != len(run_ids):
        raise ManifestError("data.split_counts", f"counts sum to {need} but there are {len(run_ids)} runs")
    out, i = {}, 0
    for s in SPLITS:
        for rid in run_ids[i : i + int(counts[s])]:
            out[rid] = s
        i += int(counts[s])
    return out
