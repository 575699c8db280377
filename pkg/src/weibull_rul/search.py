"""Random hyperparameter search and the loss-effectiveness statistics.

One architecture draw is trained once per loss kind (nine trials), sharing
its lambda and seed so that the loss is the only thing that varies. After
training, results are filtered by R^2/RMSE thresholds, the best loss per
architecture is counted, and each loss kind is correlated with test R^2.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats
from threadpoolctl import threadpool_limits

from . import network, trainer
from .dataset import SPLITS, Assembled
from .losses import LOSS_KINDS, TRADITIONAL, LossSpec
from .network import LAYER_CHOICES, UNIT_CHOICES, NetworkArchitecture
from .trainer import BATCH_SIZES, LEARNING_RATES, Metrics, TrainConfig
from .weibull import WeibullParams

log = logging.getLogger(__name__)

DROPOUT_CHOICES = (0.1, 0.2, 0.25, 0.4, 0.5, 0.6)
METRIC_NAMES = ("mse", "rmse", "rmsle", "r2")


@dataclass(frozen=True)
class SearchSpace:
    batch_sizes: tuple = BATCH_SIZES
    learning_rates: tuple = LEARNING_RATES
    lambda_range: tuple = (0.0, 3.0)
    layers: tuple = tuple(LAYER_CHOICES)
    units: tuple = UNIT_CHOICES
    dropouts: tuple = DROPOUT_CHOICES
    loss_kinds: tuple = LOSS_KINDS
    lambda_per_trial: bool = False
    max_epochs: int = trainer.DEFAULT_MAX_EPOCHS
    patience: int = trainer.DEFAULT_PATIENCE


@dataclass(frozen=True)
class TrialConfig:
    trial_id: int
    arch_index: int
    loss_kind: str
    batch_size: int
    learning_rate: float
    lam: float
    hidden_layers: int
    units_per_layer: int
    dropout_prob: float
    seed: int
    max_epochs: int
    patience: int

    def architecture(self, input_dim: int) -> NetworkArchitecture:
        return NetworkArchitecture(input_dim, self.hidden_layers, self.units_per_layer, self.dropout_prob)

    def train_config(self, weibull: WeibullParams, inject_nan_epoch: int | None = None) -> TrainConfig:
        return TrainConfig(
            loss=LossSpec(self.loss_kind, self.lam, weibull),
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
            inject_nan_epoch=inject_nan_epoch,
        )


@dataclass
class TrialResult:
    config: TrialConfig
    metrics: dict[str, Metrics]
    stop_epoch: int
    epochs_run: int
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def metric(self, split: str, name: str) -> float:
        return getattr(self.metrics[split], name)


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def _seed_from(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1, dtype=np.uint32)[0])


def sample_architecture(space: SearchSpace, master_seed: int, arch_index: int) -> list[TrialConfig]:
    """Draw one architecture and pair it with every loss kind.

    Each search dimension is drawn uniformly. The returned configs
    differ only in loss kind (and in lambda when ``lambda_per_trial`` is set).
    """
    rng = _rng(master_seed, arch_index, 0)
    batch = int(rng.choice(space.batch_sizes))
    lr = float(rng.choice(space.learning_rates))
    lam = float(rng.uniform(*space.lambda_range))
    layers = int(rng.choice(space.layers))
    units = int(rng.choice(space.units))
    dropout = float(rng.choice(space.dropouts))
    seed = _seed_from(master_seed, arch_index, 1)
    configs = []
    for k, kind in enumerate(space.loss_kinds):
        if space.lambda_per_trial:
            lam = float(_rng(master_seed, arch_index, 2, k).uniform(*space.lambda_range))
        configs.append(
            TrialConfig(
                trial_id=arch_index * len(space.loss_kinds) + k,
                arch_index=arch_index,
                loss_kind=kind,
                batch_size=batch,
                learning_rate=lr,
                lam=lam,
                hidden_layers=layers,
                units_per_layer=units,
                dropout_prob=dropout,
                seed=seed,
                max_epochs=space.max_epochs,
                patience=space.patience,
            )
        )
    return configs


@dataclass
class TrialOutput:
    """A trial result plus its trained state and curves (kept for reporting)."""

    result: TrialResult
    fit: trainer.FitResult


def train_trial(config: TrialConfig, data: Assembled, weibull: WeibullParams, inject_nan_epoch=None) -> TrialOutput:
    arch = config.architecture(data.bin_count)
    state = network.init(arch, config.seed)
    try:
        fitted = trainer.fit(state, data.train, data.validation, config.train_config(weibull, inject_nan_epoch))
    except (FloatingPointError, ValueError, OverflowError) as exc:
        log.warning("trial %d failed: %s", config.trial_id, exc)
        fitted = trainer.FitResult(state, 0, 0, status="diverged", message=str(exc))
    if fitted.diverged:
        missing = {s: Metrics.missing() for s in SPLITS}
        return TrialOutput(TrialResult(config, missing, fitted.stop_epoch, fitted.epochs_run, "diverged"), fitted)
    with np.errstate(over="ignore", invalid="ignore"):
        metrics = {s: trainer.evaluate(fitted.state, data.split(s)) for s in SPLITS}
    status = "ok" if all(m.finite for m in metrics.values()) else "diverged"
    return TrialOutput(TrialResult(config, metrics, fitted.stop_epoch, fitted.epochs_run, status), fitted)


def run_trial(config: TrialConfig, data: Assembled, weibull: WeibullParams, inject_nan_epoch=None) -> TrialResult:
    with threadpool_limits(1):
        return train_trial(config, data, weibull, inject_nan_epoch).result


# worker-process globals, set once per process by the pool initializer
_WORKER: dict = {}


def _init_worker(data: Assembled, weibull: WeibullParams) -> None:
    _WORKER["data"] = data
    _WORKER["weibull"] = weibull


def _worker_run(job: tuple[TrialConfig, int | None]) -> TrialResult:
    config, inject = job
    return run_trial(config, _WORKER["data"], _WORKER["weibull"], inject)


def run_search(
    space: SearchSpace,
    data: Assembled,
    weibull: WeibullParams,
    n_architectures: int,
    master_seed: int,
    workers: int = 1,
    inject_divergence: Iterable[int] = (),
    progress=None,
    on_result=None,
) -> list[TrialResult]:
    """Train ``n_architectures`` x ``len(space.loss_kinds)`` models.

    Every trial is a pure function of its config and the data, and BLAS is
    pinned to one thread per trial, so results do not depend on ``workers``.
    ``inject_divergence`` lists trial ids whose loss is forced non-finite.
    """
    if n_architectures < 1:
        raise ValueError("n_architectures must be >= 1")
    poisoned = set(inject_divergence)
    configs = [c for a in range(n_architectures) for c in sample_architecture(space, master_seed, a)]
    jobs = [(c, 1 if c.trial_id in poisoned else None) for c in configs]
    results: list[TrialResult] = []
    if workers <= 1:
        _init_worker(data, weibull)
        for job in jobs:
            results.append(_worker_run(job))
            if on_result:
                on_result(results[-1])
            if progress:
                progress(len(results), len(jobs))
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(data, weibull)) as pool:
            for res in pool.map(_worker_run, jobs, chunksize=1):
                results.append(res)
                if on_result:
                    on_result(res)
                if progress:
                    progress(len(results), len(jobs))
    results.sort(key=lambda r: r.config.trial_id)
    return results


# -- filtering and statistics --------------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    min_r2: float = 0.2
    max_rmse: float = 0.35


def passes(result: TrialResult, thresholds: Thresholds = Thresholds()) -> bool:
    if not result.ok:
        return False
    return all(
        result.metric(s, "r2") > thresholds.min_r2 and result.metric(s, "rmse") < thresholds.max_rmse
        for s in SPLITS
    )


def filter_results(results: Sequence[TrialResult], thresholds: Thresholds = Thresholds()) -> list[TrialResult]:
    """Keep trials with R^2 above and RMSE below the thresholds on every split."""
    return [r for r in results if passes(r, thresholds)]


def _winner_key(r: TrialResult):
    order = LOSS_KINDS.index(r.config.loss_kind) if r.config.loss_kind in LOSS_KINDS else len(LOSS_KINDS)
    return (-r.metric("test", "r2"), r.metric("test", "rmse"), order, r.config.trial_id)


def architecture_winners(results: Sequence[TrialResult]) -> list[TrialResult]:
    """Best trial (by test R^2) of each architecture.

    Ties fall back to lower test RMSE, then loss declaration order.
    """
    groups: dict[int, list[TrialResult]] = {}
    for r in results:
        groups.setdefault(r.config.arch_index, []).append(r)
    return [min(groups[a], key=_winner_key) for a in sorted(groups)]


@dataclass(frozen=True)
class LossFrequency:
    kind: str
    count: int
    percent: float


def rank_loss_frequency(results: Sequence[TrialResult]) -> list[LossFrequency]:
    winners = architecture_winners(results)
    if not winners:
        return []
    counts = {k: 0 for k in LOSS_KINDS}
    for w in winners:
        counts[w.config.loss_kind] = counts.get(w.config.loss_kind, 0) + 1
    total = len(winners)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], LOSS_KINDS.index(kv[0])))
    return [LossFrequency(k, c, 100.0 * c / total) for k, c in ranked]


@dataclass(frozen=True)
class PointBiserial:
    kind: str
    r: float
    p: float
    n_in: int
    n_out: int
    valid: bool = True
    reason: str = ""


def point_biserial_from_groups(in_group, out_group, kind: str = "") -> PointBiserial:
    """r_pb = (M1 - M0) / s_n * sqrt(n1 n0 / n^2) with s_n the population std.

    The p-value is two-sided from t = r sqrt((n-2)/(1-r^2)) with n-2 dof.
    """
    a = np.asarray(in_group, dtype=float)
    b = np.asarray(out_group, dtype=float)
    n1, n0 = a.size, b.size
    if n1 < 2 or n0 < 2:
        return PointBiserial(kind, math.nan, math.nan, n1, n0, False, "fewer than 2 results in a group")
    both = np.concatenate([a, b])
    s_n = both.std()
    if s_n == 0.0:
        return PointBiserial(kind, math.nan, math.nan, n1, n0, False, "zero variance")
    n = n1 + n0
    r = (a.mean() - b.mean()) / s_n * math.sqrt(n1 * n0 / n**2)
    r = float(np.clip(r, -1.0, 1.0))
    dof = n - 2
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt(dof / (1.0 - r * r))
        p = float(2.0 * stats.t.sf(abs(t), dof))
    return PointBiserial(kind, r, min(max(p, 0.0), 1.0), n1, n0)


def point_biserial(results: Sequence[TrialResult], loss_kind: str) -> PointBiserial:
    """Correlation between "trained with ``loss_kind``" and test R^2."""
    in_group = [r.metric("test", "r2") for r in results if r.config.loss_kind == loss_kind]
    out_group = [r.metric("test", "r2") for r in results if r.config.loss_kind != loss_kind]
    return point_biserial_from_groups(in_group, out_group, loss_kind)


def point_biserial_permutation(
    results: Sequence[TrialResult], loss_kind: str, n_perm: int = 2000, seed: int = 0
) -> float:
    """Two-sided permutation p-value for the point-biserial correlation."""
    values = np.array([r.metric("test", "r2") for r in results])
    member = np.array([r.config.loss_kind == loss_kind for r in results])
    observed = point_biserial_from_groups(values[member], values[~member]).r
    if math.isnan(observed):
        return math.nan
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_perm):
        perm = rng.permutation(member)
        r = point_biserial_from_groups(values[perm], values[~perm]).r
        hits += abs(r) >= abs(observed) - 1e-15
    return (hits + 1) / (n_perm + 1)


def correlations(results: Sequence[TrialResult]) -> list[PointBiserial]:
    return [point_biserial(results, k) for k in LOSS_KINDS]


SUMMARY_ROWS = ("count", "mean", "std", "min", "25%", "50%", "75%", "max")


@dataclass(frozen=True)
class EpochSummary:
    group: str
    count: int
    mean: float = math.nan
    std: float = math.nan
    min: float = math.nan
    q25: float = math.nan
    q50: float = math.nan
    q75: float = math.nan
    max: float = math.nan
    valid: bool = True

    def row(self) -> list[float]:
        return [self.count, self.mean, self.std, self.min, self.q25, self.q50, self.q75, self.max]


def summarize_epochs(epochs: Sequence[float], group: str = "") -> EpochSummary:
    """count/mean/std/min/quartiles/max; sample std and linear-interpolated quantiles."""
    e = np.asarray(epochs, dtype=float)
    if e.size == 0:
        return EpochSummary(group, 0, valid=False)
    std = float(e.std(ddof=1)) if e.size > 1 else math.nan
    q25, q50, q75 = np.percentile(e, [25, 50, 75])
    return EpochSummary(group, int(e.size), float(e.mean()), std, float(e.min()),
                        float(q25), float(q50), float(q75), float(e.max()))


def early_stop_summary(results: Sequence[TrialResult]) -> dict[str, EpochSummary]:
    groups = {"traditional": [], "weibull": []}
    for r in results:
        groups["traditional" if r.config.loss_kind in TRADITIONAL else "weibull"].append(r.stop_epoch)
    return {g: summarize_epochs(v, g) for g, v in groups.items()}


# -- delimited tables ----------------------------------------------------------

CONFIG_FIELDS = [f for f in TrialConfig.__dataclass_fields__]
RESULT_COLUMNS = (
    CONFIG_FIELDS
    + ["stop_epoch", "epochs_run", "status", "diverged"]
    + [f"{s}_{m}" for s in SPLITS for m in METRIC_NAMES]
)


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_to_csv(results: Sequence[TrialResult], header: dict | None = None) -> str:
    out = io.StringIO()
    for k, v in (header or {}).items():
        out.write(f"# {k}={v}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        cfg = asdict(r.config)
        row = [cfg[f] for f in CONFIG_FIELDS] + [r.stop_epoch, r.epochs_run, r.status, not r.ok]
        row += [getattr(r.metrics[s], m) for s in SPLITS for m in METRIC_NAMES]
        w.writerow([fmt(v) for v in row])
    return out.getvalue()


_FIELD_TYPES = {f.name: f.type for f in TrialConfig.__dataclass_fields__.values()}


def _parse_field(name: str, value: str):
    kind = _FIELD_TYPES[name]
    if kind in ("int", int):
        return int(value)
    if kind in ("float", float):
        return float(value)
    return value


def results_from_csv(text: str) -> tuple[list[TrialResult], dict]:
    header = {}
    lines = []
    for line in text.splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            header[k] = v
        else:
            lines.append(line)
    reader = csv.DictReader(lines)
    results = []
    for row in reader:
        cfg = TrialConfig(**{f: _parse_field(f, row[f]) for f in CONFIG_FIELDS})
        metrics = {s: Metrics(*(float(row[f"{s}_{m}"]) for m in METRIC_NAMES)) for s in SPLITS}
        results.append(TrialResult(cfg, metrics, int(row["stop_epoch"]), int(row["epochs_run"]), row["status"]))
    return results, header


@dataclass
class Analysis:
    surviving: list[TrialResult]
    frequency: list[LossFrequency]
    correlations: list[PointBiserial]
    early_stop: dict[str, EpochSummary]
    winners: list[TrialResult] = field(default_factory=list)


def analyze(results: Sequence[TrialResult], thresholds: Thresholds = Thresholds()) -> Analysis:
    surviving = filter_results(results, thresholds)
    return Analysis(
        surviving,
        rank_loss_frequency(surviving),
        correlations(surviving),
        early_stop_summary(surviving),
        architecture_winners(surviving),
    )
