"""Command-line pipeline: synth | ingest -> features -> weibayes -> train | search -> filter -> report."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, dataset, manifest, network, report, search
from .dataset import DatasetError, SynthesisSpec
from .manifest import ManifestError
from .weibull import FailureRecord, weibayes_eta

log = logging.getLogger("weibull_rul")

RUNS_FILE = "runs.npz"
FEATURES_FILE = "features.csv"
WEIBAYES_FILE = "weibayes.json"
RESULTS_FILE = "results.csv"
PARTIAL_FILE = "results.partial.csv"
FILTERED_FILE = "filtered.csv"
TRAIN_DIR = "train"
REPORT_DIR = "report"


class PrerequisiteError(RuntimeError):
    def __init__(self, artifact: Path, producer: str):
        super().__init__(f"missing {artifact}; run `{producer}` first")


class ProvenanceError(RuntimeError):
    pass


# -- context -------------------------------------------------------------------


class Context:
    def __init__(self, m: dict, out: Path, workers: int, command: str):
        self.m = m
        self.out = out
        self.workers = workers
        self.command = command
        self.hash = manifest.hash_manifest(m)
        out.mkdir(parents=True, exist_ok=True)

    @property
    def seed(self) -> int:
        return self.m["seed"]

    def path(self, name: str) -> Path:
        return self.out / name

    def require(self, name: str, producer: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise PrerequisiteError(p, producer)
        return p

    def provenance(self, **extra) -> dict:
        return {
            "manifest_hash": self.hash,
            "command": self.command,
            "seed": self.seed,
            "overrides": self.m.get("_overrides", {}),
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            **extra,
        }

    def record(self, **extra) -> None:
        prov = self.provenance(**extra)
        prov["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        d = self.out / "provenance"
        d.mkdir(exist_ok=True)
        (d / f"{self.command}.json").write_text(json.dumps(prov, indent=2, sort_keys=True, default=str) + "\n")

    def check_hash(self, found: str | None, what: str) -> None:
        if found != self.hash:
            raise ProvenanceError(
                f"{what} was produced under manifest hash {found}, current is {self.hash}; "
                "re-run the pipeline with one manifest"
            )


def _csv_header_hash(path: Path) -> str | None:
    with open(path) as fh:
        for line in fh:
            if not line.startswith("# "):
                break
            k, _, v = line[2:].strip().partition("=")
            if k == "manifest_hash":
                return v
    return None


# -- subcommands ---------------------------------------------------------------


def cmd_synth(ctx: Context, args) -> int:
    data = ctx.m["data"]
    if data["source"] != "synthetic":
        raise ManifestError("data.source", "`synth` needs data.source = synthetic")
    spec = SynthesisSpec(**data["synthesis"])
    seed = manifest.derive_seed(ctx.seed, "synth")
    runs = dataset.synthesize_runs(spec, seed)
    dataset.save_runs(ctx.path(RUNS_FILE), runs, ctx.provenance(synth_seed=seed))
    censored = sum(not r.failed for r in runs)
    print(f"synthesized {len(runs)} runs ({censored} censored) -> {ctx.path(RUNS_FILE)}")
    ctx.record(synth_seed=seed, n_runs=len(runs), censored=censored)
    return 0


def cmd_ingest(ctx: Context, args) -> int:
    data = ctx.m["data"]
    if data["source"] != "files":
        raise ManifestError("data.source", "`ingest` needs data.source = files")
    runs = []
    for i, spec in enumerate(data["runs"]):
        kw = {k: spec[k] for k in ("channel", "sample_rate", "delimiter", "columns", "failed") if k in spec}
        try:
            runs.append(
                dataset.ingest_run(
                    manifest.resolve_path(ctx.m, spec["path"]), spec["format"], run_id=spec["id"],
                    time_unit=spec.get("time_unit", ctx.m["time_unit"]), **kw,
                )
            )
        except dataset.IngestError as exc:
            raise dataset.IngestError(f"data.runs[{i}] ({spec['id']}): {exc}") from exc
        print(f"ingested {spec['id']}: {len(runs[-1].windows)} windows, "
              f"t_N = {runs[-1].total_runtime:.4g} {ctx.m['time_unit']}")
    dataset.save_runs(ctx.path(RUNS_FILE), runs, ctx.provenance())
    ctx.record(n_runs=len(runs))
    return 0


def _load_runs(ctx: Context):
    producer = "synth" if ctx.m["data"]["source"] == "synthetic" else "ingest"
    runs, prov = dataset.load_runs(ctx.require(RUNS_FILE, producer))
    ctx.check_hash(prov.get("manifest_hash"), RUNS_FILE)
    return runs


def cmd_features(ctx: Context, args) -> int:
    runs = _load_runs(ctx)
    splits = manifest.split_assignment(ctx.m, [r.id for r in runs])
    feats = ctx.m["features"]
    data = dataset.assemble(runs, splits, int(feats["bin_count"]), float(feats["kaiser_shape"]))
    beta = float(ctx.m["weibull"]["beta"])
    digest = dataset.save_features(ctx.path(FEATURES_FILE), data, beta, ctx.provenance())
    sizes = {s: len(data.split(s)) for s in dataset.SPLITS}
    print(f"features {sizes} -> {ctx.path(FEATURES_FILE)} (sha256 {digest[:12]})")
    ctx.record(rows=sizes, content_sha256=digest)
    return 0


def load_cache(ctx: Context, check: bool = True) -> dataset.FeatureCache:
    cache = dataset.load_features(ctx.require(FEATURES_FILE, "features"))
    if check:
        ctx.check_hash(cache.header.get("provenance", {}).get("manifest_hash"), FEATURES_FILE)
    return cache


def _parse_record(text: str) -> FailureRecord:
    time_s, _, state = text.partition(",")
    state = state.strip().lower() or "failed"
    if state not in ("failed", "censored"):
        raise ManifestError("--record", f"state must be 'failed' or 'censored', got {state!r}")
    return FailureRecord(float(time_s), state == "failed")


def cmd_weibayes(ctx: Context, args) -> int:
    beta = float(ctx.m["weibull"]["beta"])
    if args.record:
        records = [_parse_record(r) for r in args.record]
        source = "command line"
    elif ctx.m["weibull"]["records"]:
        records = [FailureRecord(float(t), bool(f)) for t, f in ctx.m["weibull"]["records"]]
        source = "manifest"
    else:
        # read-only use; a --beta override may legitimately differ from the cached run
        records = load_cache(ctx, check=False).data.records
        source = FEATURES_FILE
    eta = weibayes_eta(records, beta)
    unit = ctx.m["time_unit"]
    print(f"eta = {eta:.6f} {unit}  (beta = {beta:g}, {sum(r.failed for r in records)} failed / "
          f"{len(records)} records from {source})")
    for r in records:
        print(f"  t = {r.time:.6g} {unit}  {'failed' if r.failed else 'censored'}")
    payload = {"eta": eta, "beta": beta, "time_unit": unit, "source": source,
               "records": [{"time": r.time, "failed": r.failed} for r in records],
               "manifest_hash": ctx.hash}
    ctx.path(WEIBAYES_FILE).write_text(json.dumps(payload, indent=2) + "\n")
    ctx.record(eta=eta, beta=beta)
    return 0


def cmd_train(ctx: Context, args) -> int:
    cache = load_cache(ctx)
    t = ctx.m["train"]
    cfg = search.TrialConfig(
        trial_id=0, arch_index=0, loss_kind=t["loss"], batch_size=int(t["batch_size"]),
        learning_rate=float(t["learning_rate"]), lam=float(t["lambda"]),
        hidden_layers=int(t["hidden_layers"]), units_per_layer=int(t["units_per_layer"]),
        dropout_prob=float(t["dropout_prob"]), seed=manifest.derive_seed(ctx.seed, "train"),
        max_epochs=int(t["max_epochs"]), patience=int(t["patience"]),
    )
    out = search.train_trial(cfg, cache.data, cache.weibull)
    d = ctx.out / TRAIN_DIR
    d.mkdir(exist_ok=True)
    header = {"manifest_hash": ctx.hash}
    (d / "result.csv").write_text(search.results_to_csv([out.result], header))
    (d / "curves.csv").write_text(report.curves_table(out.fit, header))
    meta = {"trial": cfg.__dict__, "beta": cache.beta, "eta": cache.eta,
            "scaler_min": cache.header["scaler_min"], "scaler_max": cache.header["scaler_max"],
            "manifest_hash": ctx.hash, "status": out.result.status}
    network.save_checkpoint(d / "checkpoint.npz", out.fit.state, meta)
    r = out.result
    print(f"{cfg.loss_kind}: status {r.status}, stop epoch {r.stop_epoch}")
    if r.ok:
        for s in dataset.SPLITS:
            m = r.metrics[s]
            print(f"  {s:<10} R2 {m.r2:.4f}  RMSE {m.rmse:.4f}  RMSLE {m.rmsle:.4f}")
    ctx.record(trial_seed=cfg.seed, status=r.status)
    return 0


def _search_space(ctx: Context) -> search.SearchSpace:
    s = ctx.m["search"]
    return search.SearchSpace(
        max_epochs=int(s["max_epochs"]), patience=int(s["patience"]),
        lambda_per_trial=bool(s["lambda_per_trial"]),
    )


def cmd_search(ctx: Context, args) -> int:
    cache = load_cache(ctx)
    space = _search_space(ctx)
    n_arch = int(ctx.m["search"]["n_architectures"])
    master = manifest.derive_seed(ctx.seed, "search")
    done: list[search.TrialResult] = []
    start = time.time()

    def progress(k, total):
        if k % 9 == 0 or k == total:
            log.info("%d/%d trials (%.0f s)", k, total, time.time() - start)

    header = {"manifest_hash": ctx.hash}
    try:
        results = search.run_search(space, cache.data, cache.weibull, n_arch, master, ctx.workers,
                                    progress=progress, on_result=done.append)
    except KeyboardInterrupt:
        done.sort(key=lambda r: r.config.trial_id)
        ctx.path(PARTIAL_FILE).write_text(search.results_to_csv(done, header))
        print(f"interrupted: {len(done)} completed trials saved to {ctx.path(PARTIAL_FILE)}", file=sys.stderr)
        return 130
    ctx.path(RESULTS_FILE).write_text(search.results_to_csv(results, header))
    n_ok = sum(r.ok for r in results)
    print(f"{len(results)} trials ({n_ok} ok, {len(results) - n_ok} diverged) -> {ctx.path(RESULTS_FILE)}")
    ctx.record(search_seed=master, n_trials=len(results), workers=ctx.workers)
    return 0


def _thresholds(ctx: Context) -> search.Thresholds:
    f = ctx.m["filter"]
    return search.Thresholds(float(f["min_r2"]), float(f["max_rmse"]))


def load_results(ctx: Context) -> list[search.TrialResult]:
    path = ctx.require(RESULTS_FILE, "search")
    results, header = search.results_from_csv(path.read_text())
    ctx.check_hash(header.get("manifest_hash"), RESULTS_FILE)
    return results


def cmd_filter(ctx: Context, args) -> int:
    results = load_results(ctx)
    kept = search.filter_results(results, _thresholds(ctx))
    ctx.path(FILTERED_FILE).write_text(search.results_to_csv(kept, {"manifest_hash": ctx.hash}))
    archs = len({r.config.arch_index for r in kept})
    print(f"{len(kept)}/{len(results)} trials pass the thresholds ({archs} architectures) -> {ctx.path(FILTERED_FILE)}")
    ctx.record(kept=len(kept))
    return 0


def cmd_report(ctx: Context, args) -> int:
    results = load_results(ctx)
    filtered = ctx.path(FILTERED_FILE)
    if filtered.exists():
        ctx.check_hash(_csv_header_hash(filtered), FILTERED_FILE)
    cache = load_cache(ctx)
    a = search.analyze(results, _thresholds(ctx))
    d = ctx.out / REPORT_DIR
    d.mkdir(exist_ok=True)
    header = {"manifest_hash": ctx.hash}
    (d / "loss_frequency.csv").write_text(report.frequency_table(a, header))
    (d / "correlations.csv").write_text(report.correlation_table(a, header))
    (d / "early_stop.csv").write_text(report.early_stop_table(a, header))

    best = report.best_overall(a.surviving) or report.best_overall(results)
    unit = ctx.m["time_unit"]
    fit, traces = None, []
    if best is not None:
        out = search.train_trial(best.config, cache.data, cache.weibull)
        if out.result.metrics != best.metrics:
            log.warning("retrained best trial %d does not reproduce its recorded metrics", best.config.trial_id)
        fit = out.fit
        window = ctx.m["report"]["rolling_window"]
        traces = report.prediction_traces(fit.state, cache.data, window)
        (d / "best_model_curves.csv").write_text(report.curves_table(fit, header))
        (d / "best_model_predictions.csv").write_text(report.traces_table(traces, header))
        summary = report.best_model_summary(best, cache.weibull, unit, a, len(results))
    else:
        summary = "No trial finished without diverging.\n"
    (d / "summary.txt").write_text(summary)
    report.write_figures(d, a, fit, traces, cache.weibull, cache.data, unit)
    print(summary, end="")
    print(f"report -> {d}")
    ctx.record(surviving=len(a.surviving))
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "features": cmd_features,
    "weibayes": cmd_weibayes,
    "train": cmd_train,
    "search": cmd_search,
    "filter": cmd_filter,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weibull-rul", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--manifest", type=Path, help="YAML/JSON manifest (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="master seed; all stage seeds derive from it")
        p.add_argument("--workers", type=int, default=1, help="parallel trial workers (search only)")
        p.add_argument("--out", type=Path, help="output directory (overrides manifest output_dir)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "weibayes":
            p.add_argument("--record", action="append", metavar="TIME[,failed|censored]",
                           help="failure record; repeatable")
            p.add_argument("--beta", type=float, help="Weibull shape (overrides weibull.beta)")
        if name == "search":
            p.add_argument("--architectures", type=int, help="overrides search.n_architectures")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        m = manifest.load(args.manifest) if args.manifest else manifest.from_dict({})
        m = manifest.apply_overrides(m, {
            "seed": args.seed,
            "weibull.beta": getattr(args, "beta", None),
            "search.n_architectures": getattr(args, "architectures", None),
        })
        manifest.validate(m)
        out = args.out or manifest.resolve_path(m, m["output_dir"])
        ctx = Context(m, Path(out), max(1, args.workers), args.command)
        return COMMANDS[args.command](ctx, args)
    except (ManifestError, PrerequisiteError, ProvenanceError, DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
