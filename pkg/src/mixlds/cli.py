"""Command-line entry point: ``mixlds <command> [options]``.

Exit codes: 0 success, 2 usage, 3 config parse error, 4 I/O error,
5 missing data subset, 6 pipeline stage error, 7 invalid input data,
7 also covers malformed dataset files, 1 any other package error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import fileio
from .classification import classify
from .clustering import (
    ClusterAssignment,
    auto_threshold,
    partition,
    statistic_table,
    threshold,
)
from .errors import (
    ConfigParse,
    DimensionMismatch,
    EmptyInput,
    MissingSubset,
    MixLdsError,
    RaggedCsv,
    StageError,
    TooShort,
)
from .estimation import ClusterData, least_squares_estimate
from .experiments import rows_to_csv, sweep
from .lds_core import LdsModel, separation_report
from .pipeline import PipelineConfig, match_models, run_pipeline
from .simulate import MixtureSpec, generate_models, simulate_dataset
from .subspace import SubspaceBank, estimate_subspaces

log = logging.getLogger("mixlds")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_MISSING_SUBSET = 5
EXIT_STAGE = 6
EXIT_INPUT = 7

_INPUT_ERRORS = (EmptyInput, RaggedCsv, DimensionMismatch, TooShort)


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return EXIT_MISSING_SUBSET if isinstance(exc.cause, MissingSubset) else EXIT_STAGE
    if isinstance(exc, ConfigParse):
        return EXIT_CONFIG
    if isinstance(exc, MissingSubset):
        return EXIT_MISSING_SUBSET
    if isinstance(exc, _INPUT_ERRORS):
        return EXIT_INPUT
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_INPUT
    return EXIT_ERROR


# ---------------------------------------------------------------- config

SPEC_KEYS = ("n_subspace", "n_clustering", "n_classification", "t_subspace", "t_clustering",
             "t_classification", "init_mode", "labels", "fractions")
PIPELINE_KEYS = ("k", "tau", "g", "use_subspaces", "sample_split", "ridge", "tau_grid", "rank_energy",
                 "jitter", "refine")


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"{path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigParse(f"{path}: top level must be a JSON object")
    return cfg


def apply_overrides(cfg: dict, args) -> dict:
    cfg = json.loads(json.dumps(cfg))
    pipe = cfg.setdefault("pipeline", {})
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "tau", None) is not None:
        pipe["tau"] = args.tau if args.tau in ("auto", "separation") else _as_float(args.tau, "--tau")
    if getattr(args, "g", None) is not None:
        pipe["g"] = args.g
    if getattr(args, "k", None) is not None:
        pipe["k"] = args.k if args.k == "auto" else int(args.k)
    if getattr(args, "no_subspaces", False):
        pipe["use_subspaces"] = False
    if getattr(args, "no_split", False):
        pipe["sample_split"] = False
    return cfg


def _as_float(text, flag):
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigParse(f"{flag} expects a number, 'auto' or 'separation', got {text!r}") from exc


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def models_from_config(cfg: dict) -> list:
    try:
        if "models" in cfg:
            return [LdsModel.from_dict(m) for m in cfg["models"]]
        gen = dict(cfg["generate"])
        gen.setdefault("seed", cfg.get("seed", 0))
        return generate_models(**gen)
    except (KeyError, TypeError) as exc:
        raise ConfigParse(f"config needs 'models' or a valid 'generate' section ({exc})") from exc


def spec_from_config(cfg: dict) -> MixtureSpec:
    models = models_from_config(cfg)
    kwargs = {key: cfg[key] for key in SPEC_KEYS if key in cfg}
    for key in ("n_subspace", "n_clustering", "n_classification", "t_subspace", "t_clustering",
                "t_classification"):
        kwargs.setdefault(key, 0)
    try:
        return MixtureSpec(models, seed=int(cfg.get("seed", 0)), **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigParse(f"invalid dataset settings: {exc}") from exc


def pipeline_config(cfg: dict, truth=None) -> PipelineConfig:
    pipe = {key: val for key, val in cfg.get("pipeline", {}).items() if key in PIPELINE_KEYS}
    if pipe.get("tau") == "separation":
        if truth is None or len(truth) < 2:
            raise ConfigParse("tau='separation' needs at least two ground-truth models")
        pipe["tau"] = separation_report(truth).default_tau()
    pipe.setdefault("seed", cfg.get("seed", 0))
    try:
        return PipelineConfig(**pipe)
    except (TypeError, ValueError) as exc:
        raise ConfigParse(f"invalid pipeline settings: {exc}") from exc


# ---------------------------------------------------------------- helpers

def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command, cfg, inputs, outputs, started):
    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "seed": cfg.get("seed"),
        "inputs": [str(p) for p in inputs if p is not None],
        "outputs": [str(p) for p in outputs],
        "wall_time_ms": int((time.perf_counter() - started) * 1000),
    }
    fileio.dump_json(manifest, out / "manifest.json")


def _truth(args, cfg):
    if getattr(args, "truth", None):
        return fileio.read_models(args.truth)
    if "models" in cfg or "generate" in cfg:
        return models_from_config(cfg)
    return None


def _load_trajectories(args, subset="clustering"):
    if getattr(args, "csv_dir", None):
        return fileio.read_csv_trajectories(args.csv_dir, header=args.header, subset=subset), None
    if not getattr(args, "dataset", None):
        raise ConfigParse("give --dataset or --csv-dir")
    ds = fileio.read_dataset(args.dataset)
    return ds.subset(subset), ds


def _workers(args) -> int:
    return args.workers if args.workers else (os.cpu_count() or 1)


# ---------------------------------------------------------------- commands

def cmd_simulate(args, started):
    cfg = apply_overrides(load_config(args.config), args)
    spec = spec_from_config(cfg)
    out = _out_dir(args)
    ds = simulate_dataset(spec)
    fileio.write_dataset(out / "dataset.jsonl", ds)
    fileio.write_models(out / "models.json", spec.models)
    _write_manifest(out, "simulate", cfg, [args.config], [out / "dataset.jsonl", out / "models.json"], started)


def cmd_fit(args, started):
    cfg = apply_overrides(load_config(args.config), args)
    truth = _truth(args, cfg)
    config = pipeline_config(cfg, truth)
    ds = fileio.read_dataset(args.dataset)
    report = run_pipeline(ds, config, truth=truth, workers=_workers(args))
    out = _out_dir(args)
    fileio.dump_json(report.to_dict(), out / "report.json")
    outputs = [out / "report.json"]
    if report.similarity is not None:
        fileio.write_matrix_csv(out / "similarity.csv", report.similarity.s)
        fileio.write_statistics_csv(out / "statistics.csv", report.statistics)
        outputs += [out / "similarity.csv", out / "statistics.csv"]
    _write_manifest(out, "fit", cfg, [args.dataset, args.config], outputs, started)


def cmd_subspace(args, started):
    cfg = apply_overrides(load_config(args.config), args)
    trajs, _ = _load_trajectories(args, args.subset)
    k = cfg.get("pipeline", {}).get("k", "auto")
    quarters = (0, 2) if args.reuse else (1, 3)
    if k == "auto":
        bank = estimate_subspaces(trajs, 1, "energy", cfg.get("pipeline", {}).get("rank_energy", 0.9), quarters)
    else:
        bank = estimate_subspaces(trajs, int(k), "fixed", quarters=quarters)
    out = _out_dir(args)
    fileio.dump_json(bank.to_dict(), out / "subspaces.json")
    _write_manifest(out, "subspace", cfg, [args.dataset or args.csv_dir], [out / "subspaces.json"], started)


def cmd_cluster(args, started):
    cfg = apply_overrides(load_config(args.config), args)
    truth = _truth(args, cfg)
    config = pipeline_config(cfg, truth)
    trajs, _ = _load_trajectories(args, "clustering")
    if len(trajs) < 2:
        raise EmptyInput("clustering needs at least two trajectories")
    if args.subspaces:
        bank = SubspaceBank.from_dict(fileio.load_json(args.subspaces))
    elif config.use_subspaces:
        # no separate subspace set here: reuse the clustering data
        k = 1 if config.k == "auto" else int(config.k)
        rule = "energy" if config.k == "auto" else "fixed"
        bank = estimate_subspaces(trajs, k, rule, config.rank_energy, quarters=(0, 2))
    else:
        bank = None
    table = statistic_table(trajs, bank, config.g, _workers(args))
    if config.tau == "auto":
        tau, k_hat = auto_threshold(table=table, grid=config.tau_grid)
    else:
        tau, k_hat = float(config.tau), None
    sim = threshold(table, tau)
    if config.k != "auto":
        k_hat = int(config.k)
    elif k_hat is None:
        from scipy.sparse.csgraph import connected_components
        k_hat = int(connected_components(sim.s, directed=False)[0])
    assignment: ClusterAssignment = partition(sim, k_hat)
    out = _out_dir(args)
    fileio.write_matrix_csv(out / "similarity.csv", sim.s)
    fileio.write_matrix_csv(out / "distance.csv", table.distance)
    fileio.write_statistics_csv(out / "statistics.csv", table)
    fileio.write_assignment_csv(out / "assignment.csv", [tr.index for tr in trajs], assignment.labels)
    outputs = [out / n for n in ("similarity.csv", "distance.csv", "statistics.csv", "assignment.csv")]
    _write_manifest(out, "cluster", cfg, [args.dataset or args.csv_dir], outputs, started)
    log.info("tau=%.6g, %d clusters", tau, assignment.k_hat)


def cmd_estimate(args, started):
    cfg = apply_overrides(load_config(args.config), args)
    ds = fileio.read_dataset(args.dataset)
    trajs = ds.all_trajectories()
    if args.assignment:
        labels = fileio.read_assignment_csv(args.assignment)
        trajs = [tr for tr in trajs if tr.index in labels]
        label_of = {tr.index: labels[tr.index] for tr in trajs}
    else:
        trajs = [tr for tr in trajs if tr.label is not None]
        label_of = {tr.index: tr.label for tr in trajs}
    if not trajs:
        raise EmptyInput("no labelled trajectories to estimate from")
    ridge = cfg.get("pipeline", {}).get("ridge", 0.0)
    estimates = []
    for c in sorted(set(label_of.values())):
        members = [tr for tr in trajs if label_of[tr.index] == c]
        estimates.append(least_squares_estimate(ClusterData(members), ridge))
    out = _out_dir(args)
    fileio.dump_json([e.to_dict() for e in estimates], out / "models.json")
    _write_manifest(out, "estimate", cfg, [args.dataset], [out / "models.json"], started)


def cmd_classify(args, started):
    cfg = apply_overrides(load_config(args.config), args)
    models = fileio.read_models(args.models)
    trajs, _ = _load_trajectories(args, args.subset)
    if not trajs:
        raise MissingSubset(f"the {args.subset} set is empty")
    table = classify(trajs, models, jitter=args.jitter)
    out = _out_dir(args)
    fileio.write_losses_csv(out / "losses.csv", table)
    _write_manifest(out, "classify", cfg, [args.dataset or args.csv_dir, args.models],
                    [out / "losses.csv"], started)


def _parse_seeds(text: str):
    seeds = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    return seeds


def cmd_sweep(args, started):
    cfg = load_config(args.config)
    params = dict(cfg.get("sweep", {}).get("params", {}))
    for item in args.param or []:
        key, _, val = item.partition("=")
        try:
            params[key] = json.loads(val)
        except json.JSONDecodeError as exc:
            raise ConfigParse(f"--param {item!r}: value must be JSON") from exc
    seeds = _parse_seeds(args.seeds)
    rows = sweep(args.experiment, params, seeds, workers=args.workers or 1)
    out = _out_dir(args)
    (out / "sweep.csv").write_text(rows_to_csv(rows))
    full = {"experiment": args.experiment, "params": params, "seeds": seeds}
    _write_manifest(out, "sweep", full, [args.config] if args.config else [], [out / "sweep.csv"], started)


def cmd_eval(args, started):
    report = fileio.load_json(args.report)
    truth = fileio.read_models(args.truth)
    estimates = [LdsModel.from_dict(m) for m in report["models"]]
    perm, a_err, w_err = match_models(estimates, truth)
    result = {"permutation": perm, "a_errors": a_err, "w_errors": w_err,
              "max_a_error": max(a_err), "max_w_error": max(w_err)}
    if args.dataset:
        ds = fileio.read_dataset(args.dataset)
        p = np.asarray(perm)
        for name, key in (("clustering", "cluster_labels"), ("classification", "classification_labels")):
            truth_lab = [tr.label for tr in ds.subset(name)]
            pred = report.get(key)
            if pred and all(t is not None for t in truth_lab):
                result[f"{name}_error"] = float(np.mean(p[np.asarray(pred)] != np.asarray(truth_lab)))
    out = _out_dir(args)
    fileio.dump_json(result, out / "eval.json")
    print(json.dumps(result, sort_keys=True))
    _write_manifest(out, "eval", {"report": str(args.report)}, [args.report, args.truth], [out / "eval.json"],
                    started)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (dataset spec + 'pipeline' section)")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, default=0, help="worker count (default: all cores)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    algo = argparse.ArgumentParser(add_help=False)
    algo.add_argument("--no-subspaces", action="store_true", help="skip dimensionality reduction")
    algo.add_argument("--no-split", action="store_true", help="estimate subspaces on the clustering set")
    algo.add_argument("--tau", help="threshold: a number, 'auto', or 'separation' (needs truth)")
    algo.add_argument("--g", type=int, help="number of statistic copies")
    algo.add_argument("--k", help="number of clusters or 'auto'")
    algo.add_argument("--truth", help="ground-truth models JSON")

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("--dataset", help="JSONL dataset")
    source.add_argument("--csv-dir", help="directory of per-trajectory CSV files")
    source.add_argument("--header", action="store_true", help="CSV files start with a header row")

    parser = argparse.ArgumentParser(prog="mixlds", description="Learn mixtures of linear dynamical systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="generate a dataset").set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common, algo], help="run the full two-stage pipeline")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("subspace", parents=[common, algo, source], help="estimate the subspace bank")
    p.add_argument("--subset", default="subspace", choices=("subspace", "clustering", "classification"))
    p.add_argument("--reuse", action="store_true", help="bank will be used on these same trajectories")
    p.set_defaults(func=cmd_subspace)

    p = sub.add_parser("cluster", parents=[common, algo, source], help="pairwise tests and clustering only")
    p.add_argument("--subspaces", help="precomputed subspaces JSON")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("estimate", parents=[common], help="least squares per labelled group")
    p.add_argument("--dataset", required=True)
    p.add_argument("--assignment", help="CSV with index,label columns (default: dataset labels)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("classify", parents=[common, source], help="score trajectories against models")
    p.add_argument("--models", required=True)
    p.add_argument("--subset", default="classification", choices=("subspace", "clustering", "classification"))
    p.add_argument("--jitter", type=float, default=0.0, help="add jitter*I to each noise covariance")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sweep", parents=[common], help="run a seeded experiment sweep")
    p.add_argument("experiment", choices=("fig2", "clustering_curve", "classification_curve"))
    p.add_argument("--seeds", default="0", help="e.g. '0-7' or '0,3,5'")
    p.add_argument("--param", action="append", help="override as key=JSON, e.g. d=10")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", parents=[common], help="compare a report with ground truth")
    p.add_argument("--report", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--dataset", help="dataset with true labels for error rates")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        args.func(args, started)
    except (MixLdsError, OSError, ValueError) as exc:
        print(f"mixlds {args.command}: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
