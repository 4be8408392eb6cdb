"""Seeded experiment sweeps producing long-format CSV rows.

Each experiment maps ``(x, seed)`` to a dict of metrics; ``sweep`` runs the
grid and appends one mean row per ``(x, metric)``.

``fig2``
    Model error versus total refinement sample size
    ``x = T_clustering * n_clustering + T_classification * n_classification``.
``clustering_curve``
    Mis-clustering rate versus clustering trajectory length, with and
    without subspace reduction.
``classification_curve``
    Mis-classification rate versus classification trajectory length, using
    coarse models fitted by stage 1.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from typing import Iterable, Optional

import numpy as np

from .classification import classification_error, classify
from .clustering import clustering_error
from .lds_core import separation_report
from .pipeline import (
    PipelineConfig,
    cluster_trajectories,
    estimate_bank,
    match_models,
    run_pipeline,
    _fit_clusters,
)
from .simulate import MixtureSpec, generate_models, simulate_dataset

SWEEP_HEADER = ("experiment", "x", "seed", "metric", "value")

DEFAULTS = {
    "fig2": dict(d=20, k=3, rho=0.5, t_subspace=20, t_clustering=20, t_classification=5,
                 subspace_per_d=30, clustering_per_d=10, classification_per_d=[0, 50, 200, 800],
                 init_mode="case1", g=1),
    "clustering_curve": dict(d=40, k=2, rho=0.5, delta=0.12, clustering_per_d=5,
                             t_clustering=[10, 20, 30, 40, 60], init_mode="case0", g=1),
    "classification_curve": dict(d=40, k=2, rho=0.5, delta=0.12, clustering_per_d=10, t_clustering=30,
                                 classification_per_d=5, t_classification=[4, 10, 20, 50],
                                 init_mode="case0", g=1),
}


def _params(experiment, params):
    if experiment not in DEFAULTS:
        raise ValueError(f"unknown experiment {experiment!r}; choose from {sorted(DEFAULTS)}")
    merged = dict(DEFAULTS[experiment])
    merged.update(params or {})
    return merged


def _x_values(experiment, p):
    if experiment == "fig2":
        return list(p["classification_per_d"])
    if experiment == "clustering_curve":
        return list(p["t_clustering"])
    return list(p["t_classification"])


def fig2_cell(p, n_cls_per_d, seed):
    d, k = p["d"], p["k"]
    models = generate_models(d, k, p["rho"], "orthogonal_rotation", seed=seed)
    tau = separation_report(models).default_tau() if k > 1 else 0.0
    spec = MixtureSpec(models, p["subspace_per_d"] * d, p["clustering_per_d"] * d, n_cls_per_d * d,
                       p["t_subspace"], p["t_clustering"], p["t_classification"],
                       init_mode=p["init_mode"], seed=seed)
    report = run_pipeline(simulate_dataset(spec), PipelineConfig(k=k, tau=tau, g=p["g"]))
    x = p["t_clustering"] * spec.n_clustering + p["t_classification"] * spec.n_classification
    out = {"clustering_error": report.clustering_error}
    if report.a_errors is not None:
        out["a_error"], out["w_error"] = report.max_errors()
    if report.classification_error is not None:
        out["classification_error"] = report.classification_error
    return x, out


def _perturbation_models(p, seed):
    return generate_models(p["d"], p["k"], p["rho"], "identity_perturbation",
                                 delta=p["delta"], seed=seed)


def clustering_curve_cell(p, t_clustering, seed):
    d, k = p["d"], p["k"]
    models = _perturbation_models(p, seed)
    tau = separation_report(models).default_tau()
    spec = MixtureSpec(models, 0, p["clustering_per_d"] * d, 0, 0, t_clustering, 0,
                       init_mode=p["init_mode"], seed=seed)
    ds = simulate_dataset(spec)
    truth = [tr.label for tr in ds.clustering_set]
    out = {}
    for name, use in (("error_subspace", True), ("error_identity", False)):
        cfg = PipelineConfig(k=k, tau=tau, g=p["g"], use_subspaces=use, sample_split=False)
        assignment = cluster_trajectories(ds.clustering_set, cfg, estimate_bank(ds, cfg))[0]
        out[name] = clustering_error(assignment, truth)
    return t_clustering, out


def classification_curve_cell(p, t_classification, seed):
    d, k = p["d"], p["k"]
    models = _perturbation_models(p, seed)
    tau = separation_report(models).default_tau()
    spec = MixtureSpec(models, 0, p["clustering_per_d"] * d, p["classification_per_d"] * d,
                       0, p["t_clustering"], t_classification, init_mode=p["init_mode"], seed=seed)
    ds = simulate_dataset(spec)
    cfg = PipelineConfig(k=k, tau=tau, g=p["g"], sample_split=False)
    assignment = cluster_trajectories(ds.clustering_set, cfg, estimate_bank(ds, cfg))[0]
    groups = [[ds.clustering_set[i] for i in assignment.members(c)] for c in range(assignment.k_hat)]
    coarse = [e.model for e in _fit_clusters(groups, cfg.ridge)]
    perm, _, _ = match_models(coarse, models)
    table = classify(ds.classification_set, coarse)
    truth = [tr.label for tr in ds.classification_set]
    return t_classification, {"classification_error": classification_error(table, truth, perm)}


CELLS = {
    "fig2": fig2_cell,
    "clustering_curve": clustering_curve_cell,
    "classification_curve": classification_curve_cell,
}


def _run_cell(args):
    experiment, p, xv, seed = args
    return CELLS[experiment](p, xv, seed)


def sweep(experiment: str, params: Optional[dict] = None, seeds: Iterable[int] = (0,), workers: int = 1):
    """Run ``experiment`` over its x-grid and ``seeds``.

    Returns rows ``(experiment, x, seed, metric, value)`` ordered by x, then
    seed, then metric name, followed per x by ``seed="mean"`` rows.
    """
    p = _params(experiment, params)
    seeds = list(seeds)
    cells = [(experiment, p, xv, s) for xv in _x_values(experiment, p) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]

    rows = []
    for i in range(0, len(cells), len(seeds)):
        block = results[i:i + len(seeds)]
        per_metric = {}
        for (x, metrics), seed in zip(block, seeds):
            for name in sorted(metrics):
                if metrics[name] is None:
                    continue
                rows.append((experiment, x, seed, name, float(metrics[name])))
                per_metric.setdefault(name, []).append(float(metrics[name]))
        x = block[0][0]
        for name in sorted(per_metric):
            rows.append((experiment, x, "mean", name, float(np.mean(per_metric[name]))))
    return rows


def mean_curve(rows, metric: str):
    """``(xs, means)`` for one metric from sweep rows."""
    pts = [(r[1], r[4]) for r in rows if r[2] == "mean" and r[3] == metric]
    pts.sort()
    return [x for x, _ in pts], [v for _, v in pts]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for row in rows:
        writer.writerow([row[0], row[1], row[2], row[3], repr(row[4])])
    return buf.getvalue()
