"""Two-stage learning of a mixture of LDS models from short trajectories.

Stage 1 (coarse): subspace estimation, pairwise clustering, least squares
per cluster.  Stage 2 (refine): classify the remaining trajectories with the
coarse models, append them to their clusters, re-run least squares.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.sparse.csgraph import connected_components

from .classification import LossTable, classify
from .clustering import (
    ClusterAssignment,
    SimilarityMatrix,
    StatisticTable,
    auto_threshold,
    partition,
    statistic_table,
    threshold,
)
from .errors import MissingSubset, MixLdsError, SizeMismatch, StageError, TooManyModels
from .estimation import ClusterData, ModelEstimate, least_squares_estimate
from .lds_core import LdsModel
from .simulate import MixedDataset
from .subspace import SubspaceBank, estimate_subspaces

logger = logging.getLogger(__name__)

MAX_MATCHED_MODELS = 10


@dataclass
class PipelineConfig:
    """Run parameters.

    ``k`` and ``tau`` accept ``"auto"``: the threshold is then chosen from
    the component-count plateau over ``tau_grid`` (a default grid when
    ``None``), and with ``k="auto"`` the cluster count is read off ``S``.
    ``sample_split=False`` estimates subspaces on the clustering set itself.
    ``refine=None`` runs stage 2 only when classification data exist;
    ``True`` demands it and ``False`` skips it.
    """

    k: Union[int, str] = "auto"
    tau: Union[float, str] = "auto"
    g: int = 1
    use_subspaces: bool = True
    sample_split: bool = True
    ridge: float = 0.0
    seed: int = 0
    tau_grid: Optional[Sequence[float]] = None
    rank_energy: float = 0.9
    jitter: float = 0.0
    refine: Optional[bool] = None

    def __post_init__(self):
        if self.g < 1:
            raise ValueError("g must be at least 1")
        if isinstance(self.k, str) and self.k != "auto":
            raise ValueError("k must be a positive integer or 'auto'")
        if isinstance(self.tau, str) and self.tau != "auto":
            raise ValueError("tau must be a number or 'auto'")
        if self.tau_grid is not None and len(self.tau_grid) == 0:
            raise ValueError("tau_grid must be nonempty")

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        if out["tau_grid"] is not None:
            out["tau_grid"] = [float(t) for t in out["tau_grid"]]
        return out


@dataclass(eq=False)
class PipelineReport:
    clusters: ClusterAssignment
    models: list
    coarse_models: list
    tau: float
    classification_labels: Optional[np.ndarray] = None
    similarity: Optional[SimilarityMatrix] = None
    statistics: Optional[StatisticTable] = None
    bank: Optional[SubspaceBank] = None
    permutation: Optional[list] = None
    a_errors: Optional[list] = None
    w_errors: Optional[list] = None
    clustering_error: Optional[float] = None
    classification_error: Optional[float] = None

    @property
    def k_hat(self) -> int:
        return self.clusters.k_hat

    def max_errors(self):
        if self.a_errors is None:
            return None
        return max(self.a_errors), max(self.w_errors)

    def to_dict(self) -> dict:
        out = {
            "k_hat": self.k_hat,
            "tau": self.tau,
            "cluster_labels": self.clusters.labels.tolist(),
            "classification_labels": None if self.classification_labels is None
            else self.classification_labels.tolist(),
            "models": [m.to_dict() for m in self.models],
            "coarse_models": [m.to_dict() for m in self.coarse_models],
        }
        if self.permutation is not None:
            out.update(
                permutation=list(self.permutation),
                a_errors=list(self.a_errors),
                w_errors=list(self.w_errors),
                clustering_error=self.clustering_error,
                classification_error=self.classification_error,
            )
        return out


def match_models(estimates: Sequence, truth: Sequence[LdsModel]):
    """Best matching of estimated to true models by summed Frobenius distance of ``a``.

    Returns ``(perm, a_errors, w_errors)`` where ``perm[k]`` is the true
    index matched to estimate ``k``, ``a_errors`` are spectral-norm errors and
    ``w_errors`` are relative spectral-norm errors.
    """
    est = [e.model if isinstance(e, ModelEstimate) else e for e in estimates]
    if len(est) != len(truth):
        raise SizeMismatch(f"{len(est)} estimates but {len(truth)} true models")
    if len(est) > MAX_MATCHED_MODELS:
        raise TooManyModels(f"brute-force matching is limited to {MAX_MATCHED_MODELS} models")
    cost = np.array([[np.linalg.norm(e.a - t.a) for t in truth] for e in est])
    k = len(est)
    best_perm, best_cost = None, np.inf
    for perm in itertools.permutations(range(k)):
        c = cost[np.arange(k), perm].sum()
        if c < best_cost:
            best_perm, best_cost = perm, c
    a_err = [float(np.linalg.norm(est[i].a - truth[p].a, 2)) for i, p in enumerate(best_perm)]
    w_err = [float(np.linalg.norm(est[i].w - truth[p].w, 2) / np.linalg.norm(truth[p].w, 2))
             for i, p in enumerate(best_perm)]
    return list(best_perm), a_err, w_err


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (MixLdsError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def _fit_clusters(groups, ridge):
    return [least_squares_estimate(ClusterData(members), ridge) for members in groups]


def estimate_bank(dataset: MixedDataset, config: PipelineConfig) -> Optional[SubspaceBank]:
    """Subspace bank for the clustering step, or ``None`` when reduction is off."""
    if not config.use_subspaces:
        return None
    source = dataset.subspace_set if config.sample_split else dataset.clustering_set
    if not source:
        raise MissingSubset("subspace estimation needs a nonempty subspace set "
                            "(or sample_split=False to reuse the clustering set)")
    # reused data: fit the bank on the quarters the clustering windows skip
    quarters = (1, 3) if config.sample_split else (0, 2)
    if config.k == "auto":
        return estimate_subspaces(source, 1, "energy", config.rank_energy, quarters)
    return estimate_subspaces(source, int(config.k), "fixed", quarters=quarters)


def cluster_trajectories(trajs: Sequence, config: PipelineConfig, bank: Optional[SubspaceBank],
                         workers: int = 1):
    """Returns ``(assignment, similarity, statistics, tau)`` for the clustering set."""
    if not trajs:
        raise MissingSubset("the clustering set is empty")
    if len(trajs) == 1:
        return ClusterAssignment(np.zeros(1, dtype=int), 1), None, None, 0.0
    table = statistic_table(trajs, bank, config.g, workers)
    if config.tau == "auto":
        tau, n_comp = auto_threshold(table=table, grid=config.tau_grid)
    else:
        tau, n_comp = float(config.tau), None
    sim = threshold(table, tau)
    if config.k == "auto":
        if n_comp is None:
            n_comp = int(_components(sim))
        k = n_comp
    else:
        k = min(int(config.k), len(trajs))
    return partition(sim, k), sim, table, tau


def _components(sim):
    return connected_components(sim.s, directed=False)[0]


def run_pipeline(dataset: MixedDataset, config: PipelineConfig,
                 truth: Optional[Sequence[LdsModel]] = None, workers: int = 1) -> PipelineReport:
    """Run both stages on ``dataset``.

    Ground truth for evaluation comes from ``truth`` or, failing that, from
    the dataset's generating spec.  Errors are reported only when the number
    of clusters equals the number of true models.
    """
    if truth is None and dataset.spec_echo is not None:
        truth = list(dataset.spec_echo.models)
    bank = _stage("subspace", estimate_bank, dataset, config)
    clusters, sim, table, tau = _stage("clustering", cluster_trajectories, dataset.clustering_set,
                                       config, bank, workers)
    logger.info("clustering produced %d clusters at tau=%.4g", clusters.k_hat, tau)

    groups = [[dataset.clustering_set[i] for i in clusters.members(c)] for c in range(clusters.k_hat)]
    coarse = _stage("estimation", _fit_clusters, groups, config.ridge)

    if config.refine and not dataset.classification_set:
        raise StageError("classification", MissingSubset("stage 2 requested but the classification set is empty"))
    cls_labels = None
    if dataset.classification_set and config.refine is not False:
        table_cls: LossTable = _stage("classification", classify, dataset.classification_set,
                                      [e.model for e in coarse], config.jitter)
        cls_labels = table_cls.argmin
        for tr, lab in zip(dataset.classification_set, cls_labels):
            groups[lab].append(tr)
        refined = _stage("refinement", _fit_clusters, groups, config.ridge)
    else:
        refined = list(coarse)

    report = PipelineReport(clusters, refined, coarse, tau, cls_labels, sim, table, bank)
    if truth is not None and len(truth) == clusters.k_hat:
        _evaluate(report, dataset, truth)
    return report


def _evaluate(report: PipelineReport, dataset: MixedDataset, truth):
    perm, a_err, w_err = match_models(report.models, truth)
    report.permutation, report.a_errors, report.w_errors = perm, a_err, w_err
    perm = np.asarray(perm)
    true_clu = [tr.label for tr in dataset.clustering_set]
    if all(lab is not None for lab in true_clu):
        report.clustering_error = float(np.mean(perm[report.clusters.labels] != np.asarray(true_clu)))
    if report.classification_labels is not None:
        true_cls = [tr.label for tr in dataset.classification_set]
        if all(lab is not None for lab in true_cls):
            report.classification_error = float(
                np.mean(perm[report.classification_labels] != np.asarray(true_cls)))
