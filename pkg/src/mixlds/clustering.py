"""Pairwise same-model tests and partitioning of short trajectories.

Two trajectories from the same model have equal stationary autocovariances,
so the inner product of their moment differences over two far-apart windows
estimates ``||gamma_k - gamma_l||_F^2`` (resp. ``||y_k - y_l||_F^2``) without
the squared-noise bias a single window would carry.  Projecting the moment
differences onto the subspace bank first cuts the variance from ``d^2`` to
``d * r`` terms.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components
from sklearn.cluster import KMeans

from .errors import DimensionMismatch, EmptyGrid, InvalidK, TooManyClusters
from .subspace import SegmentPlan, SubspaceBank, moment_matrices, stack_states

MAX_MATCHING_LABELS = 10


def lower_median(values, axis=-1):
    """Median taking the lower middle element for even counts; exact order statistic."""
    values = np.sort(np.asarray(values), axis=axis)
    n = values.shape[axis]
    return np.take(values, (n - 1) // 2, axis=axis)


@dataclass(frozen=True)
class PairStatistic:
    stat_gamma_median: float
    stat_y_median: float
    per_copy: np.ndarray  # (G, 2): columns are stat_gamma, stat_y

    @property
    def total(self) -> float:
        return self.stat_gamma_median + self.stat_y_median


@dataclass(frozen=True, eq=False)
class StatisticTable:
    """Median statistics for every pair; ``distance = median_gamma + median_y``."""

    median_gamma: np.ndarray
    median_y: np.ndarray
    g: int

    @property
    def distance(self) -> np.ndarray:
        return self.median_gamma + self.median_y

    @property
    def size(self) -> int:
        return self.median_gamma.shape[0]


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    s: np.ndarray
    tau: float
    g: int


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray  # 0-based, in [0, k_hat)
    k_hat: int

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)


def _features(states: np.ndarray, copies: int, bank: Optional[SubspaceBank]):
    """Projected moment features, shape ``(M, G, 2 windows, 2 kinds, F)``.

    Kind 0 holds ``V_i^T h_i`` and kind 1 holds ``U_i^T g_i`` stacked over
    ``i``; with ``bank=None`` the raw moment rows are used (no projection).
    """
    m, steps, d = states.shape
    plan = SegmentPlan.build(steps - 1, copies)
    width = d * d if bank is None else d * bank.r
    out = np.empty((m, copies, 2, 2, width))
    for c, windows in enumerate(plan.omega):
        for j, window in enumerate(windows):
            h, g = moment_matrices(states, window)
            if bank is None:
                out[:, c, j, 0] = h.reshape(m, -1)
                out[:, c, j, 1] = g.reshape(m, -1)
            else:
                # row i projected on V_i: einsum over the d-length row
                out[:, c, j, 0] = np.einsum("iar,mia->mir", bank.v, h).reshape(m, -1)
                out[:, c, j, 1] = np.einsum("iar,mia->mir", bank.u, g).reshape(m, -1)
    return out


def _check_bank(bank, d):
    if bank is not None and bank.dim != d:
        raise DimensionMismatch(f"bank dimension {bank.dim} does not match data dimension {d}")


def _pair_from_features(fm: np.ndarray, fn: np.ndarray) -> np.ndarray:
    diff = fm - fn
    # (G, kinds): <diff over window 1, diff over window 2>
    return np.einsum("...ck,...ck->...c", diff[..., 0, :, :], diff[..., 1, :, :])


def pair_statistic(traj_m, traj_n, bank: Optional[SubspaceBank] = None, g: int = 1) -> PairStatistic:
    """Median-of-``g`` test statistic between two trajectories.

    ``bank=None`` means no dimensionality reduction (all ``V_i = U_i = I``).
    Trajectories of different length are truncated to the shorter one.
    """
    if traj_m.dim != traj_n.dim:
        raise DimensionMismatch("trajectories differ in dimension")
    _check_bank(bank, traj_m.dim)
    length = min(traj_m.length, traj_n.length)
    states = stack_states([traj_m, traj_n], length)
    feats = _features(states, g, bank)
    per_copy = _pair_from_features(feats[0], feats[1])
    med = lower_median(per_copy, axis=0)
    return PairStatistic(float(med[0]), float(med[1]), per_copy)


def _rows_batch(feats, rows, stats):
    for m in rows:
        vals = _pair_from_features(feats[m], feats[m + 1:])
        stats[m, m + 1:] = vals
        stats[m + 1:, m] = vals


def statistic_table(trajectories: Sequence, bank: Optional[SubspaceBank] = None, g: int = 1,
                    workers: int = 1) -> StatisticTable:
    """Medians of the per-copy statistics for all unordered pairs.

    Each unordered pair is computed once and mirrored, and every entry is
    written by exactly one worker, so the table does not depend on ``workers``.
    """
    m = len(trajectories)
    if m < 1:
        raise ValueError("need at least one trajectory")
    d = trajectories[0].dim
    if any(tr.dim != d for tr in trajectories):
        raise DimensionMismatch("trajectories differ in dimension")
    _check_bank(bank, d)
    lengths = {tr.length for tr in trajectories}
    stats = np.zeros((m, m, g, 2))
    if len(lengths) == 1:
        feats = _features(stack_states(trajectories, lengths.pop()), g, bank)
        rows = list(range(m - 1))
        if workers > 1 and m > 2:
            chunks = [rows[i::workers] for i in range(workers)]
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(lambda r: _rows_batch(feats, r, stats), chunks))
        else:
            _rows_batch(feats, rows, stats)
    else:
        for a in range(m):
            for b in range(a + 1, m):
                vals = pair_statistic(trajectories[a], trajectories[b], bank, g).per_copy
                stats[a, b] = vals
                stats[b, a] = vals
    med = lower_median(stats, axis=2)
    return StatisticTable(med[..., 0], med[..., 1], g)


def threshold(table: StatisticTable, tau: float) -> SimilarityMatrix:
    if not np.isfinite(tau):
        raise ValueError("tau must be finite")
    s = (table.distance <= tau).astype(np.int8)
    np.fill_diagonal(s, 1)
    return SimilarityMatrix(s, float(tau), table.g)


def similarity_matrix(trajectories: Sequence, bank: Optional[SubspaceBank], tau: float, g: int = 1,
                      workers: int = 1) -> SimilarityMatrix:
    if len(trajectories) < 2:
        raise ValueError("need at least two trajectories")
    return threshold(statistic_table(trajectories, bank, g, workers), tau)


def _canonical_labels(labels) -> np.ndarray:
    """Relabel so clusters are numbered by first appearance."""
    mapping = {}
    out = np.empty(len(labels), dtype=int)
    for idx, lab in enumerate(labels):
        out[idx] = mapping.setdefault(lab, len(mapping))
    return out


def partition(sim: SimilarityMatrix, k: int) -> ClusterAssignment:
    """Split trajectories into ``k`` clusters from the similarity matrix.

    If the graph of ``S`` has exactly ``k`` connected components they are
    returned as is; otherwise normalized spectral clustering with seeded
    k-means (10 restarts, 100 iterations) is applied.
    """
    s = np.asarray(sim.s, dtype=float)
    m = s.shape[0]
    if not 1 <= k <= m:
        raise InvalidK(f"cannot form {k} clusters from {m} trajectories")
    if k == 1:
        return ClusterAssignment(np.zeros(m, dtype=int), 1)
    n_comp, comp = connected_components(s, directed=False)
    if n_comp == k:
        return ClusterAssignment(_canonical_labels(comp), k)
    deg = s.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    lap = inv_sqrt[:, None] * s * inv_sqrt[None, :]
    _, vecs = np.linalg.eigh(0.5 * (lap + lap.T))
    emb = vecs[:, -k:]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb = np.divide(emb, norms, out=np.zeros_like(emb), where=norms > 0)
    seed = int.from_bytes(hashlib.sha256(sim.s.astype(np.int8).tobytes()).digest()[:4], "little")
    km = KMeans(n_clusters=k, n_init=10, max_iter=100, random_state=seed).fit(emb)
    labels = _canonical_labels(km.labels_)
    return ClusterAssignment(labels, int(labels.max()) + 1)


def component_counts(table: StatisticTable, grid: Sequence[float]) -> list:
    return [connected_components(threshold(table, t).s, directed=False)[0] for t in grid]


def merge_height(table: StatisticTable) -> float:
    """Smallest ``tau`` at which ``S(tau)`` is connected (the last single-linkage merge)."""
    dist = table.distance
    m = dist.shape[0]
    if m < 2:
        return 0.0
    cand = np.unique(dist[np.triu_indices(m, 1)])
    lo, hi = 0, len(cand) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if connected_components(threshold(table, cand[mid]).s, directed=False)[0] == 1:
            hi = mid
        else:
            lo = mid + 1
    return float(cand[lo])


def default_tau_grid(table: StatisticTable, points: int = 64, headroom: float = 1.5) -> np.ndarray:
    """Evenly spaced candidates from 0 to ``headroom`` times the merge height.

    Stopping near the merge height keeps the trivial one-block region from
    dominating the plateau search; the headroom still lets a single-model
    dataset show a one-block plateau.
    """
    top = headroom * merge_height(table)
    if top <= 0:
        dist = table.distance
        off = dist[~np.eye(dist.shape[0], dtype=bool)]
        top = float(off.max()) if off.size and off.max() > 0 else 1.0
    return np.linspace(0.0, top, points)


def auto_threshold(trajectories: Sequence = None, bank: Optional[SubspaceBank] = None, g: int = 1,
                   grid: Optional[Sequence[float]] = None, table: Optional[StatisticTable] = None,
                   workers: int = 1):
    """Choose ``tau`` and the number of clusters from the component-count plateau.

    Statistics are computed once; for each grid value the connected
    components of ``S(tau)`` are counted.  The widest run of grid points
    with an unchanged count wins (ties go to the smaller count), and the
    middle grid point of that run is returned with its count.
    """
    if table is None:
        table = statistic_table(trajectories, bank, g, workers)
    if grid is None:
        grid = default_tau_grid(table)
    grid = np.sort(np.asarray(list(grid), dtype=float))
    if grid.size == 0:
        raise EmptyGrid("threshold grid is empty")
    counts = component_counts(table, grid)
    best = None  # (width, -count, start)
    start = 0
    for idx in range(1, len(counts) + 1):
        if idx == len(counts) or counts[idx] != counts[start]:
            key = (idx - start, -counts[start])
            if best is None or key > best[0]:
                best = (key, start, idx)
            start = idx
    _, lo, hi = best
    mid = lo + (hi - lo - 1) // 2
    return float(grid[mid]), int(counts[lo])


def clustering_error(assignment, truth) -> float:
    """Fraction of trajectories mislabelled under the best label matching."""
    pred = np.asarray(getattr(assignment, "labels", assignment), dtype=int)
    truth = np.asarray(truth, dtype=int)
    if pred.shape != truth.shape:
        raise ValueError("assignment and truth must have equal length")
    if pred.size == 0:
        return 0.0
    _, pred_idx = np.unique(pred, return_inverse=True)
    _, true_idx = np.unique(truth, return_inverse=True)
    n_pred = pred_idx.max() + 1
    if n_pred > MAX_MATCHING_LABELS:
        raise TooManyClusters(f"{n_pred} clusters exceed the matching limit of {MAX_MATCHING_LABELS}")
    confusion = np.zeros((n_pred, true_idx.max() + 1), dtype=int)
    np.add.at(confusion, (pred_idx, true_idx), 1)
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    return 1.0 - confusion[rows, cols].sum() / pred.size
