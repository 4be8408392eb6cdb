"""Assign trajectories to candidate models by a Gaussian likelihood loss."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, InvalidPermutation, SingularW
from .lds_core import LdsModel


@dataclass(frozen=True, eq=False)
class LossTable:
    losses: np.ndarray  # (M, K)
    argmin: np.ndarray  # (M,), ties -> smallest model index


def _chol_w(w: np.ndarray, jitter: float = 0.0) -> np.ndarray:
    w = w + jitter * np.eye(w.shape[0]) if jitter else w
    eig = np.linalg.eigvalsh(w)
    if eig[-1] <= 0 or eig[0] <= 1e-12 * eig[-1]:
        raise SingularW(f"noise covariance is not positive definite (eigenvalues {eig[0]:.3g}..{eig[-1]:.3g})")
    return np.linalg.cholesky(w)


def _losses_for_block(states: np.ndarray, model: LdsModel, chol: np.ndarray) -> np.ndarray:
    """Loss of each trajectory in a same-length block ``(M, T + 1, d)``."""
    length = states.shape[1] - 1
    res = states[:, 1:] - states[:, :-1] @ model.a.T
    flat = res.reshape(-1, res.shape[-1])
    z = solve_triangular(chol, flat.T, lower=True)
    quad = np.sum(z * z, axis=0).reshape(res.shape[0], length)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return length * logdet + quad.sum(axis=1)


def trajectory_loss(traj, model: LdsModel, jitter: float = 0.0) -> float:
    """``T log det W + sum_t r_t^T W^-1 r_t`` with ``r_t = x[t+1] - A x[t]``."""
    if traj.dim != model.dim:
        raise DimensionMismatch(f"trajectory dimension {traj.dim} does not match model dimension {model.dim}")
    chol = _chol_w(model.w, jitter)
    return float(_losses_for_block(traj.states[None], model, chol)[0])


def classify(trajectories: Sequence, models: Sequence[LdsModel], jitter: float = 0.0) -> LossTable:
    if not models:
        raise ValueError("need at least one candidate model")
    d = models[0].dim
    if any(tr.dim != d for tr in trajectories) or any(mdl.dim != d for mdl in models):
        raise DimensionMismatch("trajectories and models must share one dimension")
    chols = [_chol_w(mdl.w, jitter) for mdl in models]
    losses = np.empty((len(trajectories), len(models)))
    by_length = {}
    for idx, tr in enumerate(trajectories):
        by_length.setdefault(tr.length, []).append(idx)
    for idxs in by_length.values():
        block = np.stack([trajectories[i].states for i in idxs])
        for k, (mdl, chol) in enumerate(zip(models, chols)):
            losses[idxs, k] = _losses_for_block(block, mdl, chol)
    argmin = np.argmin(losses, axis=1) if len(trajectories) else np.empty(0, dtype=int)
    return LossTable(losses, argmin.astype(int))


def classification_error(table, truth, permutation=None) -> float:
    """Fraction of trajectories with ``permutation[argmin] != truth``."""
    pred = np.asarray(table.argmin if isinstance(table, LossTable) else table, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if pred.shape != truth.shape:
        raise ValueError("predictions and truth must have equal length")
    if permutation is None:
        k = int(max(pred.max(initial=-1), truth.max(initial=-1))) + 1
        permutation = list(range(k))
    perm = np.asarray(permutation, dtype=int)
    if sorted(perm.tolist()) != list(range(len(perm))):
        raise InvalidPermutation(f"{perm.tolist()} is not a permutation of 0..{len(perm) - 1}")
    if pred.size and pred.max() >= len(perm):
        raise InvalidPermutation("permutation does not cover every predicted label")
    if pred.size == 0:
        return 0.0
    return float(np.mean(perm[pred] != truth))
