"""Per-cluster least squares for the transition matrix and residual covariance."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DimensionMismatch, EmptyInput, SingularNormalMatrix
from .lds_core import LdsModel, symmetrize

SINGULAR_RATIO = 1e-12


@dataclass(frozen=True)
class ClusterData:
    members: tuple

    def __init__(self, members: Sequence):
        object.__setattr__(self, "members", tuple(members))

    @property
    def total_steps(self) -> int:
        return sum(tr.length for tr in self.members)


@dataclass(frozen=True, eq=False)
class ModelEstimate:
    model: LdsModel
    normal_matrix_min_eig: float
    steps_used: int

    def to_dict(self) -> dict:
        out = self.model.to_dict()
        out.update(min_eig=self.normal_matrix_min_eig, steps=self.steps_used)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelEstimate":
        return cls(LdsModel.from_dict(obj), float(obj["min_eig"]), int(obj["steps"]))


def _pairs(members):
    d = members[0].dim
    if any(tr.dim != d for tr in members):
        raise DimensionMismatch("cluster members differ in dimension")
    cur = np.concatenate([tr.states[:-1] for tr in members])
    nxt = np.concatenate([tr.states[1:] for tr in members])
    return cur, nxt


def least_squares_estimate(cluster, ridge: float = 0.0) -> ModelEstimate:
    """Ordinary least squares ``a = (sum x+ x^T)(sum x x^T + ridge I)^-1``.

    ``w`` is the average outer product of the residuals over all member steps.
    """
    members = cluster.members if isinstance(cluster, ClusterData) else tuple(cluster)
    if not members:
        raise EmptyInput("cluster has no trajectories")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    cur, nxt = _pairs(members)
    d = cur.shape[1]
    sxx = symmetrize(cur.T @ cur)
    syx = nxt.T @ cur
    eig = np.linalg.eigvalsh(sxx)
    if ridge == 0 and (eig[-1] <= 0 or eig[0] < SINGULAR_RATIO * eig[-1]):
        raise SingularNormalMatrix(
            f"normal matrix is singular (eigenvalues {eig[0]:.3g}..{eig[-1]:.3g}, {cur.shape[0]} steps, d={d})")
    try:
        factor = cho_factor(sxx + ridge * np.eye(d), lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularNormalMatrix(str(exc)) from exc
    a = cho_solve(factor, syx.T).T
    res = nxt - cur @ a.T
    w = symmetrize(res.T @ res / cur.shape[0])
    return ModelEstimate(LdsModel(a, w), float(eig[0]), int(cur.shape[0]))


def residuals(cluster, model: LdsModel) -> np.ndarray:
    """Stacked residuals ``x[t+1] - a x[t]``, trajectory-major then time."""
    members = cluster.members if isinstance(cluster, ClusterData) else tuple(cluster)
    if not members:
        return np.empty((0, model.dim))
    cur, nxt = _pairs(members)
    if cur.shape[1] != model.dim:
        raise DimensionMismatch(f"data dimension {cur.shape[1]} does not match model dimension {model.dim}")
    return nxt - cur @ model.a.T
