"""Spectral estimation of the per-coordinate autocovariance row subspaces.

For each coordinate ``i`` the i-th rows of the K stationary autocovariances
``gamma_k`` (resp. ``y_k``) span a subspace of dimension at most K.  Moment
vectors from two well-separated segments of each trajectory give a nearly
unbiased estimate of ``sum_k p_k gamma_k[i] gamma_k[i]^T`` whose top
eigenspace recovers that span.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput, IndexOutOfRange, TooShort
from .lds_core import LdsModel


@dataclass(frozen=True)
class SegmentPlan:
    """Segment length ``n`` and the index windows ``[(omega_1, omega_2), ...]``.

    With ``g`` copies the transitions ``0..T-1`` are cut into ``4g`` blocks of
    ``n = T // (4g)`` steps; copy ``c`` uses blocks ``4c+1`` and ``4c+3``
    (0-based), so two blocks of burn-in/spacing separate every window.
    """

    n: int
    omega: tuple

    @classmethod
    def build(cls, length: int, copies: int = 1) -> "SegmentPlan":
        if copies < 1:
            raise ValueError("copies must be at least 1")
        n = length // (4 * copies)
        if n < 1:
            raise TooShort(f"length {length} is too short for {copies} copies (need >= {4 * copies})")
        omega = tuple(
            (range((4 * c + 1) * n, (4 * c + 2) * n), range((4 * c + 3) * n, (4 * c + 4) * n))
            for c in range(copies)
        )
        return cls(n, omega)


@dataclass(frozen=True, eq=False)
class SubspaceBank:
    """Orthonormal bases ``v[i]`` (order-0) and ``u[i]`` (order-1), stacked as ``(d, d, r)``."""

    v: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        u = np.array(self.u, dtype=float)
        if v.ndim != 3 or v.shape != u.shape or v.shape[0] != v.shape[1]:
            raise DimensionMismatch(f"v {v.shape} and u {u.shape} must both be (d, d, r)")
        if v.shape[2] > v.shape[0]:
            raise ValueError("rank cannot exceed the dimension")
        v.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "u", u)

    @property
    def dim(self) -> int:
        return self.v.shape[0]

    @property
    def r(self) -> int:
        return self.v.shape[2]

    @classmethod
    def identity(cls, d: int) -> "SubspaceBank":
        eye = np.broadcast_to(np.eye(d), (d, d, d))
        return cls(eye, eye)

    def projector_v(self, i: int) -> np.ndarray:
        return self.v[i] @ self.v[i].T

    def projector_u(self, i: int) -> np.ndarray:
        return self.u[i] @ self.u[i].T

    def to_dict(self) -> dict:
        return {"r": self.r, "v": [m.tolist() for m in self.v], "u": [m.tolist() for m in self.u]}

    @classmethod
    def from_dict(cls, obj: dict) -> "SubspaceBank":
        bank = cls(np.asarray(obj["v"], dtype=float), np.asarray(obj["u"], dtype=float))
        if bank.r != obj.get("r", bank.r):
            raise DimensionMismatch("stored rank disagrees with the basis shape")
        return bank


def segment_moments(traj, omega, i: int):
    """Moment vectors over the window ``omega`` for coordinate ``i`` (0-based).

    ``h = mean_t x[t][i] * x[t]`` and ``g = mean_t x[t+1][i] * x[t]``.
    """
    states = traj.states if hasattr(traj, "states") else np.asarray(traj, dtype=float)
    idx = np.asarray(list(omega), dtype=int)
    length = states.shape[0] - 1
    if idx.size == 0:
        raise ValueError("omega must be nonempty")
    if idx.min() < 0 or idx.max() + 1 > length:
        raise IndexOutOfRange(f"omega must lie in [0, {length - 1}]")
    if not 0 <= i < states.shape[1]:
        raise IndexOutOfRange(f"coordinate {i} outside [0, {states.shape[1] - 1}]")
    x = states[idx]
    x_next = states[idx + 1]
    h = (x[:, i] @ x) / idx.size
    g = (x_next[:, i] @ x) / idx.size
    return h, g


def stack_states(trajectories: Sequence, length: int) -> np.ndarray:
    """``(M, length + 1, d)`` array of states, each trajectory truncated to ``length``."""
    return np.stack([tr.states[: length + 1] for tr in trajectories])


def moment_matrices(states: np.ndarray, window: range):
    """Batched moment matrices over one window.

    ``states`` is ``(M, T + 1, d)``; returns ``(H, G)`` of shape ``(M, d, d)``
    whose row ``i`` is the moment vector ``h_i`` (resp. ``g_i``).
    """
    x = states[:, window.start:window.stop]
    x_next = states[:, window.start + 1:window.stop + 1]
    n = len(window)
    h = np.matmul(x.transpose(0, 2, 1), x) / n
    g = np.matmul(x_next.transpose(0, 2, 1), x) / n
    return h, g


def _top_eigenspace(mats: np.ndarray, r: int, by_abs: bool) -> np.ndarray:
    """Top-``r`` eigenvectors of each symmetric matrix in ``mats`` (shape (d, d, d))."""
    d = mats.shape[-1]
    if r == d:
        return np.broadcast_to(np.eye(d), mats.shape).copy()
    vals, vecs = np.linalg.eigh(mats)
    out = np.empty((mats.shape[0], d, r))
    for i in range(mats.shape[0]):
        if not np.any(mats[i]):
            out[i] = np.eye(d)[:, :r]
            continue
        order = np.argsort(-np.abs(vals[i]) if by_abs else -vals[i], kind="stable")[:r]
        out[i] = vecs[i][:, order]
    return out


def _energy_rank(mats: np.ndarray, threshold: float) -> int:
    vals = np.abs(np.linalg.eigvalsh(mats))
    best = 1
    for v in vals:
        total = v.sum()
        if total == 0:
            continue
        mass = np.cumsum(np.sort(v)[::-1]) / total
        best = max(best, int(np.searchsorted(mass, threshold - 1e-12) + 1))
    return min(best, mats.shape[-1])


def second_moment_matrices(trajectories: Sequence, quarters=(1, 3)):
    """The symmetrised ``(H_i + H_i^T, G_i + G_i^T)`` stacks, each of shape ``(d, d, d)``.

    ``quarters`` selects which two of the four equal segments of ``0..T-1``
    pair up; the default is the 2nd and 4th.
    """
    if not trajectories:
        raise EmptyInput("no trajectories for subspace estimation")
    d = trajectories[0].dim
    if any(tr.dim != d for tr in trajectories):
        raise DimensionMismatch("trajectories differ in dimension")
    length = min(tr.length for tr in trajectories)
    n = SegmentPlan.build(length, 1).n
    q1, q2 = quarters
    if not 0 <= q1 < q2 <= 3:
        raise ValueError("quarters must be two increasing indices in 0..3")
    states = stack_states(trajectories, length)
    w1, w2 = range(q1 * n, (q1 + 1) * n), range(q2 * n, (q2 + 1) * n)
    h1, g1 = moment_matrices(states, w1)
    h2, g2 = moment_matrices(states, w2)
    m = len(trajectories)
    # hat_h[i] = mean_m h1[m, i] h2[m, i]^T
    hat_h = np.matmul(h1.transpose(1, 2, 0), h2.transpose(1, 0, 2)) / m
    hat_g = np.matmul(g1.transpose(1, 2, 0), g2.transpose(1, 0, 2)) / m
    return hat_h + hat_h.transpose(0, 2, 1), hat_g + hat_g.transpose(0, 2, 1)


def estimate_subspaces(trajectories: Sequence, k: int, rank_rule: str = "fixed",
                       energy: float = 0.9, quarters=(1, 3)) -> SubspaceBank:
    """Estimate ``{V_i, U_i}`` from trajectories.

    ``rank_rule="fixed"`` keeps the ``k`` largest (signed) eigenvalues.
    ``rank_rule="energy"`` picks the smallest rank whose leading absolute
    eigenvalues carry at least ``energy`` of the absolute spectrum, taking the
    maximum over all 2d matrices so one rank serves the whole bank.
    Trajectories of unequal length are truncated to the shortest.

    When the same trajectories are later clustered, pass ``quarters=(0, 2)``:
    the clustering windows use the 2nd and 4th quarters, and a bank fitted
    on those same samples biases every projected same-model statistic upward.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    sym_h, sym_g = second_moment_matrices(trajectories, quarters)
    d = sym_h.shape[-1]
    if rank_rule == "fixed":
        r = min(k, d)
        by_abs = False
    elif rank_rule == "energy":
        r = max(_energy_rank(sym_h, energy), _energy_rank(sym_g, energy))
        by_abs = True
    else:
        raise ValueError(f"unknown rank rule {rank_rule!r}")
    return SubspaceBank(_top_eigenspace(sym_h, r, by_abs), _top_eigenspace(sym_g, r, by_abs))


def projection_residual(bank: SubspaceBank, models: Sequence[LdsModel]):
    """Worst row residual of the models' autocovariances off the bank.

    Returns ``(worst, table)`` where ``table[k, i]`` holds
    ``max(||(I - V_i V_i^T) gamma_k[i]||, ||(I - U_i U_i^T) y_k[i]||)``.
    """
    d = bank.dim
    table = np.empty((len(models), d))
    for k, mdl in enumerate(models):
        if mdl.dim != d:
            raise DimensionMismatch(f"model dimension {mdl.dim} does not match bank dimension {d}")
        for i in range(d):
            rg = mdl.gamma[i] - bank.v[i] @ (bank.v[i].T @ mdl.gamma[i])
            ry = mdl.y[i] - bank.u[i] @ (bank.u[i].T @ mdl.y[i])
            table[k, i] = max(np.linalg.norm(rg), np.linalg.norm(ry))
    return float(table.max()), table
