"""Linear dynamical system models and their stationary autocovariances.

A model is the pair ``(a, w)`` driving ``x[t+1] = a @ x[t] + noise`` with
``noise ~ (0, w)``.  When ``a`` is stable the process has an order-0
stationary autocovariance ``gamma = E[x x^T]`` solving the discrete Lyapunov
equation ``gamma = a gamma a^T + w`` and an order-1 autocovariance
``y = E[x[t+1] x[t]^T] = a gamma``.  The map ``(a, w) -> (gamma, y)`` is
invertible, which is what makes pairwise comparison of autocovariances a
valid same-model test.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NoConvergence,
    NonPsdResidual,
    SingularGamma,
    UnstableModel,
)

STABILITY_MARGIN = 1e-9
MAX_DOUBLINGS = 200
MAX_GAMMA_CONDITION = 1e12


def symmetrize(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.T)


def spectral_radius(a) -> float:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


@dataclass(frozen=True, eq=False)
class LdsModel:
    """One linear dynamical system: transition ``a`` and noise covariance ``w``.

    Construction checks shapes and symmetry of ``w``.  Positive definiteness
    and stability are checked by the operations that need them, since
    estimated models (e.g. from noiseless data) may legitimately carry a
    singular ``w``.
    """

    a: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        w = np.array(self.w, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"a must be square, got shape {a.shape}")
        if w.shape != a.shape:
            raise DimensionMismatch(f"w has shape {w.shape}, expected {a.shape}")
        scale = np.max(np.abs(w)) if w.size else 0.0
        if np.max(np.abs(w - w.T), initial=0.0) > 1e-10 * scale:
            raise ValueError("w must be symmetric")
        a.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @cached_property
    def gamma(self) -> np.ndarray:
        g = stationary_covariance(self)
        g.setflags(write=False)
        return g

    @cached_property
    def y(self) -> np.ndarray:
        y = order1_autocovariance(self, self.gamma)
        y.setflags(write=False)
        return y

    def is_stable(self) -> bool:
        return spectral_radius(self.a) < 1.0 - STABILITY_MARGIN

    def to_dict(self) -> dict:
        return {"a": self.a.tolist(), "w": self.w.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "LdsModel":
        return cls(np.asarray(obj["a"], dtype=float), np.asarray(obj["w"], dtype=float))

    def __repr__(self):
        return f"LdsModel(dim={self.dim}, rho={spectral_radius(self.a):.4g})"


@dataclass(frozen=True)
class Autocovariances:
    gamma: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class SeparationReport:
    d_gamma_y: float
    d_aw: float
    w_max: float
    w_min: float
    gamma_max: float
    rho_hat: float
    d_gamma_y_canonical: float
    d_aw_canonical: float

    def default_tau(self) -> float:
        """Centre of the admissible threshold window ``(1/8, 3/8) * d_gamma_y**2``."""
        return self.d_gamma_y**2 / 4.0


def stationary_covariance(model: LdsModel, tol: float = 1e-15,
                          max_doublings: int = MAX_DOUBLINGS) -> np.ndarray:
    """Solve ``gamma = a gamma a^T + w`` by the squaring (doubling) iteration.

    After ``n`` doublings ``gamma`` holds the first ``2**n`` terms of
    ``sum_t a^t w (a^t)^T``.  Iteration stops once the increment is below
    ``tol * ||gamma||_F``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rho = spectral_radius(model.a)
    if rho >= 1.0 - STABILITY_MARGIN:
        raise UnstableModel(f"spectral radius {rho:.12g} is not below 1")
    a_pow = model.a.copy()
    gamma = symmetrize(model.w.copy())
    for _ in range(max_doublings):
        inc = a_pow @ gamma @ a_pow.T
        gamma = gamma + inc
        if np.linalg.norm(inc) <= tol * np.linalg.norm(gamma):
            return symmetrize(gamma)
        a_pow = a_pow @ a_pow
    raise NoConvergence(f"Lyapunov doubling did not converge in {max_doublings} steps")


def order1_autocovariance(model: LdsModel, gamma) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != model.a.shape:
        raise DimensionMismatch(f"gamma has shape {gamma.shape}, expected {model.a.shape}")
    return model.a @ gamma


def autocovariances(model: LdsModel) -> Autocovariances:
    return Autocovariances(model.gamma, model.y)


def recover_model(gamma, y) -> LdsModel:
    """Invert the autocovariance map: ``a = y gamma^-1``, ``w = gamma - a gamma a^T``."""
    gamma = symmetrize(np.asarray(gamma, dtype=float))
    y = np.asarray(y, dtype=float)
    if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1] or y.shape != gamma.shape:
        raise DimensionMismatch(f"gamma {gamma.shape} and y {y.shape} must be equal square shapes")
    eig = np.linalg.eigvalsh(gamma)
    if eig[0] <= 0 or eig[-1] / eig[0] > MAX_GAMMA_CONDITION:
        raise SingularGamma(f"gamma eigenvalue range [{eig[0]:.3g}, {eig[-1]:.3g}] is ill-conditioned")
    # gamma is symmetric so y gamma^-1 = (gamma^-1 y^T)^T
    a = np.linalg.solve(gamma, y.T).T
    w = symmetrize(gamma - a @ gamma @ a.T)
    w_min = np.linalg.eigvalsh(w)[0]
    if w_min < -1e-8 * np.linalg.norm(gamma, 2):
        raise NonPsdResidual(f"recovered w has eigenvalue {w_min:.3g}; inputs are inconsistent")
    return LdsModel(a, w)


def separation_report(models: Sequence[LdsModel]) -> SeparationReport:
    if len(models) < 2:
        raise ValueError("separation needs at least two models")
    d = models[0].dim
    if any(m.dim != d for m in models):
        raise DimensionMismatch("all models must share one state dimension")
    w_eigs = [np.linalg.eigvalsh(m.w) for m in models]
    w_max = max(e[-1] for e in w_eigs)
    w_min = min(e[0] for e in w_eigs)
    gamma_max = max(np.linalg.eigvalsh(m.gamma)[-1] for m in models)
    rho_hat = max(spectral_radius(m.a) for m in models)

    d_gy = np.inf
    d_aw = np.inf
    for p, q in combinations(models, 2):
        gy = np.sqrt(np.sum((p.gamma - q.gamma) ** 2) + np.sum((p.y - q.y) ** 2))
        aw = np.sqrt(np.sum((p.a - q.a) ** 2) + np.sum((p.w - q.w) ** 2) / w_max**2)
        d_gy = min(d_gy, gy)
        d_aw = min(d_aw, aw)
    root_d = np.sqrt(d)
    return SeparationReport(
        d_gamma_y=float(d_gy),
        d_aw=float(d_aw),
        w_max=float(w_max),
        w_min=float(w_min),
        gamma_max=float(gamma_max),
        rho_hat=float(rho_hat),
        d_gamma_y_canonical=float(d_gy / root_d),
        d_aw_canonical=float(d_aw / root_d),
    )
