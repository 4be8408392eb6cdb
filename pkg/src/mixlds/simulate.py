"""Ground-truth mixtures of LDS models and seeded trajectory datasets."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidRho, TooShort, UnstableModel
from .lds_core import Autocovariances, LdsModel, symmetrize

SUBSETS = ("subspace", "clustering", "classification")

# spawn-key prefixes for independent random streams derived from one seed
_LABEL_STREAM = 0
_NOISE_STREAM = 1


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``x[0..T]`` of one short trajectory, shape ``(T + 1, d)``."""

    states: np.ndarray
    label: Optional[int] = None
    index: int = 0
    subset: Optional[str] = None

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        if states.ndim != 2:
            raise DimensionMismatch(f"states must be 2-D (T+1, d), got shape {states.shape}")
        if states.shape[0] < 2:
            raise TooShort("a trajectory needs at least two states")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @property
    def length(self) -> int:
        """Number of transitions T (one less than the number of states)."""
        return self.states.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def truncated(self, length: int) -> "Trajectory":
        if length == self.length:
            return self
        return Trajectory(self.states[: length + 1], self.label, self.index, self.subset)


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    """Everything needed to regenerate a mixed-LDS dataset bit for bit.

    Labels come from ``labels`` (one per trajectory, in global order
    subspace -> clustering -> classification) when given, else from
    ``fractions`` (exact per-subset counts, shuffled), else uniformly at random.
    """

    models: Sequence[LdsModel]
    n_subspace: int
    n_clustering: int
    n_classification: int
    t_subspace: int
    t_clustering: int
    t_classification: int
    init_mode: str = "case0"
    labels: Optional[Sequence[int]] = None
    fractions: Optional[Sequence[float]] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if not self.models:
            raise ValueError("need at least one model")
        if self.init_mode not in ("case0", "case1"):
            raise ValueError(f"init_mode must be 'case0' or 'case1', got {self.init_mode!r}")
        for n in self.counts:
            if n < 0:
                raise ValueError("subset sizes must be nonnegative")
        for n, t in zip(self.counts, self.lengths):
            if n and t < 1:
                raise TooShort("trajectory lengths must be at least 1")
        if self.fractions is not None:
            p = np.asarray(self.fractions, dtype=float)
            if p.shape != (len(self.models),) or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
                raise ValueError("fractions must be a nonnegative vector of length K summing to 1")
        if self.labels is not None:
            if len(self.labels) != sum(self.counts):
                raise ValueError("fixed label list must have one entry per trajectory")
            if any(not 0 <= k < len(self.models) for k in self.labels):
                raise ValueError("fixed labels must lie in [0, K)")

    @property
    def counts(self):
        return (self.n_subspace, self.n_clustering, self.n_classification)

    @property
    def lengths(self):
        return (self.t_subspace, self.t_clustering, self.t_classification)

    @property
    def k(self) -> int:
        return len(self.models)

    @property
    def dim(self) -> int:
        return self.models[0].dim


@dataclass(eq=False)
class MixedDataset:
    subspace_set: list = field(default_factory=list)
    clustering_set: list = field(default_factory=list)
    classification_set: list = field(default_factory=list)
    spec_echo: Optional[MixtureSpec] = None

    def subset(self, name: str) -> list:
        return getattr(self, f"{name}_set")

    def all_trajectories(self) -> list:
        return sorted(self.subspace_set + self.clustering_set + self.classification_set,
                      key=lambda tr: tr.index)


def haar_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix via QR with sign-corrected R diagonal."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def generate_models(d: int, k: int, rho: float, construction: str = "orthogonal_rotation",
                          delta: float = 0.0, seed: int = 0) -> list:
    """Random ground-truth models.

    ``orthogonal_rotation``: ``a_k = rho * R_k`` with independent Haar ``R_k``
    and ``w_k = U_k diag(lambda) U_k^T``, ``lambda ~ U[1, 2]`` i.i.d.

    ``identity_perturbation``: a shared Haar ``R`` scaled by ``rho - delta``
    and ``rho + delta`` (K=2; for larger K the scales are evenly spaced over
    ``[rho - delta, rho + delta]``), all with ``w = I``.
    """
    if not 0 <= rho < 1:
        raise InvalidRho(f"rho must lie in [0, 1), got {rho}")
    if d < 1 or k < 1:
        raise ValueError("d and k must be positive")
    rng = np.random.default_rng(seed)
    models = []
    if construction == "orthogonal_rotation":
        for _ in range(k):
            a = rho * haar_orthogonal(d, rng)
            u = haar_orthogonal(d, rng)
            lam = rng.uniform(1.0, 2.0, size=d)
            models.append(LdsModel(a, symmetrize((u * lam) @ u.T)))
    elif construction == "identity_perturbation":
        scales = np.array([rho]) if k == 1 else np.linspace(rho - delta, rho + delta, k)
        if scales.min() < 0 or scales.max() >= 1:
            raise InvalidRho(f"scales {scales.min():.3g}..{scales.max():.3g} leave [0, 1)")
        r = haar_orthogonal(d, rng)
        models = [LdsModel(s * r, np.eye(d)) for s in scales]
    else:
        raise ValueError(f"unknown construction {construction!r}")
    return models


def _draw_labels(spec: MixtureSpec) -> list:
    if spec.labels is not None:
        flat = list(spec.labels)
        out, start = [], 0
        for n in spec.counts:
            out.append(np.asarray(flat[start:start + n], dtype=int))
            start += n
        return out
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(_LABEL_STREAM,)))
    out = []
    for n in spec.counts:
        if spec.fractions is None:
            out.append(rng.integers(0, spec.k, size=n))
            continue
        # largest-remainder rounding keeps every count within one of n * p
        exact = np.asarray(spec.fractions) * n
        counts = np.floor(exact).astype(int)
        short = n - counts.sum()
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[:short]] += 1
        labels = np.repeat(np.arange(spec.k), counts)
        out.append(rng.permutation(labels))
    return out


def trajectory_noise(seed: int, index: int, length: int, d: int) -> np.ndarray:
    """Standard normal noise for trajectory ``index``, independent of generation order."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_NOISE_STREAM, index)))
    return rng.standard_normal((length, d))


def _roll(a, chol_w, x0, z):
    states = np.empty((z.shape[0] + 1, x0.shape[0]))
    states[0] = x0
    noise = z @ chol_w.T
    x = x0
    for t in range(z.shape[0]):
        x = a @ x + noise[t]
        states[t + 1] = x
    return states


def simulate_dataset(spec: MixtureSpec) -> MixedDataset:
    """Generate the three disjoint subsets described by ``spec``.

    Trajectory indices run globally over subspace, clustering and
    classification subsets in that order.  Under ``case1`` that order is also
    the stitching order: each trajectory starts where the previous one ended.
    """
    d = spec.dim
    for mdl in spec.models:
        if mdl.dim != d:
            raise DimensionMismatch("all models must share one state dimension")
        if not mdl.is_stable():
            raise UnstableModel("every generating model must be stable")
    chol = [np.linalg.cholesky(mdl.w) for mdl in spec.models]
    labels = _draw_labels(spec)

    sets = {name: [] for name in SUBSETS}
    x_prev = np.zeros(d)
    index = 0
    for name, n, length, lab in zip(SUBSETS, spec.counts, spec.lengths, labels):
        for j in range(n):
            k = int(lab[j])
            z = trajectory_noise(spec.seed, index, length, d)
            x0 = x_prev if spec.init_mode == "case1" else np.zeros(d)
            states = _roll(spec.models[k].a, chol[k], x0, z)
            x_prev = states[-1]
            sets[name].append(Trajectory(states, k, index, name))
            index += 1
    return MixedDataset(sets["subspace"], sets["clustering"], sets["classification"], spec)


def simulate_trajectory(model: LdsModel, length: int, seed: int = 0, x0=None, index: int = 0) -> Trajectory:
    """One trajectory of ``model``; same noise stream as ``simulate_dataset`` uses for ``index``."""
    if not model.is_stable():
        raise UnstableModel("model must be stable")
    d = model.dim
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    z = trajectory_noise(seed, index, length, d)
    return Trajectory(_roll(model.a, np.linalg.cholesky(model.w), x0, z), 0, index)


def empirical_autocov(traj: Trajectory, burn_in: int = 0) -> Autocovariances:
    """Time averages of ``x x^T`` and ``x[t+1] x[t]^T`` over ``t > burn_in``."""
    x = traj.states
    if traj.length <= burn_in + 2:
        raise TooShort(f"trajectory of length {traj.length} is too short for burn-in {burn_in}")
    cur = x[burn_in + 1:-1]
    nxt = x[burn_in + 2:]
    n = cur.shape[0]
    return Autocovariances(symmetrize(cur.T @ cur / n), nxt.T @ cur / n)
