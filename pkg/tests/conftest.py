import numpy as np
import pytest

from mixlds.lds_core import LdsModel
from mixlds.simulate import Trajectory, haar_orthogonal


def random_stable_model(rng, d, rho=None):
    """Random model with spectral radius ``rho`` (uniform in [0.1, 0.9] if None) and PD noise."""
    rho = rng.uniform(0.1, 0.9) if rho is None else rho
    a = rng.standard_normal((d, d))
    radius = np.max(np.abs(np.linalg.eigvals(a)))
    a = a * (rho / radius) if radius > 0 else a
    b = rng.standard_normal((d, d))
    w = b @ b.T / d + 0.5 * np.eye(d)
    return LdsModel(a, 0.5 * (w + w.T))


def traj(states, label=None, index=0):
    return Trajectory(np.asarray(states, dtype=float), label, index)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_far_models():
    r = haar_orthogonal(3, np.random.default_rng(7))
    return [LdsModel(0.1 * r, np.eye(3)), LdsModel(0.8 * r, 2.0 * np.eye(3))]


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
