import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_stable_model
from mixlds.classification import LossTable, classification_error, classify, trajectory_loss
from mixlds.errors import DimensionMismatch, InvalidPermutation, SingularW
from mixlds.lds_core import LdsModel
from mixlds.simulate import Trajectory, simulate_trajectory


def brute_loss(states, a, w):
    winv = np.linalg.inv(w)
    total = (len(states) - 1) * np.log(np.linalg.det(w))
    for t in range(len(states) - 1):
        r = states[t + 1] - a @ states[t]
        total += r @ winv @ r
    return total


class TestTrajectoryLoss:
    def test_zero_a_identity_w(self, rng):
        tr = Trajectory(rng.standard_normal((7, 3)))
        loss = trajectory_loss(tr, LdsModel(np.zeros((3, 3)), np.eye(3)))
        assert loss == pytest.approx(np.sum(tr.states[1:] ** 2), rel=1e-13)

    def test_noiseless_is_logdet(self):
        a = np.array([[0.5, 0.1], [0.0, 0.3]])
        xs = [np.array([1.0, 2.0])]
        for _ in range(6):
            xs.append(a @ xs[-1])
        w = np.array([[2.0, 0.3], [0.3, 1.0]])
        loss = trajectory_loss(Trajectory(np.array(xs)), LdsModel(a, w))
        assert loss == pytest.approx(6 * np.log(np.linalg.det(w)), rel=1e-12)

    def test_scalar(self, rng):
        x = rng.standard_normal(12)
        loss = trajectory_loss(Trajectory(x[:, None]), LdsModel([[0.3]], [[2.5]]))
        ref = 11 * np.log(2.5) + np.sum((x[1:] - 0.3 * x[:-1]) ** 2) / 2.5
        assert loss == pytest.approx(ref, rel=1e-13)

    def test_matrix_oracle(self, rng):
        m = random_stable_model(rng, 4)
        tr = Trajectory(rng.standard_normal((15, 4)))
        assert trajectory_loss(tr, m) == pytest.approx(brute_loss(tr.states, m.a, m.w), rel=1e-10)

    def test_singular_w(self, rng):
        tr = Trajectory(rng.standard_normal((5, 2)))
        m = LdsModel(np.zeros((2, 2)), np.diag([1.0, 0.0]))
        with pytest.raises(SingularW):
            trajectory_loss(tr, m)
        assert np.isfinite(trajectory_loss(tr, m, jitter=1e-3))

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            trajectory_loss(Trajectory(rng.standard_normal((5, 2))), LdsModel(np.zeros((3, 3)), np.eye(3)))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), d=st.integers(1, 4), c=st.floats(0.05, 20))
    def test_scale_identity(self, seed, d, c):
        rng = np.random.default_rng(seed)
        m = random_stable_model(rng, d)
        tr = Trajectory(rng.standard_normal((9, d)))
        base = trajectory_loss(tr, m)
        quad = base - 8 * np.log(np.linalg.det(m.w))
        scaled = trajectory_loss(tr, LdsModel(m.a, c * m.w))
        expect = base + 8 * d * np.log(c) + (1 / c - 1) * quad
        assert scaled == pytest.approx(expect, rel=1e-8, abs=1e-8)


class TestClassify:
    def test_single_model(self, rng):
        trs = [Trajectory(rng.standard_normal((6, 2))) for _ in range(5)]
        table = classify(trs, [LdsModel(0.2 * np.eye(2), np.eye(2))])
        assert table.losses.shape == (5, 1) and np.all(table.argmin == 0)

    def test_noiseless_prefers_generator(self):
        a1, a2 = np.array([[0.5, 0.2], [0.1, 0.3]]), np.array([[0.1, 0.0], [0.3, -0.2]])
        xs = [np.array([1.0, -1.0])]
        for _ in range(5):
            xs.append(a1 @ xs[-1])
        table = classify([Trajectory(np.array(xs))], [LdsModel(a1, np.eye(2)), LdsModel(a2, np.eye(2))])
        assert table.argmin[0] == 0

    def test_ties_to_smallest_index(self, rng):
        m = LdsModel(0.3 * np.eye(2), np.eye(2))
        table = classify([Trajectory(rng.standard_normal((5, 2)))], [m, LdsModel(m.a, m.w)])
        assert table.argmin[0] == 0

    def test_mixed_lengths_match_single(self, rng):
        models = [random_stable_model(rng, 3) for _ in range(3)]
        trs = [Trajectory(rng.standard_normal((n, 3))) for n in (4, 9, 4, 6)]
        table = classify(trs, models)
        for i, tr in enumerate(trs):
            for k, m in enumerate(models):
                assert table.losses[i, k] == pytest.approx(trajectory_loss(tr, m), rel=1e-12)
            assert table.argmin[i] == np.argmin(table.losses[i])

    def test_deterministic(self, rng):
        models = [random_stable_model(rng, 3) for _ in range(2)]
        trs = [Trajectory(rng.standard_normal((8, 3))) for _ in range(6)]
        a, b = classify(trs, models), classify(trs, models)
        np.testing.assert_array_equal(a.losses, b.losses)

    def test_row_shift_keeps_argmin(self, rng):
        losses = rng.standard_normal((10, 3))
        shifted = losses + rng.standard_normal((10, 1)) * 100
        np.testing.assert_array_equal(np.argmin(losses, axis=1), np.argmin(shifted, axis=1))

    def test_correct_model_dominance(self):
        good = LdsModel(0.3 * np.eye(2), np.eye(2))
        bad = LdsModel(0.7 * np.eye(2), 1.5 * np.eye(2))
        trs = [simulate_trajectory(good, 20, seed=s) for s in range(200)]
        table = classify(trs, [good, bad])
        assert np.mean(table.losses[:, 1] - table.losses[:, 0]) > 0

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            classify([Trajectory(np.zeros((3, 1)))], [])
        with pytest.raises(DimensionMismatch):
            classify([Trajectory(np.zeros((3, 1)))], [LdsModel(np.zeros((2, 2)), np.eye(2))])


class TestClassificationError:
    def test_identity(self):
        assert classification_error(LossTable(np.zeros((3, 2)), np.array([0, 1, 1])), [0, 1, 1]) == 0

    def test_constant_prediction(self):
        table = LossTable(np.zeros((4, 2)), np.zeros(4, dtype=int))
        assert classification_error(table, [0, 0, 1, 1], [1, 0]) == 0.5
        assert classification_error(table, [0, 0, 1, 1], [0, 1]) == 0.5

    def test_counting_oracle(self, rng):
        pred = rng.integers(0, 3, 50)
        truth = rng.integers(0, 3, 50)
        perm = [2, 0, 1]
        expect = sum(perm[p] != t for p, t in zip(pred, truth)) / 50
        assert classification_error(pred, truth, perm) == pytest.approx(expect)

    def test_invalid_permutation(self):
        with pytest.raises(InvalidPermutation):
            classification_error([0, 1], [0, 1], [0, 0])
        with pytest.raises(InvalidPermutation):
            classification_error([0, 2], [0, 1], [1, 0])
