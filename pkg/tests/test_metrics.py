import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatreg.errors import EmptyInputError, InvalidInputError
from splatreg.metrics import (
    PoseError,
    bootstrap_mean_le_confidence,
    rotation_error_deg,
    summarize,
    translation_error,
)
from splatreg.gaussian_model import rotation_from_rotvec

from conftest import random_rotation

ROT90_Z = rotation_from_rotvec(np.array([0.0, 0.0, np.pi / 2]))
ROT180_X = rotation_from_rotvec(np.array([np.pi, 0.0, 0.0]))


class TestRotationError:
    def test_equal_rotations(self):
        assert rotation_error_deg(ROT90_Z, ROT90_Z) == pytest.approx(0.0, abs=1e-9)

    def test_antipodal(self):
        assert rotation_error_deg(ROT180_X, np.eye(3)) == pytest.approx(180.0, abs=1e-9)

    def test_quarter_turn(self):
        assert rotation_error_deg(ROT90_Z, np.eye(3)) == pytest.approx(90.0, abs=1e-9)

    def test_rejects_non_rotation(self):
        with pytest.raises(InvalidInputError):
            rotation_error_deg(np.eye(3) * 2.0, np.eye(3))
        with pytest.raises(InvalidInputError):
            rotation_error_deg(np.diag([1.0, 1.0, -1.0]), np.eye(3))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        a, b = random_rotation(rng), random_rotation(rng)
        assert rotation_error_deg(a, b) == pytest.approx(rotation_error_deg(b, a), abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_left_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a, b, q = (random_rotation(rng) for _ in range(3))
        assert rotation_error_deg(q @ a, q @ b) == pytest.approx(
            rotation_error_deg(a, b), abs=1e-9)


class TestTranslationError:
    def test_equal(self):
        assert translation_error((1, 2, 3), (1, 2, 3)) == 0.0

    def test_unit(self):
        assert translation_error((1, 0, 0), (0, 0, 0)) == 1.0

    def test_three_four_five(self):
        assert translation_error((3, 4, 0), (0, 0, 0)) == 5.0

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = rng.normal(size=(3, 3))
        assert translation_error(a, c) <= (translation_error(a, b)
                                           + translation_error(b, c) + 1e-12)


class TestSummarize:
    def test_single_trial(self):
        out = summarize([PoseError(3.0, 0.2)], [1.5])
        assert out.mean_rotation_deg == 3.0
        assert out.mean_translation == 0.2
        assert out.mean_time_s == 1.5
        assert out.count == 1

    def test_two_trials(self):
        out = summarize([PoseError(10.0, 1.0), PoseError(20.0, 3.0)], [1.0, 2.0])
        assert out.mean_rotation_deg == pytest.approx(15.0)
        assert out.mean_translation == pytest.approx(2.0)

    def test_many_trials_against_plain_mean(self, rng):
        rots = rng.uniform(0, 180, 100)
        trans = rng.uniform(0, 5, 100)
        times = rng.uniform(0, 2, 100)
        out = summarize([PoseError(r, t) for r, t in zip(rots, trans)], list(times))
        # oracle: independent running-sum recomputation
        assert out.mean_rotation_deg == pytest.approx(sum(rots) / 100, rel=1e-12)
        assert out.mean_translation == pytest.approx(sum(trans) / 100, rel=1e-12)
        assert out.mean_time_s == pytest.approx(sum(times) / 100, rel=1e-12)

    def test_empty_raises(self):
        with pytest.raises(EmptyInputError):
            summarize([], [])


class TestBootstrap:
    def test_clearly_smaller_mean(self, rng):
        x = rng.normal(0.0, 1.0, 200)
        y = rng.normal(3.0, 1.0, 200)
        assert bootstrap_mean_le_confidence(x, y, seed=1) > 0.99

    def test_equal_distributions_near_half(self, rng):
        x = rng.normal(0.0, 1.0, 500)
        y = rng.normal(0.0, 1.0, 500)
        conf = bootstrap_mean_le_confidence(x, y, seed=1)
        assert 0.05 < conf < 0.95
