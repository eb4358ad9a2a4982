"""Tests for state containers, SO(3) retraction, and flat codecs."""

import numpy as np
import pytest

from diffplan.state import (
    DegenerateRotationError,
    QuadState,
    Trajectory,
    flatten,
    hat,
    project_to_so3,
    unflatten,
)


def random_rotation(rng):
    """Rodrigues formula from a random axis-angle; independent of the SVD path."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, np.pi)
    K = hat(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def random_state(rng):
    return QuadState(
        o=rng.uniform(-3.0, 3.0, size=3),
        v=rng.normal(size=3),
        R=random_rotation(rng),
        Omega=rng.normal(size=3),
    )


def polar_newton_oracle(M, iters=60):
    """Independent polar factor via the Newton iteration X <- (X + X^-T)/2."""
    X = np.asarray(M, dtype=float).copy()
    for _ in range(iters):
        X = 0.5 * (X + np.linalg.inv(X).T)
    return X


class TestHat:
    def test_basis_vector(self):
        expected = np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0.0]])
        assert np.array_equal(hat([1, 0, 0]), expected)

    def test_zero(self):
        assert np.array_equal(hat([0, 0, 0]), np.zeros((3, 3)))

    def test_matches_cross_product(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            w = rng.normal(size=3)
            v = rng.normal(size=3)
            np.testing.assert_allclose(hat(w) @ v, np.cross(w, v), atol=1e-14)

    def test_linearity(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            a, b = rng.normal(size=2)
            w1, w2 = rng.normal(size=3), rng.normal(size=3)
            np.testing.assert_allclose(
                hat(a * w1 + b * w2), a * hat(w1) + b * hat(w2), atol=1e-13
            )


class TestProjectToSO3:
    def test_identity_passthrough(self):
        np.testing.assert_allclose(project_to_so3(np.eye(3)), np.eye(3), atol=1e-15)

    def test_positive_scaling(self):
        np.testing.assert_allclose(project_to_so3(2.0 * np.eye(3)), np.eye(3), atol=1e-15)

    def test_nearest_rotation_matches_newton_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            M = random_rotation(rng) + 0.1 * rng.normal(size=(3, 3))
            R = project_to_so3(M)
            np.testing.assert_allclose(R, polar_newton_oracle(M), atol=1e-9)

    def test_idempotent_on_rotations(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            R = random_rotation(rng)
            np.testing.assert_allclose(project_to_so3(R), R, atol=1e-9)

    def test_det_corrected_to_plus_one(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            M = rng.normal(size=(3, 3))
            R = project_to_so3(M)
            assert abs(np.linalg.det(R) - 1.0) < 1e-9
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)

    def test_singular_raises(self):
        M = np.zeros((3, 3))
        M[0, 0] = 1.0
        with pytest.raises(DegenerateRotationError, match="degenerate rotation block"):
            project_to_so3(M)

    def test_batched(self):
        rng = np.random.default_rng(14)
        Ms = rng.normal(size=(5, 3, 3))
        Rs = project_to_so3(Ms)
        for k in range(5):
            np.testing.assert_allclose(Rs[k], project_to_so3(Ms[k]), atol=1e-12)


class TestFlatCodec:
    def test_hover_round_trip_bit_exact(self):
        s = QuadState()
        f = flatten(s)
        s2 = unflatten(f)
        assert np.array_equal(flatten(s2), f)

    def test_orthonormalize_scaled_identity(self):
        f = np.zeros(18)
        f[6:15] = (1.5 * np.eye(3)).ravel()
        s = unflatten(f, orthonormalize=True)
        np.testing.assert_allclose(s.R, np.eye(3), atol=1e-12)

    def test_random_round_trip(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            s = random_state(rng)
            f = flatten(s)
            s2 = unflatten(f)
            assert np.array_equal(flatten(s2), f)

    def test_raw_vector_round_trip(self):
        rng = np.random.default_rng(22)
        f = rng.normal(size=18)
        np.testing.assert_array_equal(flatten(unflatten(f)), f)

    def test_wrong_length_raises(self):
        with pytest.raises(ValueError, match="18"):
            unflatten(np.zeros(17))


class TestTrajectory:
    def test_horizon(self):
        traj = Trajectory(states=np.zeros((6, 18)))
        assert traj.horizon == 5

    def test_control_length_checked(self):
        with pytest.raises(ValueError, match="controls"):
            Trajectory(states=np.zeros((6, 18)), controls=np.zeros((4, 4)))

    def test_state_width_checked(self):
        with pytest.raises(ValueError, match="states"):
            Trajectory(states=np.zeros((6, 17)))
