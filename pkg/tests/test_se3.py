import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from inbore_kin.se3 import (Pose, compose, is_rotation, pose_error, quat_to_rot,
                            rot_mat, rot_to_quat, skew, z_axis_error)

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])


def exp_series(axis, angle, terms=20):
    """Independent oracle: truncated matrix exponential of skew(axis*angle)."""
    a = skew(np.asarray(axis) * angle)
    out = np.eye(3)
    term = np.eye(3)
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out


unit_axes = st.builds(
    lambda v: v / np.linalg.norm(v),
    st.tuples(*[st.floats(-1, 1) for _ in range(3)]).map(np.array).filter(
        lambda v: np.linalg.norm(v) > 1e-3),
)


class TestRotMat:
    def test_zero_angle_is_identity(self):
        assert np.allclose(rot_mat(Z, 0.0), np.eye(3))

    def test_quarter_turn_about_x_maps_y_to_z(self):
        r = rot_mat(X, math.pi / 2)
        assert np.allclose(r @ Y, Z, atol=1e-12)

    def test_matches_series_expansion_oracle(self, rng):
        # 20 series terms keep truncation below ~4e-9 for angles within pi.
        for _ in range(50):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(-math.pi, math.pi)
            assert np.allclose(rot_mat(axis, angle), exp_series(axis, angle),
                               atol=1e-7)

    def test_rejects_non_unit_axis(self):
        with pytest.raises(ValueError):
            rot_mat(np.array([1.0, 1.0, 0.0]), 0.3)

    @settings(max_examples=60, deadline=None)
    @given(axis=unit_axes, angle=st.floats(-10, 10))
    def test_output_is_rotation(self, axis, angle):
        assert is_rotation(rot_mat(axis, angle))


class TestPose:
    def test_compose_identity(self, rng):
        p = _random_pose(rng)
        assert _pose_close(compose(Pose.identity(), p), p)

    def test_compose_inverse_is_identity(self, rng):
        p = _random_pose(rng)
        assert _pose_close(compose(p, p.inverse()), Pose.identity())

    def test_compose_matches_matrix_product_oracle(self, rng):
        for _ in range(20):
            a, b = _random_pose(rng), _random_pose(rng)
            assert np.allclose(compose(a, b).as_matrix(),
                               a.as_matrix() @ b.as_matrix(), atol=1e-12)

    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            Pose(np.eye(3) * 2.0, np.zeros(3))

    def test_immutability(self, rng):
        p = _random_pose(rng)
        with pytest.raises(ValueError):
            p.translation[0] = 1.0

    def test_json_round_trip(self, rng):
        p = _random_pose(rng)
        q = Pose.from_json_dict(p.to_json_dict())
        assert _pose_close(p, q, tol=1e-9)

    def test_loader_rejects_bad_quaternion_norm(self):
        with pytest.raises(ValueError):
            Pose.from_json_dict({"t": [0, 0, 0], "q": [1.1, 0, 0, 0]})

    def test_loader_normalizes_slightly_off_quaternion(self):
        q = np.array([1.0, 0.0, 0.0, 0.0]) * (1 + 5e-7)
        p = Pose.from_json_dict({"t": [0, 0, 0], "q": list(q)})
        assert is_rotation(p.rotation)

    def test_quat_round_trip(self, rng):
        for _ in range(20):
            r = _random_pose(rng).rotation
            assert np.allclose(quat_to_rot(rot_to_quat(r)), r, atol=1e-12)


class TestPoseError:
    def test_identical_poses_zero_error(self, rng):
        p = _random_pose(rng)
        err = pose_error(p, p)
        assert err.position_norm == 0.0
        assert err.orientation_norm == 0.0

    def test_ten_degree_roll_about_own_x_axis(self, rng):
        p = _random_pose(rng)
        tilt = Pose(rot_mat(X, math.radians(10)), np.zeros(3))
        rotated = compose(p, tilt)
        err = pose_error(rotated, p)
        assert err.orientation_norm == pytest.approx(math.radians(10), abs=1e-6)

    def test_pure_translation(self, rng):
        p = _random_pose(rng)
        shifted = Pose(p.rotation, p.translation + np.array([0.01, -0.02, 0.03]))
        err = pose_error(shifted, p)
        assert np.allclose(err.position_error, [0.01, -0.02, 0.03])
        assert err.orientation_norm == 0.0

    def test_needle_roll_invariance(self, rng):
        a, b = _random_pose(rng), _random_pose(rng)
        base = pose_error(a, b)
        for _ in range(10):
            roll_a = compose(a, Pose(rot_mat(Z, rng.uniform(-math.pi, math.pi)),
                                     np.zeros(3)))
            roll_b = compose(b, Pose(rot_mat(Z, rng.uniform(-math.pi, math.pi)),
                                     np.zeros(3)))
            err = pose_error(roll_a, roll_b)
            assert np.allclose(err.orientation_error, base.orientation_error,
                               atol=1e-9)

    def test_magnitude_symmetry(self, rng):
        for _ in range(20):
            a, b = _random_pose(rng), _random_pose(rng)
            assert pose_error(a, b).orientation_norm == pytest.approx(
                pose_error(b, a).orientation_norm, abs=1e-12)

    def test_orientation_magnitude_bounded_by_pi(self, rng):
        for _ in range(30):
            a, b = _random_pose(rng), _random_pose(rng)
            assert pose_error(a, b).orientation_norm <= math.pi + 1e-12

    def test_antiparallel_axes_deterministic(self):
        err1 = z_axis_error(Z, -Z)
        err2 = z_axis_error(Z, -Z)
        assert np.allclose(err1, err2)
        assert np.linalg.norm(err1) == pytest.approx(math.pi)
        assert abs(np.dot(err1, Z)) < 1e-12


def _random_pose(rng) -> Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Pose(rot_mat(axis, rng.uniform(-math.pi, math.pi)),
                rng.uniform(-0.5, 0.5, 3))


def _pose_close(a: Pose, b: Pose, tol=1e-12) -> bool:
    return (np.allclose(a.rotation, b.rotation, atol=tol)
            and np.allclose(a.translation, b.translation, atol=tol))
