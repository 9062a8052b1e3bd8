import math

import numpy as np
import pytest

from inbore_kin.robot import (JointSpec, RobotModel, adjoint, clamp_to_limits,
                              default_robot, fk, fk_frames_batch, jacobian,
                              joint_origins_batch, partition_jacobian,
                              within_limits)
from inbore_kin.se3 import Pose

from conftest import random_configs

PI = math.pi


def chain_oracle(q):
    """Hand-chained modified-DH product, written independently of robot.py."""

    def tx(alpha, a):
        c, s = math.cos(alpha), math.sin(alpha)
        return np.array([[1, 0, 0, a], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1.0]])

    def tz(theta, d):
        c, s = math.cos(theta), math.sin(theta)
        return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, d], [0, 0, 0, 1.0]])

    rows = [
        (0.0, 0.0, q[0], 0.0),
        (0.0, -PI / 2, q[1], -PI / 2),
        (0.0, -PI / 2, q[2], -PI / 2),
        (0.0, 0.0, 0.0, q[3]),
        (0.0, PI / 2, 0.0, q[4] + PI / 2),
        (7e-2, PI / 2, 0.0, q[5]),
        (7e-2, PI / 2, 3e-2, q[6] - PI / 2),
        (1e-2, -PI / 2, 2e-2 + q[7], 0.0),
    ]
    t = np.eye(4)
    for a, alpha, d, theta in rows:
        t = t @ tx(alpha, a) @ tz(theta, d)
    return t


# Frozen outputs of the oracle above, computed before the implementation.
FK_ZERO = np.array([
    [0.0, 0.0, 1.0, 0.16],
    [-1.0, 0.0, 0.0, -0.01],
    [0.0, -1.0, 0.0, 0.03],
    [0.0, 0.0, 0.0, 1.0],
])
Q_PROBE = np.array([0.05, -0.08, 0.12, 0.3, -0.4, 0.7, -0.2, 0.06])
FK_PROBE = np.array([
    [0.241700052658, -0.593363783361, 0.767789362482, 0.315427973975],
    [-0.95673537067, -0.013639119416, 0.290639647899, -0.00662080699],
    [-0.161983070271, -0.804818858512, -0.570988695097, -0.002018502101],
    [0.0, 0.0, 0.0, 1.0],
])


def fd_space_jacobian(model, q, h=1e-6):
    """Central-difference twist oracle: columns of dT/dq_i * T^-1."""
    t_inv = np.linalg.inv(fk(model, q).as_matrix())
    jac = np.zeros((6, model.n_joints))
    for i in range(model.n_joints):
        qp, qm = q.copy(), q.copy()
        qp[i] += h
        qm[i] -= h
        dt = (fk(model, qp).as_matrix() - fk(model, qm).as_matrix()) / (2 * h)
        w = dt @ t_inv
        jac[:3, i] = w[:3, 3]
        jac[3:, i] = [w[2, 1], w[0, 2], w[1, 0]]
    return jac


class TestForwardKinematics:
    def test_zero_config_matches_frozen_oracle(self, model):
        assert np.allclose(fk(model, np.zeros(8)).as_matrix(), FK_ZERO, atol=1e-12)

    def test_probe_config_matches_frozen_oracle(self, model):
        assert np.allclose(fk(model, Q_PROBE).as_matrix(), FK_PROBE, atol=1e-9)

    def test_random_configs_match_chain_oracle(self, model, rng):
        for q in random_configs(model, rng, 50):
            assert np.allclose(fk(model, q).as_matrix(), chain_oracle(q), atol=1e-9)

    def test_prismatic_joint_one_translates_along_frame_axis(self, model, rng):
        q = random_configs(model, rng, 1)[0]
        base = fk(model, q)
        frames = fk_frames_batch(model, q)[0]
        axis = frames[1][:3, 2]
        q2 = q.copy()
        q2[0] += 0.01
        moved = fk(model, q2)
        assert np.allclose(moved.translation - base.translation, 0.01 * axis,
                           atol=1e-12)
        assert np.allclose(moved.rotation, base.rotation, atol=1e-12)

    def test_table_row_six_parameters(self, model):
        j = model.joints[5]
        assert j.dh_a == pytest.approx(7e-2)
        assert j.dh_alpha == pytest.approx(PI / 2)

    def test_row_eight_is_prismatic_with_offset(self, model):
        j = model.joints[7]
        assert j.kind == "prismatic"
        assert j.dh_d == pytest.approx(2e-2)

    def test_continuity_under_small_perturbation(self, model, rng):
        q = random_configs(model, rng, 1)[0]
        t0 = fk(model, q).as_matrix()
        t1 = fk(model, q + 1e-8).as_matrix()
        assert np.abs(t1 - t0).max() < 1e-6

    def test_base_pose_composes(self, model, rng):
        base = Pose(np.eye(3), np.array([0.1, 0.2, 0.3]))
        placed = model.with_base_pose(base)
        q = random_configs(model, rng, 1)[0]
        assert np.allclose(fk(placed, q).as_matrix(),
                           base.as_matrix() @ fk(model, q).as_matrix(), atol=1e-12)


class TestJacobian:
    def test_space_jacobian_matches_central_difference(self, model, rng):
        worst = 0.0
        for q in random_configs(model, rng, 100):
            err = np.abs(jacobian(model, q, "space") - fd_space_jacobian(model, q)).max()
            worst = max(worst, err)
        assert worst < 1e-5

    def test_prismatic_columns_have_zero_angular_part(self, model, rng):
        q = random_configs(model, rng, 1)[0]
        jac = jacobian(model, q, "space")
        for i, joint in enumerate(model.joints):
            if joint.kind == "prismatic":
                assert np.allclose(jac[3:, i], 0.0)

    def test_adjoint_relation(self, model, rng):
        for q in random_configs(model, rng, 10):
            js = jacobian(model, q, "space")
            jb = jacobian(model, q, "body")
            assert np.allclose(js, adjoint(fk(model, q)) @ jb, atol=1e-9)

    def test_virtual_work_balance(self, model, rng):
        for q in random_configs(model, rng, 10):
            jac = jacobian(model, q, "body")
            f = rng.normal(size=6)
            qdot = rng.normal(size=8)
            assert f @ (jac @ qdot) == pytest.approx((jac.T @ f) @ qdot, abs=1e-12)

    def test_unknown_frame_rejected(self, model):
        with pytest.raises(ValueError):
            jacobian(model, np.zeros(8), "tool")


class TestPartition:
    def test_default_partition_shapes(self, model, rng):
        q = random_configs(model, rng, 1)[0]
        jac = jacobian(model, q, "body")
        j_core, j_red = partition_jacobian(jac, model)
        assert j_core.shape == (6, 5)
        assert j_red.shape == (6, 2)

    def test_column_identity(self, model, rng):
        q = random_configs(model, rng, 1)[0]
        jac = jacobian(model, q, "body")
        j_core, j_red = partition_jacobian(jac, model)
        for i in range(model.n_joints):
            col = jac[:, i]
            if i in model.excluded_indices:
                continue
            bucket = j_red if i in model.redundant_indices else j_core
            assert any(np.allclose(col, bucket[:, k]) for k in range(bucket.shape[1]))

    def test_empty_redundant_set(self, model, rng):
        flat = RobotModel(model.joints, redundant_indices=(),
                          excluded_indices=model.excluded_indices,
                          link_radii=model.link_radii)
        q = random_configs(model, rng, 1)[0]
        jac = jacobian(flat, q, "body")
        j_core, j_red = partition_jacobian(jac, flat)
        assert j_core.shape == (6, 7)
        assert j_red.shape == (6, 0)

    def test_wrong_shape_rejected(self, model):
        with pytest.raises(ValueError):
            partition_jacobian(np.zeros((6, 5)), model)


class TestModelValidation:
    def test_limit_helpers(self, model):
        lim = model.limits_array()
        assert within_limits(model, lim[:, 0])
        assert not within_limits(model, lim[:, 1] + 0.1)
        assert within_limits(model, clamp_to_limits(model, lim[:, 1] + 0.1))

    def test_requires_eight_joints(self, model):
        with pytest.raises(ValueError):
            RobotModel(model.joints[:7])

    def test_rejects_overlapping_partition(self, model):
        with pytest.raises(ValueError):
            RobotModel(model.joints, redundant_indices=(4,), excluded_indices=(4,))

    def test_rejects_bad_limits(self):
        with pytest.raises(ValueError):
            JointSpec("revolute", limits=(1.0, -1.0))

    def test_with_frozen_keeps_geometry(self, model, rng):
        frozen = model.with_frozen([0, 1, 2, 3, 6])
        q = random_configs(model, rng, 1)[0]
        assert np.allclose(fk(frozen, q).as_matrix(), fk(model, q).as_matrix())
        assert frozen.redundant_indices == ()
        assert set(frozen.excluded_indices) == {4, 5, 7}

    def test_link_capsule_endpoints_are_frame_origins(self, model, rng):
        from inbore_kin.world import link_geometry

        q = random_configs(model, rng, 1)[0]
        origins = joint_origins_batch(model, q)[0]
        capsules = link_geometry(model, q)
        assert len(capsules) == model.n_joints
        for i, (p0, p1, _) in enumerate(capsules):
            assert np.allclose(p0, origins[i])
            assert np.allclose(p1, origins[i + 1])
