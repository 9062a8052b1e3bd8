import math

import numpy as np
import pytest

from inbore_kin.robot import fk, jacobian, jacobian_body_batch
from inbore_kin.se3 import Pose, pose_error, rot_mat
from inbore_kin.world import Environment, Obstacle, make_bore
from inbore_kin.planning import (CostWeights, IKSettings, TaskWrench,
                                 calc_local_targets, configuration_cost,
                                 default_insertion_wrench, ik_configuration_loss,
                                 in_c_feas, manipulability, nullspace_step,
                                 optimize_setup, solve_ik)
from inbore_kin.planning.cspace import in_c_free, in_c_goal, required_efforts
from inbore_kin.scenes import insertion_target, mid_torso_mask, scene_candidates

from conftest import random_configs

X = np.array([1.0, 0.0, 0.0])


@pytest.fixture(scope="module")
def torso_candidates(scene):
    return scene_candidates(scene, mid_torso_mask(scene.proxy))


class TestCFeas:
    def test_zero_wrench_in_limits(self, model, transmission, rng):
        for q in random_configs(model, rng, 5):
            assert in_c_feas(model, transmission, q, TaskWrench())

    def test_out_of_limits_rejected(self, model, transmission):
        q = np.zeros(8)
        q[0] = 1.0  # beyond the 0.2 m rail limit
        assert not in_c_feas(model, transmission, q, TaskWrench())

    def test_tiny_torque_limits_dominate(self, model, transmission, rng):
        from dataclasses import replace

        weak_joints = tuple(replace(j, effort_limit=j.effort_limit * 1e-6)
                            for j in model.joints)
        weak = replace(model, joints=weak_joints)
        q = random_configs(model, rng, 1)[0]
        assert not in_c_feas(weak, None, q, default_insertion_wrench())

    def test_matches_dense_product_oracle(self, model, transmission, rng):
        wrench = default_insertion_wrench()
        tau_max = model.effort_limits()
        for q in random_configs(model, rng, 20):
            jac = jacobian(model, q, "body")
            tau = np.abs(jac.T @ np.concatenate([wrench.force, wrench.moment]))
            oracle = bool(np.all(tau <= tau_max))
            assert in_c_feas(model, None, q, wrench) == oracle
            assert np.allclose(required_efforts(model, q, wrench), tau)


class TestSolveIK:
    def test_fixed_point_returns_immediately(self, model, rng):
        q0 = random_configs(model, rng, 1)[0]
        res = solve_ik(model, fk(model, q0), q0)
        assert res.success
        assert res.iterations == 0
        assert np.allclose(res.q, q0)

    def test_small_perturbation_converges(self, model, rng):
        s = IKSettings()
        for q0 in random_configs(model, rng, 10):
            delta = np.zeros(8)
            delta[list(model.nonredundant_indices)] = rng.uniform(-0.05, 0.05, 5)
            target = fk(model, q0 + delta)
            res = solve_ik(model, target, q0, s, use_partition=True)
            assert res.success
            err = pose_error(target, fk(model, res.q))
            assert err.position_norm < s.eps_p
            assert err.orientation_norm < s.eps_o

    def test_partition_leaves_redundant_joints_unchanged(self, model, rng):
        q0 = random_configs(model, rng, 1)[0]
        delta = np.zeros(8)
        delta[0] = 0.03
        res = solve_ik(model, fk(model, q0 + delta), q0, use_partition=True)
        assert np.allclose(res.q[list(model.redundant_indices)],
                           q0[list(model.redundant_indices)])
        assert res.q[7] == q0[7]  # excluded insertion joint untouched

    def test_unreachable_target_fails_with_monotone_trace(self, model):
        target = Pose(np.eye(3), np.array([5.0, 0.0, 0.0]))  # far outside travel
        res = solve_ik(model, target, np.zeros(8))
        assert not res.success
        trace = np.asarray(res.error_trace)
        assert np.all(np.diff(trace) <= 1e-12)
        assert res.pos_error > 1.0

    def test_full_mode_moves_redundant_joints(self, model, rng):
        q_goal = random_configs(model, rng, 1)[0]
        target = fk(model, q_goal)
        q0 = np.zeros(8)
        q0[7] = 0.02
        res = solve_ik(model, target, q0, use_partition=False)
        if res.success:
            err = pose_error(target, fk(model, res.q))
            assert err.position_norm <= 1e-3

    def test_rejects_non_finite_start(self, model):
        with pytest.raises(ValueError):
            solve_ik(model, Pose.identity(), np.full(8, np.nan))


class TestNullspaceStep:
    def test_zero_step_at_target_and_reference(self, model, rng):
        q = random_configs(model, rng, 1)[0]
        q_new = nullspace_step(model, fk(model, q), q, q)
        assert np.allclose(q_new, q, atol=1e-12)

    def test_step_lies_in_nullspace_at_target(self, model, rng):
        q = random_configs(model, rng, 1)[0]
        q_ref = q.copy()
        q_ref[list(model.active_indices)] += 0.3
        q_new = nullspace_step(model, fk(model, q), q, q_ref)
        step = q_new - q
        jac = jacobian(model, q, "body")[:5, list(model.active_indices)]
        assert np.linalg.norm(jac @ step[list(model.active_indices)]) \
            <= 1e-8 * np.linalg.norm(step)

    def test_projector_idempotent_against_pinv_oracle(self, model, rng):
        for q in random_configs(model, rng, 5):
            jac = jacobian(model, q, "body")[:5, list(model.active_indices)]
            pinv = np.linalg.pinv(jac)
            proj = np.eye(jac.shape[1]) - pinv @ jac
            assert np.allclose(proj @ proj, proj, atol=1e-9)

    def test_task_error_preserved_to_first_order(self, model, rng):
        s = IKSettings()
        q = random_configs(model, rng, 1)[0]
        target = fk(model, q)
        q_ref = q.copy()
        q_ref[list(model.active_indices)] += 0.005
        q_new = nullspace_step(model, target, q, q_ref, s)
        err = pose_error(target, fk(model, q_new))
        assert err.position_norm < 1e-6
        assert err.orientation_norm < 1e-6

    def test_step_clamped(self, model, rng):
        s = IKSettings(step_clamp=0.01)
        q = random_configs(model, rng, 1)[0]
        target = fk(model, q + 0.3)
        q_new = nullspace_step(model, target, q, q, s)
        assert np.abs(q_new - q).max() <= 0.01 + 1e-12


class TestCalcLocalTargets:
    def test_single_ring_counts_and_cone(self, rng):
        nominal = _random_pose(rng)
        poses = calc_local_targets(nominal, math.radians(15), 1, 1)
        assert len(poses) == 2
        for p in poses:
            assert np.allclose(p.translation, nominal.translation)
            ang = pose_error(nominal, p).orientation_norm
            assert ang <= math.radians(15) + 1e-9

    def test_dexterity_protocol_call_yields_72(self, rng):
        poses = calc_local_targets(_random_pose(rng), math.radians(60), 8, 8)
        assert len(poses) == 72

    def test_zenith_schedule_against_rot_mat_oracle(self, rng):
        nominal = _random_pose(rng)
        n, m = 5, 4
        delta = math.radians(40)
        poses = calc_local_targets(nominal, delta, n, m)
        for i in range(1, n + 1):
            ring = poses[(i - 1) * (m + 1): i * (m + 1)]
            for p in ring:
                ang = pose_error(nominal, p).orientation_norm
                assert ang == pytest.approx(i * delta / n, abs=1e-9)

    def test_radial_sweep_covers_azimuths(self, rng):
        nominal = _random_pose(rng)
        poses = calc_local_targets(nominal, math.radians(30), 1, 8)
        axes = np.array([nominal.rotation.T @ p.z_axis() for p in poses])
        azimuths = np.arctan2(axes[:, 1], axes[:, 0])
        assert len(np.unique(np.round(azimuths, 6))) == 8  # first == last

    def test_parameter_validation(self, rng):
        nominal = _random_pose(rng)
        with pytest.raises(ValueError):
            calc_local_targets(nominal, 0.0, 4, 4)
        with pytest.raises(ValueError):
            calc_local_targets(nominal, math.radians(100), 4, 4)
        with pytest.raises(ValueError):
            calc_local_targets(nominal, math.radians(10), 0, 4)


class TestConfigurationCost:
    def test_q0_motion_term_is_regularized(self, scene):
        w = CostWeights()
        cost = configuration_cost(scene.model, scene.env, scene.q_nominal,
                                  scene.q_nominal, w)
        assert cost < w.c_infeasible

    def test_doubling_clearance_decreases_distance_terms(self, model):
        w = CostWeights(alpha=0.0, gamma=0.0)
        q = np.zeros(8)

        def cost_with_obstacles(scale):
            obstacles = (
                make_bore(0.35 * scale, 1.6),
                Obstacle("patient", "sphere",
                         pose=Pose(np.eye(3), np.array([0.0, -0.3 * scale, 0.03])),
                         dimensions={"radius": 0.05}),
            )
            return configuration_cost(model, Environment(obstacles), q, q, w)

        assert cost_with_obstacles(2.0) < cost_with_obstacles(1.0)

    def test_wrist_singularity_saturates(self, scene):
        q_sing = np.array([0, 0, 0, 0, math.pi / 2, 0, math.pi / 2, 0.0])
        assert manipulability(scene.model, q_sing) < 1e-10
        w = CostWeights()
        cost = configuration_cost(scene.model, scene.env, q_sing,
                                  scene.q_nominal, w)
        assert cost == w.c_infeasible

    def test_penetration_saturates(self, scene):
        q = scene.q_nominal.copy()
        q[1] = -0.2  # drive the arm into the patient
        w = CostWeights()
        d = configuration_cost(scene.model, scene.env, q, scene.q_nominal, w)
        assert d == w.c_infeasible or d > 0


class TestIKConfigurationLoss:
    def test_feasible_mid_workspace(self, scene, torso_candidates):
        target = insertion_target(torso_candidates[0])
        res = ik_configuration_loss(scene.model, scene.env, scene.transmission,
                                    target, scene.q_nominal, (0.0, 0.0),
                                    delta_adj=math.radians(15))
        assert res.feasible
        assert res.cost < CostWeights().c_infeasible

    def test_target_inside_obstacle_returns_q0_verbatim(self, scene):
        inside = Pose(rot_mat(X, math.pi),
                      scene.proxy.torso_center + np.array([0.0, 0.02, 0.0]))
        res = ik_configuration_loss(scene.model, scene.env, scene.transmission,
                                    inside, scene.q_nominal, (0.0, 0.0),
                                    delta_adj=math.radians(15))
        assert not res.feasible
        assert res.cost == CostWeights().c_infeasible
        assert np.array_equal(res.q_star, scene.q_nominal)

    def test_cone_feasible_implies_nominal_feasible(self, scene, torso_candidates):
        target = insertion_target(torso_candidates[2])
        wide = ik_configuration_loss(scene.model, scene.env, scene.transmission,
                                     target, scene.q_nominal, (0.0, 0.0),
                                     delta_adj=math.radians(15))
        if wide.feasible:
            nominal_only = ik_configuration_loss(
                scene.model, scene.env, scene.transmission, target,
                scene.q_nominal, (0.0, 0.0), delta_adj=0.0)
            assert nominal_only.feasible

    def test_feasible_result_passes_membership_rechecks(self, scene, torso_candidates):
        s = IKSettings()
        target = insertion_target(torso_candidates[4])
        res = ik_configuration_loss(scene.model, scene.env, scene.transmission,
                                    target, scene.q_nominal, (0.0, 0.0),
                                    delta_adj=math.radians(15), settings=s)
        if not res.feasible:
            pytest.skip("candidate infeasible at the pinned redundant values")
        assert in_c_goal(scene.model, res.q_star, target, s.eps_p, s.eps_o)
        assert in_c_free(scene.env, scene.model, res.q_star)
        assert in_c_feas(scene.model, scene.transmission, res.q_star,
                         default_insertion_wrench())

    def test_wrong_redundant_arity_rejected(self, scene):
        with pytest.raises(ValueError):
            ik_configuration_loss(scene.model, scene.env, scene.transmission,
                                  Pose.identity(), scene.q_nominal, (0.0,))


class TestOptimizeSetup:
    def test_obstacle_free_scene_is_feasible(self, scene, torso_candidates):
        empty = Environment((make_bore(0.6, 2.0),), bore_radius=0.6)
        target = insertion_target(torso_candidates[1])
        res = optimize_setup(scene.model, empty, scene.transmission, target,
                             scene.q_nominal, grid_shape=(5, 5))
        assert res.feasible
        assert res.cost < CostWeights().c_infeasible

    def test_beta_weight_changes_argmin_cell(self, scene, torso_candidates):
        # Asymmetric clearances: a flank candidate pulls the elbow either
        # toward the bore wall or toward the patient depending on beta.
        lateral = max((c for c in torso_candidates if abs(c.rotation[0, 2]) <= 0.7),
                      key=lambda c: abs(c.rotation[0, 2]))
        target = insertion_target(lateral)
        cells = {}
        for beta in (0.1, 0.5):
            res = optimize_setup(scene.model, scene.env, scene.transmission,
                                 target, scene.q_nominal,
                                 CostWeights(beta=beta), grid_shape=(9, 9))
            assert res.feasible
            cells[beta] = np.round(res.q_star[[4, 5]], 6)
        assert not np.array_equal(cells[0.1], cells[0.5])

    def test_shrunken_bore_infeasible_everywhere(self, scene, torso_candidates):
        tiny = Environment((make_bore(0.05, 1.6),), bore_radius=0.05)
        target = insertion_target(torso_candidates[0])
        res = optimize_setup(scene.model, tiny, scene.transmission, target,
                             scene.q_nominal, grid_shape=(5, 5))
        assert not res.feasible
        assert np.array_equal(res.q_star, scene.q_nominal)

    def test_deterministic(self, scene, torso_candidates):
        target = insertion_target(torso_candidates[3])
        a = optimize_setup(scene.model, scene.env, scene.transmission, target,
                           scene.q_nominal, grid_shape=(7, 7))
        b = optimize_setup(scene.model, scene.env, scene.transmission, target,
                           scene.q_nominal, grid_shape=(7, 7))
        assert a.feasible == b.feasible
        assert a.cost == b.cost
        assert np.array_equal(a.q_star, b.q_star)

    def test_feasibility_flag_matches_cost_invariant(self, scene, torso_candidates):
        w = CostWeights()
        target = insertion_target(torso_candidates[5])
        res = optimize_setup(scene.model, scene.env, scene.transmission, target,
                             scene.q_nominal, w, grid_shape=(5, 5),
                             stop_at_first_feasible=True)
        assert res.feasible == (res.cost < w.c_infeasible)


def _random_pose(rng) -> Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Pose(rot_mat(axis, rng.uniform(-math.pi, math.pi)),
                rng.uniform(-0.5, 0.5, 3))
