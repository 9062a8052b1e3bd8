"""Simulated plant with transmission compliance plus the estimator/controller
stack, and the virtual RCM cone-tracking experiment.

The plant is quasi-static: first-order motor lag, joint positions from the
coupling matrix plus cable stretch under the external wrench, and a lateral
link-bending offset at the EE. The controllers are kinematic, mirroring the
hardware stack: complementary joint estimation, actuator-space PD, and a
resolved-rate EE correction fed by the (noisy) tracker.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .se3 import Pose, pose_error, rot_mat
from .robot import RobotModel, fk, fk_frames_batch, jacobian_body_batch
from .transmission import TransmissionModel, N_BASE
from .planning.cspace import TaskWrench
from .planning.ik import IKSettings, damped_pinv_apply, solve_ik, task_errors_batch


@dataclass(frozen=True)
class PlantParams:
    """Motor and structure constants for the quasi-static plant."""

    motor_inertia: float = 1.0
    motor_damping: float = 50.0        # time constant 20 ms with unit inertia
    link_stiffness: float = 1790.0     # N/m lateral EE stiffness of the arm tube
    encoder_sigma: float = math.radians(0.1)
    inner_substeps: int = 10           # embedded motor servo rate vs control rate


@dataclass(frozen=True)
class PlantState:
    """Motor-side state plus derived true joint positions."""

    theta: np.ndarray
    theta_dot: np.ndarray
    q_true: np.ndarray
    wrench: TaskWrench = field(default_factory=TaskWrench)
    tracker_sigma: tuple[float, float] = (0.0, 0.0)   # (m, rad)


def make_plant_state(transmission: TransmissionModel, theta=None,
                     wrench: TaskWrench | None = None,
                     tracker_sigma=(0.0, 0.0)) -> PlantState:
    theta = np.zeros(8) if theta is None else np.asarray(theta, dtype=float)
    wrench = wrench or TaskWrench()
    q = transmission.coupling.matrix @ theta
    return PlantState(theta, np.zeros(8), q, wrench, tuple(tracker_sigma))


def _true_joints(model: RobotModel, transmission: TransmissionModel,
                 theta: np.ndarray, wrench: TaskWrench) -> np.ndarray:
    q_cmd = transmission.coupling.matrix @ theta
    jb = jacobian_body_batch(model, q_cmd)[0]
    tau_ext = jb.T @ wrench.as_vector()
    return q_cmd + transmission.joint_deflection(tau_ext)


def plant_step(model: RobotModel, transmission: TransmissionModel, state: PlantState,
               tau_cmd, dt: float, params: PlantParams | None = None,
               deflection=None) -> PlantState:
    """Advance the motors one step under commanded torques.

    Semi-implicit Euler on the first-order motor model; true joint positions
    follow the coupling matrix plus static cable stretch under the external
    wrench (recomputed unless a cached `deflection` is supplied).
    Deterministic.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    p = params or PlantParams()
    tau_cmd = np.asarray(tau_cmd, dtype=float)
    theta_dot = state.theta_dot + dt * (tau_cmd - p.motor_damping * state.theta_dot) \
        / p.motor_inertia
    theta = state.theta + dt * theta_dot
    if deflection is None:
        q_true = _true_joints(model, transmission, theta, state.wrench)
    else:
        q_true = transmission.coupling.matrix @ theta + deflection
    return replace(state, theta=theta, theta_dot=theta_dot, q_true=q_true)


def true_ee_pose(model: RobotModel, state: PlantState,
                 params: PlantParams | None = None) -> Pose:
    """EE pose including the lateral link-bending deflection under the wrench."""
    p = params or PlantParams()
    ee = fk(model, state.q_true)
    f = state.wrench.force
    lateral = np.array([f[0], f[1], 0.0]) / p.link_stiffness
    return Pose(ee.rotation, ee.translation + ee.rotation @ lateral)


def measure_tracker(model: RobotModel, state: PlantState, rng: np.random.Generator,
                    params: PlantParams | None = None) -> Pose:
    """Noisy tracker pose of the EE-mounted sensor (robot-base frame)."""
    pose = true_ee_pose(model, state, params) @ model.ee_offset
    sp, so = state.tracker_sigma
    t = pose.translation + rng.normal(0.0, sp, 3) if sp > 0 else pose.translation
    rot = pose.rotation
    if so > 0:
        axis = rng.normal(0.0, 1.0, 3)
        axis /= np.linalg.norm(axis)
        rot = rot_mat(axis, rng.normal(0.0, so)) @ rot
    return Pose(rot, t)


def measure_joint_encoders(state: PlantState, rng: np.random.Generator,
                           sigma: float) -> np.ndarray:
    """Magnetic joint encoders on the cable joints: truth plus Gaussian noise."""
    q = state.q_true[N_BASE:].copy()
    if sigma > 0:
        q = q + rng.normal(0.0, sigma, q.shape)
    return q


@dataclass(frozen=True)
class EstimatorState:
    """Complementary-filter state for the cable joints."""

    q_hat: np.ndarray
    alpha: float = 0.9
    dt: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")


def estimate_joints(est: EstimatorState, transmission: TransmissionModel, theta,
                    theta_dot, q_meas_cable) -> tuple[np.ndarray, EstimatorState]:
    """Joint estimate: exact gear ratios for the base block, complementary
    blend of integrated motor velocity and noisy joint encoders for the
    cable block (incremental form)."""
    theta = np.asarray(theta, dtype=float)
    theta_dot = np.asarray(theta_dot, dtype=float)
    q_meas_cable = np.asarray(q_meas_cable, dtype=float)
    q_hat = est.q_hat.copy()
    q_hat[:N_BASE] = transmission.coupling.m_base @ theta[:N_BASE]
    predicted = est.q_hat[N_BASE:] \
        + transmission.coupling.m_cable @ (theta_dot[N_BASE:] * est.dt)
    q_hat[N_BASE:] = est.alpha * predicted + (1.0 - est.alpha) * q_meas_cable
    return q_hat, replace(est, q_hat=q_hat)


@dataclass(frozen=True)
class GainSet:
    """Actuator-space PD plus task/nullspace gains for the local controller."""

    k_p: np.ndarray = field(default_factory=lambda: np.full(8, 4.0e5))
    k_d: np.ndarray = field(default_factory=lambda: np.full(8, 1215.0))
    k_e: float = 0.5
    k_c: float = 0.1
    viscous_ff: float = 50.0  # model-based motor-friction feedforward

    def __post_init__(self):
        kp = np.asarray(self.k_p, dtype=float)
        kd = np.asarray(self.k_d, dtype=float)
        if np.any(kp < 0) or np.any(kd < 0):
            raise ValueError("PD gains must be non-negative")
        object.__setattr__(self, "k_p", kp)
        object.__setattr__(self, "k_d", kd)


@dataclass(frozen=True)
class PDState:
    prev_error: np.ndarray
    deriv: np.ndarray
    smoothing: float = 0.5


def make_pd_state() -> PDState:
    return PDState(np.zeros(8), np.zeros(8))


def joint_pd(gains: GainSet, state: PDState, q_set, q_hat,
             transmission: TransmissionModel, dt: float,
             theta_dot_ff=None) -> tuple[np.ndarray, PDState]:
    """Actuator-space PD on the joint error mapped through the inverse
    coupling; the derivative is a filtered backward difference. An optional
    motor-velocity feedforward cancels viscous drag while tracking."""
    err = transmission.coupling.inverse @ (np.asarray(q_set, dtype=float)
                                           - np.asarray(q_hat, dtype=float))
    raw = (err - state.prev_error) / dt
    deriv = state.smoothing * state.deriv + (1.0 - state.smoothing) * raw
    tau = gains.k_p * err + gains.k_d * deriv
    if theta_dot_ff is not None:
        tau = tau + gains.viscous_ff * np.asarray(theta_dot_ff, dtype=float)
    return tau, PDState(err, deriv, state.smoothing)


def local_controller_step(model: RobotModel, target: Pose, tracker_pose: Pose,
                          q_hat, q_ref, gains: GainSet, damping: float = 1e-3,
                          t_base_tracker: Pose | None = None,
                          step_clamp: float = 0.05,
                          reference_increment=None) -> np.ndarray:
    """EE servo update: resolved-rate correction from the measured pose with
    nullspace attraction toward the reference configuration.

    The estimated EE pose chains the base-to-tracker calibration, the raw
    tracker measurement, and the inverse EE-to-tracker offset. Anchoring at
    the current estimate makes the correction integrate static deflection
    away; `reference_increment` adds the per-step advance of a moving
    reference so tracking does not lag behind it.
    """
    q_hat = np.asarray(q_hat, dtype=float)
    q_ref = np.asarray(q_ref, dtype=float)
    t_bm = t_base_tracker or Pose.identity()
    ee_est = t_bm @ tracker_pose @ model.ee_offset.inverse()
    e5, _, _ = task_errors_batch(ee_est.as_matrix()[None], target.translation,
                                 target.z_axis())
    cols = list(model.active_indices)
    jac = jacobian_body_batch(model, q_hat)[0][:5, cols]
    step = damped_pinv_apply(jac, gains.k_e * e5[0], damping)
    pinv = np.linalg.pinv(jac)
    step = step + (np.eye(len(cols)) - pinv @ jac) @ (gains.k_c * (q_ref[cols] - q_hat[cols]))
    peak = np.abs(step).max()
    if peak > step_clamp:
        step = step * (step_clamp / peak)
    q_set = q_hat.copy()
    q_set[cols] += step
    if reference_increment is not None:
        q_set = q_set + np.asarray(reference_increment, dtype=float)
    return q_set


@dataclass(frozen=True)
class ConeTrajectory:
    """Virtual RCM sweep: EE circles a cone whose apex is the needle tip."""

    apex: Pose
    zenith: float = math.radians(15.0)
    n_points: int = 64
    tip_offset: float = 0.10


def default_cone(model: RobotModel, q_nominal) -> ConeTrajectory:
    ee = fk(model, q_nominal)
    apex = Pose(ee.rotation, ee.translation + ee.z_axis() * 0.10)
    return ConeTrajectory(apex)


def cone_pose(cone: ConeTrajectory, azimuth: float) -> Pose:
    """EE pose on the cone at a given sweep angle: needle axis through the
    apex, guide backed off along the axis by the tip offset."""
    rot = cone.apex.rotation @ rot_mat(np.array([0.0, 0.0, 1.0]), azimuth) \
        @ rot_mat(np.array([1.0, 0.0, 0.0]), cone.zenith)
    return Pose(rot, cone.apex.translation - cone.tip_offset * rot[:, 2])


def cone_waypoints(cone: ConeTrajectory) -> list[Pose]:
    return [cone_pose(cone, 2.0 * math.pi * k / cone.n_points)
            for k in range(cone.n_points)]


TRACE_FIELDS = ("step", "t", "ex", "ey", "ez", "eax", "eay", "eaz", "ep_norm", "eo_norm")


@dataclass(frozen=True)
class ServoTrace:
    """Per-control-step pose errors of an RCM run."""

    rows: np.ndarray  # (N, 10) columns per TRACE_FIELDS
    closed_loop: bool
    seed: int

    @property
    def mean_position_error(self) -> float:
        return float(self.rows[:, 8].mean())

    @property
    def mean_orientation_error(self) -> float:
        return float(self.rows[:, 9].mean())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_FIELDS)
            for row in self.rows:
                writer.writerow([int(row[0])] + [f"{v:.9g}" for v in row[1:]])


def run_rcm_trajectory(model: RobotModel, transmission: TransmissionModel,
                       cone: ConeTrajectory, closed_loop: bool, seed: int = 0,
                       q_start=None, wrench: TaskWrench | None = None,
                       tracker_sigma=(0.0, 0.0), dt: float = 0.01,
                       settle_steps: int = 25, gains: GainSet | None = None,
                       params: PlantParams | None = None,
                       ik_settings: IKSettings | None = None) -> ServoTrace:
    """Track the cone through the plant/estimator/controller stack.

    The reference pose sweeps the cone continuously (n_points knots,
    settle_steps control periods per knot) with a feedforward IK stream as
    the nullspace anchor. closed_loop=False disables joint-encoder and
    tracker feedback: motor setpoints come from the ideal coupling matrix
    alone, so cable stretch and link bending appear directly in the error
    trace. A reference pose whose IK fails aborts with the trace so far.
    """
    p = params or PlantParams()
    g = gains or GainSet()
    s = ik_settings or IKSettings(eps_p=2e-5, eps_o=math.radians(0.02), n_restarts=1)
    wrench = wrench or TaskWrench()
    rng = np.random.default_rng(seed)

    q_prev = np.asarray(q_start if q_start is not None else np.zeros(8), dtype=float)
    ik0 = solve_ik(model, cone_pose(cone, 0.0), q_prev, s, use_partition=False)
    if not ik0.success:
        raise ValueError("cone apex is not reachable from the start configuration")
    q_ff = ik0.q
    theta0 = transmission.coupling.inverse @ q_ff
    state = make_plant_state(transmission, theta0, wrench, tracker_sigma)
    state = replace(state, q_true=_true_joints(model, transmission, theta0, wrench))
    est = EstimatorState(q_hat=transmission.coupling.matrix @ theta0, dt=dt)
    pd_state = make_pd_state()

    rows = []
    total = cone.n_points * settle_steps
    q_ff_prev = q_ff
    theta_prev = state.theta
    target_prev = cone_pose(cone, 0.0)
    for step_idx in range(total):
        target = cone_pose(cone, 2.0 * math.pi * step_idx / total)
        ik = solve_ik(model, target, q_ff, s, use_partition=False)
        if not ik.success:
            break
        q_ff_prev, q_ff = q_ff, ik.q
        if closed_loop:
            q_enc = measure_joint_encoders(state, rng, p.encoder_sigma)
            # Motor "velocity" for the prediction term is the encoder delta
            # over the sample period, as a real embedded estimator sees it.
            theta_delta_rate = (state.theta - theta_prev) / dt
            theta_prev = state.theta
            tracker = measure_tracker(model, state, rng, p)
            q_hat, est = estimate_joints(est, transmission, state.theta,
                                         theta_delta_rate, q_enc)
            increment = q_ff - q_ff_prev
            # The tracker sample predates this period, so the correction is
            # formed against the reference that was active when it was taken.
            q_set = local_controller_step(model, target_prev, tracker, q_hat, q_ff,
                                          g, reference_increment=increment)
            theta_dot_ff = transmission.coupling.inverse @ (increment / dt)
            # Embedded motor servo runs several substeps per control period;
            # between encoder samples the joint estimate is advanced by the
            # motor deltas, and the wrench deflection is held for the period.
            jb = jacobian_body_batch(model, state.q_true)[0]
            deflection = transmission.joint_deflection(jb.T @ wrench.as_vector())
            dt_inner = dt / p.inner_substeps
            theta_meas = state.theta
            for _ in range(p.inner_substeps):
                q_hat_inner = q_hat + transmission.coupling.matrix \
                    @ (state.theta - theta_meas)
                tau, pd_state = joint_pd(g, pd_state, q_set, q_hat_inner,
                                         transmission, dt_inner,
                                         theta_dot_ff=theta_dot_ff)
                state = plant_step(model, transmission, state, tau, dt_inner, p,
                                   deflection=deflection)
        else:
            # Motor position servo on the ideal coupling, no joint/EE feedback.
            theta_set = transmission.coupling.inverse @ q_ff
            state = replace(state, theta=theta_set, theta_dot=np.zeros(8),
                            q_true=_true_joints(model, transmission, theta_set, wrench))
        err = pose_error(target, true_ee_pose(model, state, p))
        rows.append([step_idx, step_idx * dt, *err.position_error,
                     *err.orientation_error, err.position_norm,
                     err.orientation_norm])
        target_prev = target
    return ServoTrace(np.asarray(rows, dtype=float), closed_loop, seed)
