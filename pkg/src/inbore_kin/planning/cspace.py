"""Configuration-space membership tests: effort feasibility, clearance, goal."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..se3 import Pose, pose_error
from ..robot import RobotModel, jacobian_body_batch, within_limits
from ..transmission import TransmissionModel, CABLE_JOINTS
from ..world import Environment, ALL_CLASSES, distance_to_class_batch


@dataclass(frozen=True)
class TaskWrench:
    """Required EE force and moment, expressed in the EE frame."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        f = np.asarray(self.force, dtype=float)
        m = np.asarray(self.moment, dtype=float)
        if f.shape != (3,) or m.shape != (3,):
            raise ValueError("force and moment must be 3-vectors")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(m))):
            raise ValueError("wrench components must be finite")
        object.__setattr__(self, "force", f)
        object.__setattr__(self, "moment", m)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])


def default_insertion_wrench() -> TaskWrench:
    """10 N along the needle plus 0.05 N*m tilting moments."""
    return TaskWrench(np.array([0.0, 0.0, 10.0]), np.array([0.05, 0.05, 0.0]))


def effort_limits(model: RobotModel, transmission: TransmissionModel | None, q) -> np.ndarray:
    """Per-joint admissible efforts, tightened by the configuration-dependent
    cable-transmission rating when a transmission model is supplied."""
    tau_max = model.effort_limits().copy()
    if transmission is not None:
        q = np.asarray(q, dtype=float)
        for k, j in enumerate(CABLE_JOINTS):
            g = transmission.pulleys[k]
            s = abs(np.sin((q[j] + g.wrap_offset) / 2.0))
            if s > 1e-12:
                admissible = g.rated_load / s
                if model.joints[j].kind == "revolute":
                    admissible *= g.joint_pulley_radius
                tau_max[j] = min(tau_max[j], admissible)
    return tau_max


def required_efforts(model: RobotModel, q, wrench: TaskWrench) -> np.ndarray:
    """Joint efforts |J_b^T f| needed to exert the wrench at configuration q."""
    jb = jacobian_body_batch(model, q)[0]
    return np.abs(jb.T @ wrench.as_vector())


def in_c_feas(model: RobotModel, transmission: TransmissionModel | None, q,
              f_req: TaskWrench) -> bool:
    """True when q is within joint limits and every joint can hold f_req."""
    q = np.asarray(q, dtype=float)
    if not within_limits(model, q):
        return False
    tau = required_efforts(model, q, f_req)
    return bool(np.all(tau <= effort_limits(model, transmission, q)))


def c_feas_mask_batch(model: RobotModel, transmission: TransmissionModel | None,
                      q_batch: np.ndarray, f_req: TaskWrench,
                      jb_batch: np.ndarray | None = None) -> np.ndarray:
    """Vectorized in_c_feas over configurations (B, n) -> bool (B,)."""
    q_batch = np.asarray(q_batch, dtype=float)
    lim = model.limits_array()
    ok = np.all((q_batch >= lim[:, 0]) & (q_batch <= lim[:, 1]), axis=1)
    if jb_batch is None:
        jb_batch = jacobian_body_batch(model, q_batch)
    tau = np.abs(np.einsum("bij,i->bj", jb_batch, f_req.as_vector()))
    if transmission is None:
        tau_max = np.broadcast_to(model.effort_limits(), tau.shape)
    else:
        tau_max = np.repeat(model.effort_limits()[None, :], q_batch.shape[0], axis=0)
        for k, j in enumerate(CABLE_JOINTS):
            g = transmission.pulleys[k]
            s = np.abs(np.sin((q_batch[:, j] + g.wrap_offset) / 2.0))
            admissible = np.where(s > 1e-12, g.rated_load / np.maximum(s, 1e-12), np.inf)
            if model.joints[j].kind == "revolute":
                admissible = admissible * g.joint_pulley_radius
            tau_max[:, j] = np.minimum(tau_max[:, j], admissible)
    return ok & np.all(tau <= tau_max, axis=1)


def in_c_free(env: Environment, model: RobotModel, q) -> bool:
    """True when all link capsules keep more than the padding distance."""
    d = distance_to_class_batch(env, model, np.asarray(q, dtype=float)[None, :], ALL_CLASSES)[0]
    return bool(d > env.padding)


def in_c_goal(model: RobotModel, q, target: Pose, eps_p: float, eps_o: float) -> bool:
    """True when fk(q) is within the position/orientation tolerances of target."""
    from ..robot import fk

    err = pose_error(target, fk(model, q))
    return err.position_norm <= eps_p and err.orientation_norm <= eps_o
