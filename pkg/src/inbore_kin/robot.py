"""Modified-DH kinematic chain: forward kinematics, twist Jacobians, partitioning.

Joint configurations are plain float arrays of length 8 (radians for revolute
joints, meters for prismatic ones). Every kinematics routine has a batched
variant operating on (B, 8) arrays; the scalar entry points wrap batch size 1
so there is a single code path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .se3 import Pose

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
FIXED = "fixed"


@dataclass(frozen=True)
class JointSpec:
    """One row of the modified-DH table plus limits and an effort rating."""

    kind: str
    dh_a: float = 0.0
    dh_alpha: float = 0.0
    dh_d: float = 0.0
    dh_theta: float = 0.0
    limits: tuple[float, float] = (-np.pi, np.pi)
    effort_limit: float = np.inf

    def __post_init__(self):
        if self.kind not in (REVOLUTE, PRISMATIC, FIXED):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        lo, hi = self.limits
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError(f"joint limits must be finite with min < max, got {self.limits}")


@dataclass(frozen=True)
class RobotModel:
    """Eight-joint serial chain with a redundant/excluded joint partition.

    `base_pose` places the chain in the scene frame; `ee_offset` is the static
    EE-to-tracker-mount transform (used by calibration and the servo loop, not
    by fk). `link_radii[i]` is the collision-capsule radius of the link ending
    at joint frame i+1; radius 0 marks virtual links with no geometry.
    """

    joints: tuple[JointSpec, ...]
    base_pose: Pose = field(default_factory=Pose.identity)
    ee_offset: Pose = field(default_factory=Pose.identity)
    redundant_indices: tuple[int, ...] = ()
    excluded_indices: tuple[int, ...] = ()
    link_radii: tuple[float, ...] = ()
    self_collision_skip: tuple[tuple[int, int], ...] = ()
    tool_standoff: float = 0.10

    def __post_init__(self):
        if len(self.joints) != 8:
            raise ValueError(f"expected 8 joints, got {len(self.joints)}")
        n = len(self.joints)
        red = tuple(sorted(int(i) for i in self.redundant_indices))
        exc = tuple(sorted(int(i) for i in self.excluded_indices))
        for i in red + exc:
            if not 0 <= i < n:
                raise ValueError(f"joint index {i} out of range")
        if set(red) & set(exc):
            raise ValueError("redundant and excluded joint sets must be disjoint")
        radii = tuple(self.link_radii) if self.link_radii else (0.0,) * n
        if len(radii) != n:
            raise ValueError("link_radii must have one entry per joint")
        object.__setattr__(self, "redundant_indices", red)
        object.__setattr__(self, "excluded_indices", exc)
        object.__setattr__(self, "link_radii", radii)
        object.__setattr__(self, "self_collision_skip",
                           tuple(tuple(sorted(p)) for p in self.self_collision_skip))

    # -- derived index sets -------------------------------------------------

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def active_indices(self) -> tuple[int, ...]:
        """All joints IK may move: everything not excluded."""
        return tuple(i for i in range(self.n_joints) if i not in self.excluded_indices)

    @property
    def nonredundant_indices(self) -> tuple[int, ...]:
        return tuple(i for i in self.active_indices if i not in self.redundant_indices)

    def limits_array(self) -> np.ndarray:
        return np.array([j.limits for j in self.joints])

    def effort_limits(self) -> np.ndarray:
        return np.array([j.effort_limit for j in self.joints])

    def with_frozen(self, subset: tuple[int, ...] | list[int]) -> "RobotModel":
        """Model variant where joints outside `subset` are excluded from IK.

        Frozen joints still participate in fk and collision geometry; the
        redundant set shrinks to its intersection with `subset`.
        """
        subset = set(subset)
        frozen = tuple(sorted(set(range(self.n_joints)) - subset))
        red = tuple(i for i in self.redundant_indices if i in subset)
        return replace(self, excluded_indices=tuple(sorted(set(self.excluded_indices) | set(frozen))),
                       redundant_indices=red)

    def with_base_pose(self, base_pose: Pose) -> "RobotModel":
        return replace(self, base_pose=base_pose)

    # -- cached DH constants -------------------------------------------------

    def _kin(self) -> dict:
        cache = self.__dict__.get("_kin_cache")
        if cache is None:
            n = self.n_joints
            tx = np.zeros((n, 4, 4))
            for i, j in enumerate(self.joints):
                c, s = np.cos(j.dh_alpha), np.sin(j.dh_alpha)
                tx[i] = [[1, 0, 0, j.dh_a], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1]]
            cache = {
                "tx": tx,
                "theta0": np.array([j.dh_theta for j in self.joints]),
                "d0": np.array([j.dh_d for j in self.joints]),
                "is_rev": np.array([j.kind == REVOLUTE for j in self.joints]),
                "is_pri": np.array([j.kind == PRISMATIC for j in self.joints]),
                "base": self.base_pose.as_matrix(),
            }
            object.__setattr__(self, "_kin_cache", cache)
        return cache

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("_kin_cache", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)


def _as_batch(q) -> tuple[np.ndarray, bool]:
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        return q[None, :], True
    return q, False


def fk_frames_batch(model: RobotModel, q) -> np.ndarray:
    """All joint-frame transforms for configs q (B, n) -> (B, n+1, 4, 4).

    Frame 0 is the base pose; frame i is the cumulative transform through
    joint i. The last frame is the EE pose.
    """
    q, _ = _as_batch(q)
    kin = model._kin()
    b, n = q.shape
    if n != model.n_joints:
        raise ValueError(f"expected {model.n_joints} joint values, got {n}")
    theta = np.where(kin["is_rev"], kin["theta0"] + q, kin["theta0"])
    d = np.where(kin["is_pri"], kin["d0"] + q, kin["d0"])
    frames = np.empty((b, n + 1, 4, 4))
    frames[:, 0] = kin["base"]
    ct, st = np.cos(theta), np.sin(theta)
    for i in range(n):
        tz = np.zeros((b, 4, 4))
        tz[:, 0, 0] = ct[:, i]
        tz[:, 0, 1] = -st[:, i]
        tz[:, 1, 0] = st[:, i]
        tz[:, 1, 1] = ct[:, i]
        tz[:, 2, 2] = 1.0
        tz[:, 2, 3] = d[:, i]
        tz[:, 3, 3] = 1.0
        frames[:, i + 1] = frames[:, i] @ (kin["tx"][i] @ tz)
    return frames


def fk_batch(model: RobotModel, q) -> np.ndarray:
    """EE poses for configs q (B, n) -> homogeneous matrices (B, 4, 4)."""
    return fk_frames_batch(model, q)[:, -1]


def fk(model: RobotModel, q) -> Pose:
    """Base-to-EE pose of the chain at configuration q."""
    return Pose.from_matrix(fk_batch(model, q)[0])


def joint_origins_batch(model: RobotModel, q) -> np.ndarray:
    """Joint-frame origins (B, n+1, 3), the endpoints of the link capsules."""
    return fk_frames_batch(model, q)[:, :, :3, 3]


def _jacobian_cols(model: RobotModel, frames: np.ndarray):
    """Per-joint axis vectors and origins from a frame stack (B, n+1, 4, 4)."""
    kin = model._kin()
    z = frames[:, 1:, :3, 2]
    o = frames[:, 1:, :3, 3]
    return z, o, kin["is_rev"], kin["is_pri"]


def jacobian_space_batch(model: RobotModel, q, frames=None) -> np.ndarray:
    """Space-twist Jacobian (B, 6, n): rows [v; w] of dT/dq_i * T^-1.

    The linear rows are the velocity of the body-fixed point instantaneously
    coincident with the base origin, not of the EE point itself.
    """
    qb, _ = _as_batch(q)
    if frames is None:
        frames = fk_frames_batch(model, qb)
    z, o, is_rev, is_pri = _jacobian_cols(model, frames)
    b, n = qb.shape
    jac = np.zeros((b, 6, n))
    rev = np.where(is_rev)[0]
    pri = np.where(is_pri)[0]
    if rev.size:
        jac[:, :3, rev] = np.cross(o[:, rev], z[:, rev]).transpose(0, 2, 1)
        jac[:, 3:, rev] = z[:, rev].transpose(0, 2, 1)
    if pri.size:
        jac[:, :3, pri] = z[:, pri].transpose(0, 2, 1)
    return jac


def jacobian_body_batch(model: RobotModel, q, frames=None) -> np.ndarray:
    """Body-twist Jacobian (B, 6, n) in the EE frame.

    Linear rows are the EE-point velocity expressed in EE coordinates; angular
    rows 3 and 4 are the roll/pitch rows used by the manipulability index.
    """
    qb, _ = _as_batch(q)
    if frames is None:
        frames = fk_frames_batch(model, qb)
    z, o, is_rev, is_pri = _jacobian_cols(model, frames)
    rot = frames[:, -1, :3, :3]
    p = frames[:, -1, :3, 3]
    b, n = qb.shape
    jac = np.zeros((b, 6, n))
    rev = np.where(is_rev)[0]
    pri = np.where(is_pri)[0]
    if rev.size:
        v = np.cross(z[:, rev], p[:, None, :] - o[:, rev])
        jac[:, :3, rev] = (v @ rot).transpose(0, 2, 1)
        jac[:, 3:, rev] = (z[:, rev] @ rot).transpose(0, 2, 1)
    if pri.size:
        jac[:, :3, pri] = (z[:, pri] @ rot).transpose(0, 2, 1)
    return jac


def jacobian(model: RobotModel, q, frame: str = "space") -> np.ndarray:
    """6 x n twist Jacobian in the requested frame ('space' or 'body')."""
    if frame == "space":
        return jacobian_space_batch(model, q)[0]
    if frame == "body":
        return jacobian_body_batch(model, q)[0]
    raise ValueError(f"frame must be 'space' or 'body', got {frame!r}")


def adjoint(pose: Pose) -> np.ndarray:
    """6x6 adjoint of a pose, mapping body twists to space twists."""
    from .se3 import skew

    ad = np.zeros((6, 6))
    ad[:3, :3] = pose.rotation
    ad[:3, 3:] = skew(pose.translation) @ pose.rotation
    ad[3:, 3:] = pose.rotation
    return ad


def partition_jacobian(jac: np.ndarray, model: RobotModel) -> tuple[np.ndarray, np.ndarray]:
    """Split Jacobian columns into (non-redundant, redundant); excluded dropped."""
    jac = np.asarray(jac, dtype=float)
    if jac.ndim != 2 or jac.shape[1] != model.n_joints:
        raise ValueError(f"expected a 6x{model.n_joints} Jacobian, got shape {jac.shape}")
    return jac[:, model.nonredundant_indices], jac[:, model.redundant_indices]


def within_limits(model: RobotModel, q, margin: float = 0.0) -> bool:
    q = np.asarray(q, dtype=float)
    lim = model.limits_array()
    return bool(np.all(q >= lim[:, 0] - margin) and np.all(q <= lim[:, 1] + margin))


def clamp_to_limits(model: RobotModel, q) -> np.ndarray:
    lim = model.limits_array()
    return np.clip(np.asarray(q, dtype=float), lim[:, 0], lim[:, 1])


# -- configuration file ------------------------------------------------------


def robot_from_dict(cfg: dict) -> RobotModel:
    joints = tuple(
        JointSpec(
            kind=row["kind"],
            dh_a=float(row.get("a", 0.0)),
            dh_alpha=float(row.get("alpha", 0.0)),
            dh_d=float(row.get("d", 0.0)),
            dh_theta=float(row.get("theta", 0.0)),
            limits=tuple(row.get("limits", (-np.pi, np.pi))),
            effort_limit=float(row.get("effort_limit", np.inf)),
        )
        for row in cfg["joints"]
    )
    base = Pose.from_json_dict(cfg["base_pose"]) if "base_pose" in cfg else Pose.identity()
    ee = Pose.from_json_dict(cfg["ee_offset"]) if "ee_offset" in cfg else Pose.identity()
    return RobotModel(
        joints=joints,
        base_pose=base,
        ee_offset=ee,
        redundant_indices=tuple(cfg.get("redundant_indices", ())),
        excluded_indices=tuple(cfg.get("excluded_indices", ())),
        link_radii=tuple(cfg.get("link_radii", ())),
        self_collision_skip=tuple(tuple(p) for p in cfg.get("self_collision_skip", ())),
        tool_standoff=float(cfg.get("tool_standoff", 0.10)),
    )


def load_robot(path) -> RobotModel:
    with open(path) as fh:
        return robot_from_dict(json.load(fh))


def default_robot() -> RobotModel:
    """The eight-joint in-bore robot shipped with the package (crane8.json)."""
    text = resources.files("inbore_kin.data").joinpath("crane8.json").read_text()
    return robot_from_dict(json.loads(text))
