"""Rigid-transform algebra: rotations, poses, and needle-task pose errors.

The pose error deliberately measures only Z-axis misalignment: roll about
the needle axis is a free variable for every consumer in this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ROT_TOL = 1e-9
QUAT_NORM_TOL = 1e-6


def skew(v) -> np.ndarray:
    """3x3 cross-product matrix of a 3-vector."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def is_rotation(mat, tol: float = ROT_TOL) -> bool:
    """True when mat is orthonormal with determinant +1 within tol."""
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (3, 3):
        return False
    if not np.allclose(mat.T @ mat, np.eye(3), atol=tol):
        return False
    return abs(np.linalg.det(mat) - 1.0) <= tol


def rot_mat(axis, angle: float) -> np.ndarray:
    """Rotation of `angle` radians about the unit 3-vector `axis` (Rodrigues).

    Raises ValueError when the axis is not unit length to 1e-9.
    """
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"rotation axis must be unit length, got |axis| = {norm}")
    k = skew(axis)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rot_to_quat(mat) -> np.ndarray:
    """Unit quaternion [w, x, y, z] for a rotation matrix (Shepperd's method)."""
    m = np.asarray(mat, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quat_to_rot(q) -> np.ndarray:
    """Rotation matrix from a quaternion [w, x, y, z]; normalizes the input.

    Raises ValueError when the quaternion norm is not within 1e-6 of 1.
    """
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > QUAT_NORM_TOL:
        raise ValueError(f"quaternion norm {norm} differs from 1 by more than {QUAT_NORM_TOL}")
    w, x, y, z = q / norm
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid transform in SE(3): rotation matrix plus translation in meters.

    Immutable after construction; safe to share across threads.
    """

    rotation: np.ndarray = field(default_factory=lambda: _frozen(np.eye(3)))
    translation: np.ndarray = field(default_factory=lambda: _frozen(np.zeros(3)))

    def __post_init__(self):
        rot = _frozen(self.rotation)
        trans = _frozen(self.translation)
        if rot.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if trans.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        if not is_rotation(rot):
            raise ValueError("rotation matrix is not in SO(3) to 1e-9")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, mat) -> "Pose":
        mat = np.asarray(mat, dtype=float)
        if mat.shape != (4, 4) or not np.allclose(mat[3], [0, 0, 0, 1], atol=1e-9):
            raise ValueError("expected a homogeneous 4x4 matrix")
        return cls(mat[:3, :3], mat[:3, 3])

    @classmethod
    def from_rt(cls, rotation, translation) -> "Pose":
        return cls(np.asarray(rotation, dtype=float), np.asarray(translation, dtype=float))

    def as_matrix(self) -> np.ndarray:
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def transform_point(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def transform_points(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.rotation.T + self.translation

    def z_axis(self) -> np.ndarray:
        return self.rotation[:, 2]

    def to_json_dict(self) -> dict:
        q = rot_to_quat(self.rotation)
        return {"t": [float(v) for v in self.translation], "q": [float(v) for v in q]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Pose":
        return cls(quat_to_rot(d["q"]), np.asarray(d["t"], dtype=float))

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)


def compose(a: Pose, b: Pose) -> Pose:
    """Homogeneous product a*b (apply b first, then a)."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


@dataclass(frozen=True)
class PoseError:
    """Position difference plus axis-angle Z-axis misalignment (roll-free)."""

    position_error: np.ndarray
    orientation_error: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position_error", _frozen(self.position_error))
        object.__setattr__(self, "orientation_error", _frozen(self.orientation_error))

    @property
    def position_norm(self) -> float:
        return float(np.linalg.norm(self.position_error))

    @property
    def orientation_norm(self) -> float:
        return float(np.linalg.norm(self.orientation_error))


def _orthogonal_unit(v: np.ndarray) -> np.ndarray:
    # Deterministic axis choice: smallest-index basis vector projected
    # orthogonal to v (skipping near-parallel ones).
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        perp = e - np.dot(e, v) * v
        norm = np.linalg.norm(perp)
        if norm > 1e-6:
            return perp / norm
    raise RuntimeError("no orthogonal direction found")  # pragma: no cover


def z_axis_error(z_target, z_current) -> np.ndarray:
    """Axis-angle vector rotating z_current onto z_target (magnitude in [0, pi])."""
    zt = np.asarray(z_target, dtype=float)
    zc = np.asarray(z_current, dtype=float)
    nt, nc = np.linalg.norm(zt), np.linalg.norm(zc)
    cosang = np.clip(np.dot(zt, zc) / (nt * nc), -1.0, 1.0)
    angle = math.acos(cosang)
    axis = np.cross(zt, zc)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        if cosang > 0.0:
            return np.zeros(3)
        # Antiparallel: any orthogonal axis works; pick deterministically.
        return math.pi * _orthogonal_unit(zc / nc)
    return angle * axis / norm


def pose_error(target: Pose, current: Pose) -> PoseError:
    """Pose difference used by the controller and goal tests.

    Position part is the plain translation difference; orientation part is
    the axis-angle between the Z-axes only, so rolling either pose about its
    own needle axis leaves the error unchanged.
    """
    return PoseError(
        target.translation - current.translation,
        z_axis_error(target.z_axis(), current.z_axis()),
    )
