"""Classed obstacle environment with batched minimum-distance queries.

Obstacles carry a class tag (bore, patient, robot_self) so the planner can
price clearance to the scanner and to the patient separately. Robot links are
capsules between consecutive joint-frame origins; links with zero radius are
virtual (the gross-stage rails collapsed into the chain) and carry no
geometry.

Distance conventions: positive = clearance, negative = penetration depth.
Convex meshes use the halfspace-maximum distance, which is exact near faces
and underestimates by well under 1% of the distance near edges; all other
shape pairs are exact.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .se3 import Pose, rot_mat
from .robot import RobotModel, joint_origins_batch, _as_batch

log = logging.getLogger(__name__)

CLASS_BORE = "bore"
CLASS_PATIENT = "patient"
CLASS_ROBOT_SELF = "robot_self"
ALL_CLASSES = frozenset({CLASS_BORE, CLASS_PATIENT, CLASS_ROBOT_SELF})

_TERNARY_ITERS = 18
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


# -- segment utilities --------------------------------------------------------


def _point_segment_distance(p, a, b) -> np.ndarray:
    """Distances (broadcast) from points p (..., 3) to segments (a, b) (..., 3)."""
    ab = b - a
    denom = np.einsum("...i,...i", ab, ab)
    t = np.where(denom > 0, np.einsum("...i,...i", p - a, ab) / np.maximum(denom, 1e-30), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


def segment_segment_distance(p0, p1, q0, q1) -> np.ndarray:
    """Minimum distance between segment batches (..., 3), Ericson's method."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.einsum("...i,...i", d1, d1)
    e = np.einsum("...i,...i", d2, d2)
    f = np.einsum("...i,...i", d2, r)
    c = np.einsum("...i,...i", d1, r)
    b = np.einsum("...i,...i", d1, d2)
    denom = a * e - b * b

    s = np.where(denom > 1e-30, (b * f - c * e) / np.where(denom > 1e-30, denom, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    t = np.where(e > 1e-30, (b * s + f) / np.where(e > 1e-30, e, 1.0), 0.0)
    t_clamped = np.clip(t, 0.0, 1.0)
    # Re-solve s where t was clamped.
    s = np.where(np.abs(t - t_clamped) > 0,
                 np.clip(np.where(a > 1e-30, (b * t_clamped - c) / np.where(a > 1e-30, a, 1.0), 0.0), 0.0, 1.0),
                 s)
    cp = p0 + s[..., None] * d1
    cq = q0 + t_clamped[..., None] * d2
    return np.linalg.norm(cp - cq, axis=-1)


def _min_over_segment(point_fn, p0, p1, iters: int = _TERNARY_ITERS) -> np.ndarray:
    """Golden-section minimum of a convex point-distance along segments (M, 3).

    point_fn maps points (M, 3) -> signed distances (M,). Distance to a convex
    set is convex along a line, so the section search is exact; the endpoint
    values are folded in as a safeguard.
    """
    lo = np.zeros(p0.shape[0])
    hi = np.ones(p0.shape[0])
    d = p1 - p0

    def eval_at(t):
        return point_fn(p0 + t[:, None] * d)

    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1 = eval_at(x1)
    f2 = eval_at(x2)
    for _ in range(iters):
        take1 = f1 < f2
        hi = np.where(take1, x2, hi)
        lo = np.where(take1, lo, x1)
        x1 = np.where(take1, hi - _INV_PHI * (hi - lo), x2)
        x2 = np.where(take1, x2, lo + _INV_PHI * (hi - lo))
        new1 = eval_at(x1)
        f1, f2 = np.where(take1, new1, f2), np.where(take1, f2, eval_at(x2))
    mid = eval_at(0.5 * (lo + hi))
    return np.minimum(mid, np.minimum(eval_at(np.zeros_like(lo)), eval_at(np.ones_like(lo))))


def _segment_halfspace_min(p0, p1, normals, offsets) -> np.ndarray:
    """Exact minimum over segments of the halfspace-max distance to a hull.

    z(t) = max_f(a_f + t*b_f) is convex piecewise-linear in the segment
    parameter, so the minimum is located by intersecting the supporting lines
    of the current bracket; each refinement is elementwise in the
    precomputed affine coefficients. Finite convergence, capped at 16 rounds.
    """
    a = p0 @ normals.T + offsets
    b = (p1 - p0) @ normals.T

    def envelope(t):
        vals = a + t[:, None] * b
        arg = np.argmax(vals, axis=1)
        rows = np.arange(len(arg))
        return vals[rows, arg], b[rows, arg]

    m = p0.shape[0]
    t_lo = np.zeros(m)
    t_hi = np.ones(m)
    z_lo, g_lo = envelope(t_lo)
    z_hi, g_hi = envelope(t_hi)
    best = np.minimum(z_lo, z_hi)
    open_rows = (g_lo < 0.0) & (g_hi > 0.0)
    for _ in range(16):
        if not open_rows.any():
            break
        denom = np.where(open_rows, g_hi - g_lo, 1.0)
        t_new = np.where(open_rows,
                         ((z_lo - g_lo * t_lo) - (z_hi - g_hi * t_hi)) / denom,
                         t_lo)
        t_new = np.clip(t_new, t_lo, t_hi)
        z_new, g_new = envelope(t_new)
        best = np.where(open_rows, np.minimum(best, z_new), best)
        # The bracket-line intersection value is a lower bound on the min.
        z_cross = z_lo + g_lo * (t_new - t_lo)
        done = z_new <= z_cross + 1e-12
        go_lo = g_new < 0.0
        t_lo = np.where(open_rows & go_lo, t_new, t_lo)
        z_lo = np.where(open_rows & go_lo, z_new, z_lo)
        g_lo = np.where(open_rows & go_lo, g_new, g_lo)
        t_hi = np.where(open_rows & ~go_lo, t_new, t_hi)
        z_hi = np.where(open_rows & ~go_lo, z_new, z_hi)
        g_hi = np.where(open_rows & ~go_lo, g_new, g_hi)
        open_rows = open_rows & ~done & (g_new != 0.0) & (t_hi - t_lo > 1e-12)
    return best


# -- obstacles ----------------------------------------------------------------

SHAPES = ("cylinder_shell", "capsule", "sphere", "box", "convex_mesh")


@dataclass(frozen=True)
class Obstacle:
    """One classed collision shape, posed in the scene frame.

    dimensions keys by shape:
      cylinder_shell: radius, length (inward-facing, axis = pose z)
      capsule:        p0, p1 (local endpoints), radius
      sphere:         radius
      box:            half_extents (3,)
      convex_mesh:    vertices (N, 3) local, must be convex
    """

    klass: str
    shape: str
    pose: Pose = field(default_factory=Pose.identity)
    dimensions: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.klass not in ALL_CLASSES:
            raise ValueError(f"unknown obstacle class {self.klass!r}")
        if self.shape not in SHAPES:
            raise ValueError(f"unknown obstacle shape {self.shape!r}")
        self._validate_dims()

    def _validate_dims(self):
        d = self.dimensions
        positive = {
            "cylinder_shell": ("radius", "length"),
            "capsule": ("radius",),
            "sphere": ("radius",),
        }.get(self.shape, ())
        for key in positive:
            if d.get(key, 0.0) <= 0.0:
                raise ValueError(f"{self.shape} requires positive {key}")
        if self.shape == "box":
            he = np.asarray(d.get("half_extents", ()), dtype=float)
            if he.shape != (3,) or np.any(he <= 0):
                raise ValueError("box requires 3 positive half_extents")
        if self.shape == "convex_mesh":
            v = np.asarray(d.get("vertices", ()), dtype=float)
            if v.ndim != 2 or v.shape[0] < 4 or v.shape[1] != 3:
                raise ValueError("convex_mesh requires at least 4 vertices")

    def _geom(self) -> dict:
        cache = self.__dict__.get("_geom_cache")
        if cache is None:
            cache = self._build_geom()
            object.__setattr__(self, "_geom_cache", cache)
        return cache

    def _build_geom(self) -> dict:
        d = self.dimensions
        if self.shape == "sphere":
            return {"center": self.pose.translation, "radius": float(d["radius"])}
        if self.shape == "capsule":
            return {
                "p0": self.pose.transform_point(d["p0"]),
                "p1": self.pose.transform_point(d["p1"]),
                "radius": float(d["radius"]),
            }
        if self.shape == "cylinder_shell":
            axis = self.pose.z_axis()
            return {
                "center": self.pose.translation,
                "axis": axis / np.linalg.norm(axis),
                "radius": float(d["radius"]),
                "half_length": 0.5 * float(d["length"]),
            }
        if self.shape == "box":
            return {
                "rot": self.pose.rotation,
                "center": self.pose.translation,
                "half": np.asarray(d["half_extents"], dtype=float),
            }
        verts = self.pose.transform_points(np.asarray(d["vertices"], dtype=float))
        hull = ConvexHull(verts)
        eqs = hull.equations  # rows [n, offset] with n.x + offset <= 0 inside
        return {"normals": eqs[:, :3].copy(), "offsets": eqs[:, 3].copy(),
                "vertices": verts[hull.vertices]}

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("_geom_cache", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    # signed point distance, batched over points (M, 3)
    def point_distance(self, pts: np.ndarray) -> np.ndarray:
        g = self._geom()
        if self.shape == "sphere":
            return np.linalg.norm(pts - g["center"], axis=-1) - g["radius"]
        if self.shape == "capsule":
            return _point_segment_distance(pts, g["p0"], g["p1"]) - g["radius"]
        if self.shape == "cylinder_shell":
            rel = pts - g["center"]
            ax = rel @ g["axis"]
            radial = np.linalg.norm(rel - ax[:, None] * g["axis"], axis=-1)
            inside_span = np.abs(ax) <= g["half_length"]
            return np.where(inside_span, g["radius"] - radial, np.inf)
        if self.shape == "box":
            local = (pts - g["center"]) @ g["rot"]
            excess = np.abs(local) - g["half"]
            outside = np.linalg.norm(np.maximum(excess, 0.0), axis=-1)
            inside = np.minimum(np.max(excess, axis=-1), 0.0)
            return outside + inside
        # convex mesh: halfspace maximum
        return np.max(pts @ g["normals"].T + g["offsets"], axis=-1)

    def segment_distance(self, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
        """Signed distances from segments (M, 3),(M, 3) to this obstacle."""
        if self.shape == "sphere":
            g = self._geom()
            return _point_segment_distance(g["center"], p0, p1) - g["radius"]
        if self.shape == "capsule":
            g = self._geom()
            q0 = np.broadcast_to(g["p0"], p0.shape)
            q1 = np.broadcast_to(g["p1"], p0.shape)
            return segment_segment_distance(p0, p1, q0, q1) - g["radius"]
        if self.shape == "cylinder_shell":
            return self._segment_shell_distance(p0, p1)
        if self.shape == "convex_mesh":
            g = self._geom()
            return _segment_halfspace_min(p0, p1, g["normals"], g["offsets"])
        return _min_over_segment(self.point_distance, p0, p1)

    def _segment_shell_distance(self, p0, p1) -> np.ndarray:
        # Clip segment to the axial span; radial norm is convex along the
        # segment so its maximum sits at the clipped endpoints.
        g = self._geom()
        a0 = (p0 - g["center"]) @ g["axis"]
        a1 = (p1 - g["center"]) @ g["axis"]
        h = g["half_length"]
        da = a1 - a0
        safe = np.where(np.abs(da) > 1e-30, da, 1.0)
        t_lo = np.clip(np.minimum((-h - a0) / safe, (h - a0) / safe), 0.0, 1.0)
        t_hi = np.clip(np.maximum((-h - a0) / safe, (h - a0) / safe), 0.0, 1.0)
        parallel = np.abs(da) <= 1e-30
        t_lo = np.where(parallel, 0.0, t_lo)
        t_hi = np.where(parallel, 1.0, t_hi)
        in_span = np.where(parallel, np.abs(a0) <= h, t_lo < t_hi)

        d = p1 - p0

        def radial(t):
            pts = p0 + t[:, None] * d
            rel = pts - g["center"]
            ax = rel @ g["axis"]
            return np.linalg.norm(rel - ax[:, None] * g["axis"], axis=-1)

        r_max = np.maximum(radial(t_lo), radial(t_hi))
        return np.where(in_span, g["radius"] - r_max, np.inf)


@dataclass(frozen=True)
class Environment:
    """Immutable obstacle set with a bore radius and padding epsilon."""

    obstacles: tuple[Obstacle, ...]
    bore_radius: float = 0.35
    padding: float = 0.010

    def __post_init__(self):
        if self.bore_radius <= 0.0:
            raise ValueError("bore_radius must be positive")
        if self.padding < 0.0:
            raise ValueError("padding must be non-negative")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def by_class(self, classes) -> tuple[Obstacle, ...]:
        classes = set(classes)
        return tuple(o for o in self.obstacles if o.klass in classes)


# -- robot link geometry -------------------------------------------------------


def link_geometry(model: RobotModel, q) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """Collision capsules (p0, p1, radius), one per link, posed by fk.

    Capsule i spans the origins of joint frames i and i+1; zero-radius links
    are still returned so the count always equals the link count.
    """
    origins = joint_origins_batch(model, q)[0]
    return [(origins[i], origins[i + 1], model.link_radii[i]) for i in range(model.n_joints)]


def _link_segments_batch(model: RobotModel, q_batch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    origins = joint_origins_batch(model, q_batch)
    return origins[:, :-1], origins[:, 1:], np.asarray(model.link_radii)


def _self_collision_pairs(model: RobotModel) -> list[tuple[int, int]]:
    radii = model.link_radii
    skip = set(model.self_collision_skip)
    pairs = []
    n = model.n_joints
    for i in range(n):
        for j in range(i + 2, n):
            if radii[i] <= 0.0 or radii[j] <= 0.0:
                continue
            if (i, j) in skip:
                continue
            pairs.append((i, j))
    return pairs


def distance_to_class(env: Environment, model: RobotModel, q, class_filter) -> float:
    """Minimum distance from the robot's link capsules to obstacles of the
    given classes; `robot_self` measures non-adjacent link pairs instead.
    Negative values are penetration depths.
    """
    return float(distance_to_class_batch(env, model, np.asarray(q, dtype=float)[None, :],
                                         class_filter)[0])


def distance_to_class_batch(env: Environment, model: RobotModel, q_batch,
                            class_filter, link_mask=None) -> np.ndarray:
    """Batched distance_to_class over configurations (B, n) -> (B,)."""
    q_batch, _ = _as_batch(q_batch)
    origins = joint_origins_batch(model, q_batch)
    return distance_from_origins(env, model, origins, class_filter, link_mask)


def distance_from_origins(env: Environment, model: RobotModel, origins,
                          class_filter, link_mask=None) -> np.ndarray:
    """distance_to_class from precomputed joint-frame origins (B, n+1, 3).

    Lets callers that already ran forward kinematics skip recomputing it.
    """
    class_filter = set(class_filter)
    unknown = class_filter - ALL_CLASSES
    if unknown:
        raise ValueError(f"unknown obstacle classes {sorted(unknown)}")
    origins = np.asarray(origins, dtype=float)
    b = origins.shape[0]
    p0, p1 = origins[:, :-1], origins[:, 1:]
    radii = np.asarray(model.link_radii)
    best = np.full(b, np.inf)

    active = radii > 0.0
    if link_mask is not None:
        active = active & np.asarray(link_mask, dtype=bool)
    idx = np.where(active)[0]

    env_classes = class_filter - {CLASS_ROBOT_SELF}
    if env_classes and idx.size:
        flat0 = p0[:, idx].reshape(-1, 3)
        flat1 = p1[:, idx].reshape(-1, 3)
        flat_r = np.tile(radii[idx], b)
        for obs in env.by_class(env_classes):
            d = obs.segment_distance(flat0, flat1) - flat_r
            best = np.minimum(best, d.reshape(b, -1).min(axis=1))

    if CLASS_ROBOT_SELF in class_filter:
        pairs = _self_collision_pairs(model)
        if link_mask is not None:
            mask = np.asarray(link_mask, dtype=bool)
            pairs = [(i, j) for (i, j) in pairs if mask[i] and mask[j]]
        for i, j in pairs:
            d = segment_segment_distance(p0[:, i], p1[:, i], p0[:, j], p1[:, j]) \
                - radii[i] - radii[j]
            best = np.minimum(best, d)
    return best


# -- synthetic patient bodies ---------------------------------------------------


@dataclass(frozen=True)
class PatientProxy:
    """Parametric stand-in for a scanned human body on the couch.

    Torso is an ellipsoid (kept as a sampled convex hull), head and legs are
    capsules; vertices/normals sample the torso surface for candidate
    insertion poses.
    """

    profile: str
    sigma_bmi: float
    torso_center: np.ndarray
    torso_semi_axes: np.ndarray
    limbs: tuple[tuple[np.ndarray, np.ndarray, float], ...]
    vertices: np.ndarray
    normals: np.ndarray
    collision_vertices: np.ndarray

    def as_obstacles(self) -> list[Obstacle]:
        obs = [Obstacle(CLASS_PATIENT, "convex_mesh",
                        dimensions={"vertices": self.collision_vertices}, name="torso")]
        for k, (a, b, r) in enumerate(self.limbs):
            obs.append(Obstacle(CLASS_PATIENT, "capsule",
                                dimensions={"p0": a, "p1": b, "radius": r},
                                name=f"limb{k}"))
        return obs


_PROFILES = {
    # lateral, anterior-posterior, longitudinal semi-axes at sigma = 0
    "male": {"semi_axes": (0.190, 0.115, 0.320), "limb_radius": 0.065, "head_radius": 0.090},
    "female": {"semi_axes": (0.175, 0.108, 0.300), "limb_radius": 0.058, "head_radius": 0.085},
}
_BMI_GROWTH = 0.11  # fractional growth of lateral/AP semi-axes per sigma


def _fibonacci_directions(n: int) -> np.ndarray:
    k = np.arange(n)
    phi = math.pi * (3.0 - math.sqrt(5.0))
    y = 1.0 - 2.0 * (k + 0.5) / n
    r = np.sqrt(np.maximum(1.0 - y * y, 0.0))
    theta = phi * k
    return np.stack([r * np.cos(theta), y, r * np.sin(theta)], axis=1)


def generate_patient(profile: str, sigma_bmi: float, couch_y: float = -0.12,
                     torso_z: float = 0.55, n_vertices: int = 600,
                     n_collision_vertices: int = 240) -> PatientProxy:
    """Deterministic body proxy scaled by a BMI-like sigma in [0, 3].

    Larger sigma widens the torso laterally and anteriorly, strictly reducing
    bore clearance. The body lies along the bore axis (z) on the couch plane.
    """
    if profile not in _PROFILES:
        raise ValueError(f"unknown profile {profile!r}; expected one of {sorted(_PROFILES)}")
    if not 0.0 <= sigma_bmi <= 3.0:
        raise ValueError("sigma_bmi must lie in [0, 3]")
    spec = _PROFILES[profile]
    ax0, ay0, az0 = spec["semi_axes"]
    scale = 1.0 + _BMI_GROWTH * sigma_bmi
    semi = np.array([ax0 * scale, ay0 * scale, az0 * (1.0 + 0.02 * sigma_bmi)])
    center = np.array([0.0, couch_y + semi[1], torso_z])

    dirs = _fibonacci_directions(n_vertices)
    verts = center + dirs * semi
    normals = dirs / semi
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    # Coarser hull for distance queries; candidates keep the fine sampling.
    coll = center + _fibonacci_directions(n_collision_vertices) * semi

    r_limb = spec["limb_radius"] * scale
    r_head = spec["head_radius"] * (1.0 + 0.03 * sigma_bmi)
    head_y = couch_y + r_head
    neck_z = center[2] + semi[2]
    hip_z = center[2] - semi[2]
    limbs = (
        (np.array([0.0, head_y, neck_z + 0.02]), np.array([0.0, head_y, neck_z + 0.20]), r_head),
        (np.array([-0.09, couch_y + r_limb, hip_z]), np.array([-0.11, couch_y + r_limb, hip_z - 0.75]), r_limb),
        (np.array([0.09, couch_y + r_limb, hip_z]), np.array([0.11, couch_y + r_limb, hip_z - 0.75]), r_limb),
    )
    return PatientProxy(profile, float(sigma_bmi), center, semi, limbs, verts, normals, coll)


# -- insertion candidates --------------------------------------------------------


@dataclass(frozen=True)
class RegionMask:
    """Surface band accepted as candidate insertion sites."""

    z_range: tuple[float, float]
    min_normal_y: float = -0.15

    def accepts(self, vertex, normal) -> bool:
        return self.z_range[0] <= vertex[2] <= self.z_range[1] and normal[1] >= self.min_normal_y


def default_region_mask(proxy: PatientProxy) -> RegionMask:
    """Abdominal plus thoracic band: the middle 70% of the torso length."""
    c, semi = proxy.torso_center, proxy.torso_semi_axes
    return RegionMask((c[2] - 0.7 * semi[2], c[2] + 0.7 * semi[2]))


def sample_insertion_candidates(proxy: PatientProxy, mask: RegionMask | None = None,
                                max_count: int | None = None) -> list[Pose]:
    """Candidate needle poses: translation at a surface vertex, Z-axis along
    the outward normal. Degenerate normals are skipped (count logged).
    """
    if mask is None:
        mask = default_region_mask(proxy)
    z = np.array([0.0, 0.0, 1.0])
    poses = []
    skipped = 0
    for v, n in zip(proxy.vertices, proxy.normals):
        norm = np.linalg.norm(n)
        if norm < 1e-9:
            skipped += 1
            continue
        n = n / norm
        if not mask.accepts(v, n):
            continue
        axis = np.cross(z, n)
        axis_norm = np.linalg.norm(axis)
        cosang = float(np.clip(n @ z, -1.0, 1.0))
        if axis_norm < 1e-12:
            rot = np.eye(3) if cosang > 0 else rot_mat(np.array([1.0, 0.0, 0.0]), math.pi)
        else:
            rot = rot_mat(axis / axis_norm, math.acos(cosang))
        poses.append(Pose(rot, v))
    if skipped:
        log.warning("skipped %d candidate vertices with degenerate normals", skipped)
    if not poses:
        raise ValueError("region mask selected no candidate vertices")
    if max_count is not None and len(poses) > max_count:
        stride = len(poses) / max_count
        poses = [poses[int(i * stride)] for i in range(max_count)]
    return poses


# -- scene construction ------------------------------------------------------------


def make_bore(radius: float = 0.35, length: float = 1.6) -> Obstacle:
    return Obstacle(CLASS_BORE, "cylinder_shell",
                    dimensions={"radius": radius, "length": length}, name="bore")


def make_couch(top_y: float = -0.12, half_width: float = 0.25,
               z_center: float = 0.3, half_length: float = 1.0) -> Obstacle:
    thickness = 0.04
    pose = Pose(np.eye(3), np.array([0.0, top_y - thickness, z_center]))
    return Obstacle(CLASS_BORE, "box",
                    dimensions={"half_extents": np.array([half_width, thickness, half_length])},
                    pose=pose, name="couch")


def environment_from_dict(cfg: dict) -> Environment:
    obstacles = []
    for entry in cfg.get("obstacles", []):
        pose = Pose.from_json_dict(entry["pose"]) if "pose" in entry else Pose.identity()
        dims = {k: (np.asarray(v, dtype=float) if isinstance(v, list) else v)
                for k, v in entry.get("dimensions", {}).items()}
        obstacles.append(Obstacle(entry["class"], entry["shape"], pose, dims,
                                  name=entry.get("name", "")))
    return Environment(tuple(obstacles), bore_radius=float(cfg.get("bore_radius", 0.35)),
                       padding=float(cfg.get("padding", 0.010)))


def load_environment(path) -> Environment:
    with open(path) as fh:
        return environment_from_dict(json.load(fh))


# -- external meshes ----------------------------------------------------------------


def load_mesh_vertices(path) -> np.ndarray:
    """Vertices of an ASCII STL or OBJ file (for convex-flagged obstacles)."""
    path = str(path)
    verts = []
    with open(path) as fh:
        if path.lower().endswith(".obj"):
            for line in fh:
                parts = line.split()
                if len(parts) >= 4 and parts[0] == "v":
                    verts.append([float(x) for x in parts[1:4]])
        else:
            first = fh.readline()
            if not first.lstrip().startswith("solid"):
                raise ValueError("only ASCII STL is supported")
            for line in fh:
                parts = line.split()
                if len(parts) == 4 and parts[0] == "vertex":
                    verts.append([float(x) for x in parts[1:4]])
    if len(verts) < 4:
        raise ValueError(f"no usable vertices found in {path}")
    return np.unique(np.asarray(verts, dtype=float), axis=0)
