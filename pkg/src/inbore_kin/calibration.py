"""Fiducial localization in synthetic CT volumes and closed-form rigid
registration, composing the robot/tracker/scanner calibration chain."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .se3 import Pose
from .robot import RobotModel, fk


class DegenerateGeometryError(ValueError):
    """Point set too degenerate (collinear/coincident) for registration."""


class AmbiguityError(RuntimeError):
    """Fiducial localization found the wrong number of blobs."""


@dataclass(frozen=True)
class PointSet:
    """Labeled 3-D points in meters."""

    points: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must be (N, 3)")
        object.__setattr__(self, "points", pts)
        if self.labels and len(self.labels) != len(pts):
            raise ValueError("labels must match point count")

    def __len__(self) -> int:
        return len(self.points)

    def transformed(self, pose: Pose) -> "PointSet":
        return PointSet(pose.transform_points(self.points), self.labels)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("id,x,y,z\n")
            for i, p in enumerate(self.points):
                label = self.labels[i] if self.labels else str(i)
                fh.write(f"{label},{p[0]:.9g},{p[1]:.9g},{p[2]:.9g}\n")

    @classmethod
    def from_csv(cls, path) -> "PointSet":
        labels, pts = [], []
        with open(path) as fh:
            header = fh.readline()
            if not header.lower().startswith("id"):
                raise ValueError("point CSV must start with an 'id,x,y,z' header")
            for line in fh:
                if not line.strip():
                    continue
                ident, x, y, z = line.strip().split(",")
                labels.append(ident)
                pts.append([float(x), float(y), float(z)])
        return cls(np.asarray(pts), tuple(labels))


@dataclass(frozen=True)
class RegistrationResult:
    transform: Pose
    rms: float


def register(p: PointSet, p_hat: PointSet) -> RegistrationResult:
    """Closed-form rigid transform T minimizing sum ||p_hat_i - T p_i||^2.

    Centroid-aligned orthogonal factor with a determinant guard against
    reflections; raises DegenerateGeometryError for fewer than three points
    or (near-)collinear geometry.
    """
    a = p.points
    b = p_hat.points
    if len(a) != len(b):
        raise ValueError("point sets must have equal cardinality")
    if len(a) < 3:
        raise DegenerateGeometryError("registration needs at least 3 points")
    ca = a.mean(axis=0)
    cb = b.mean(axis=0)
    a0 = a - ca
    b0 = b - cb
    cov = a0.T @ b0
    u, s, vt = np.linalg.svd(cov)
    spread = np.linalg.svd(a0, compute_uv=False)
    if spread[1] < 1e-9 * max(spread[0], 1e-12):
        raise DegenerateGeometryError("points are collinear or coincident")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    trans = cb - rot @ ca
    pose = Pose(rot, trans)
    residual = pose.transform_points(a) - b
    rms = float(np.sqrt(np.mean(np.sum(residual ** 2, axis=1))))
    return RegistrationResult(pose, rms)


@dataclass(frozen=True)
class VoxelVolume:
    """Scalar intensity grid in HU with scanner-frame placement."""

    intensities: np.ndarray
    spacing: np.ndarray
    origin: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        vol = np.asarray(self.intensities)
        if vol.ndim != 3:
            raise ValueError("intensities must be a 3-D grid")
        spacing = np.broadcast_to(np.asarray(self.spacing, dtype=float), (3,)).copy()
        if np.any(spacing <= 0):
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "intensities", vol)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dimensions(self) -> tuple[int, int, int]:
        return self.intensities.shape

    def index_to_point(self, idx) -> np.ndarray:
        return self.origin.transform_points(np.asarray(idx, dtype=float) * self.spacing)


def save_volume(vol: VoxelVolume, header_path) -> None:
    """JSON header plus little-endian int16 raw intensities alongside."""
    header_path = Path(header_path)
    raw_path = header_path.with_suffix(".raw")
    header = {
        "dimensions": list(vol.dimensions),
        "spacing": vol.spacing.tolist(),
        "origin": vol.origin.to_json_dict(),
        "raw_file": raw_path.name,
        "dtype": "int16-le",
    }
    header_path.write_text(json.dumps(header, indent=1))
    vol.intensities.astype("<i2").tofile(raw_path)


def load_volume(header_path) -> VoxelVolume:
    header_path = Path(header_path)
    header = json.loads(header_path.read_text())
    raw = np.fromfile(header_path.parent / header["raw_file"], dtype="<i2")
    dims = tuple(header["dimensions"])
    if raw.size != int(np.prod(dims)):
        raise ValueError("raw intensity size does not match header dimensions")
    return VoxelVolume(raw.reshape(dims), np.asarray(header["spacing"]),
                       Pose.from_json_dict(header["origin"]))


def localize_fiducials(vol: VoxelVolume, threshold: float,
                       expected_count: int) -> PointSet:
    """Intensity-weighted centroids of connected above-threshold components.

    Raises AmbiguityError (listing the blobs found) unless exactly
    expected_count components exist; output is sorted by blob size,
    largest first, in scanner coordinates.
    """
    mask = vol.intensities > threshold
    labeled, n_found = ndimage.label(mask)
    if n_found != expected_count:
        sizes = ndimage.sum_labels(mask, labeled, index=range(1, n_found + 1))
        raise AmbiguityError(
            f"expected {expected_count} fiducials, found {n_found} "
            f"(blob voxel counts: {[int(s) for s in sizes]})")
    # Background-subtracted weights make the centroid insensitive to which
    # partial-volume edge voxels clear the threshold.
    weights = vol.intensities.astype(float) - threshold
    centroids = []
    sizes = []
    for lab in range(1, n_found + 1):
        sel = labeled == lab
        w = weights[sel]
        idx = np.argwhere(sel)
        centroids.append((idx * w[:, None]).sum(axis=0) / w.sum())
        sizes.append(sel.sum())
    order = np.argsort(sizes)[::-1]
    pts = vol.index_to_point(np.asarray(centroids)[order])
    return PointSet(pts, tuple(str(i) for i in range(len(pts))))


def make_fiducial_volume(centers_scanner: np.ndarray, dims=(96, 96, 96),
                         spacing=2.0e-3, origin: Pose | None = None,
                         sphere_radius: float = 4.0e-3,
                         shell_thickness: float = 2.0e-3,
                         hu_fiducial: int = 3000, hu_shell: int = 60,
                         hu_background: int = 0) -> VoxelVolume:
    """Synthetic scan phantom: high-HU spheres in thin low-HU shells.

    Sphere edges are rendered with a one-voxel partial-volume ramp, as a real
    scanner would, which keeps intensity-weighted centroids unbiased at
    arbitrary subvoxel positions.
    """
    origin = origin or Pose.identity()
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (3,))
    grid = np.full(dims, float(hu_background))
    ii, jj, kk = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
    voxels = np.stack([ii, jj, kk], axis=-1) * spacing
    world = origin.transform_points(voxels.reshape(-1, 3)).reshape(*dims, 3)
    ramp = float(spacing.max())
    for c in np.atleast_2d(centers_scanner):
        dist = np.linalg.norm(world - c, axis=-1)
        shell = np.clip((sphere_radius + shell_thickness + ramp / 2 - dist) / ramp,
                        0.0, 1.0)
        grid = np.maximum(grid, hu_shell * shell)
        core = np.clip((sphere_radius + ramp / 2 - dist) / ramp, 0.0, 1.0)
        grid = np.maximum(grid, hu_fiducial * core)
    return VoxelVolume(np.round(grid).astype(np.int16), spacing, origin)


@dataclass(frozen=True)
class CalibrationResult:
    t_base_tracker: Pose   # robot base <- tracker base
    t_base_scanner: Pose   # robot base <- scanner base
    rms_tracker: float
    rms_scanner: float


def calibrate_chain(model: RobotModel, robot_samples, tracker_tip_points,
                    phantom_tracker_pose: Pose, fiducial_design: PointSet,
                    volume: VoxelVolume, threshold: float = 1500.0) -> CalibrationResult:
    """Two-stage calibration from a base-joint trajectory plus one scan.

    Stage 1 registers tracker-frame tip positions onto FK-predicted tip
    positions, giving the tracker-base-to-robot-base transform. Stage 2
    predicts the phantom fiducials in the robot frame through that transform
    and registers the scan-localized fiducials onto them. Samples must be
    time-aligned by the caller; localization ambiguity and degenerate
    geometry raise.
    """
    robot_samples = np.atleast_2d(np.asarray(robot_samples, dtype=float))
    tracker_tip_points = np.asarray(tracker_tip_points, dtype=float)
    if len(robot_samples) != len(tracker_tip_points):
        raise ValueError("robot and tracker sample counts differ")
    tips_robot = np.array([(fk(model, q) @ model.ee_offset).translation
                           for q in robot_samples])
    reg_mb = register(PointSet(tracker_tip_points), PointSet(tips_robot))
    t_base_tracker = reg_mb.transform

    fid_robot = t_base_tracker.transform_points(
        phantom_tracker_pose.transform_points(fiducial_design.points))
    localized = localize_fiducials(volume, threshold, len(fiducial_design))

    # Scanner blobs are unlabeled; resolve correspondence exhaustively.
    best = None
    for perm in itertools.permutations(range(len(localized))):
        reg = register(PointSet(localized.points[list(perm)]), PointSet(fid_robot))
        if best is None or reg.rms < best.rms:
            best = reg
    return CalibrationResult(t_base_tracker, best.transform, reg_mb.rms, best.rms)


@dataclass(frozen=True)
class SyntheticCalibrationCase:
    """Ground truth plus simulated measurements for the calibration pipeline."""

    model: RobotModel
    robot_samples: np.ndarray
    tracker_tip_points: np.ndarray
    phantom_tracker_pose: Pose
    fiducial_design: PointSet
    volume: VoxelVolume
    truth_base_tracker: Pose
    truth_base_scanner: Pose


def synthesize_calibration_case(model: RobotModel, seed: int = 0,
                                tracker_noise: float = 0.0,
                                n_samples: int = 20,
                                spacing: float = 1.5e-3) -> SyntheticCalibrationCase:
    """Simulated calibration data: base-joint trajectory, tracker stream, and
    a fiducial phantom scan, with known ground-truth transforms.

    The scanner-frame fiducials are placed exactly on voxel centers and the
    marker design offsets are back-computed from the ground truth, so the
    discretized blobs are lattice-symmetric and localization carries no
    quantization bias; `tracker_noise` perturbs the tracker tip stream only.
    """
    rng = np.random.default_rng(seed)

    def random_pose(scale_t: float) -> Pose:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        from .se3 import rot_mat

        return Pose(rot_mat(axis, rng.uniform(-np.pi, np.pi)),
                    rng.uniform(-scale_t, scale_t, 3))

    truth_base_tracker = random_pose(0.3)
    truth_base_scanner = random_pose(0.4)
    phantom_tracker_pose = random_pose(0.15)

    lim = model.limits_array()
    samples = np.zeros((n_samples, model.n_joints))
    # Calibration trajectory uses the linear base joints only.
    samples[:, :3] = rng.uniform(lim[:3, 0], lim[:3, 1], (n_samples, 3))
    t_tracker_base = truth_base_tracker.inverse()
    tips = []
    for q in samples:
        tip = (t_tracker_base @ fk(model, q) @ model.ee_offset).translation
        tips.append(tip + rng.normal(0.0, tracker_noise, 3))
    tips = np.asarray(tips)

    # Fiducials on voxel centers, spread across the volume.
    dims = (64, 64, 64)
    indices = np.array([[18, 20, 22], [44, 24, 20], [24, 44, 30], [34, 30, 46]],
                       dtype=float)
    origin = Pose(np.eye(3), rng.uniform(-0.3, 0.3, 3))
    fid_scanner = origin.transform_points(indices * spacing)
    volume = make_fiducial_volume(fid_scanner, dims=dims, spacing=spacing,
                                  origin=origin, sphere_radius=5.0e-3)

    fid_robot = truth_base_scanner.transform_points(fid_scanner)
    design_pts = phantom_tracker_pose.inverse().transform_points(
        t_tracker_base.transform_points(fid_robot))
    design = PointSet(design_pts, ("0", "1", "2", "3"))
    return SyntheticCalibrationCase(model, samples, tips, phantom_tracker_pose,
                                    design, volume, truth_base_tracker,
                                    truth_base_scanner)
