"""Ready-made scanner scenes: bore, couch, proxy patient, mounted robot.

The gross-stage rails are virtual joints, so the mounting pose places the
wrist cluster at the bore entrance with the arm reaching along the bore axis
(-z) and the gross stage mapping q1/q2/q3 to lateral/vertical/depth motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .se3 import Pose, rot_mat
from .robot import RobotModel, default_robot
from .transmission import TransmissionModel, default_transmission
from .world import (Environment, PatientProxy, RegionMask, generate_patient,
                    make_bore, make_couch, sample_insertion_candidates)

_X = np.array([1.0, 0.0, 0.0])

# Robot base orientation: arm axis (base x) into the bore (-z), rail q1
# lateral (+x), rail q2 vertical (+y), rail q3 along the bore depth.
_MOUNT_ROTATION = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
MOUNT_TRANSLATION = np.array([0.0, 0.15, 0.8])
COUCH_TOP_Y = -0.15
TORSO_CENTER_Z = 0.68
NOMINAL_CONFIG = np.array([0.0, 0.05, 0.1, 0.0, 0.0, 0.0, -math.pi / 2.0, 0.02])


@dataclass(frozen=True)
class SceneBundle:
    """Everything a planning or sweep run needs, built consistently."""

    model: RobotModel
    transmission: TransmissionModel
    env: Environment
    proxy: PatientProxy
    q_nominal: np.ndarray
    extra: dict = field(default_factory=dict)


def mount_pose(translation=MOUNT_TRANSLATION) -> Pose:
    return Pose(_MOUNT_ROTATION, np.asarray(translation, dtype=float))


def default_scene(profile: str = "male", sigma_bmi: float = 0.0,
                  bore_radius: float = 0.35, bore_length: float = 1.6,
                  padding: float = 0.010, couch_y: float = COUCH_TOP_Y,
                  torso_z: float = TORSO_CENTER_Z,
                  model: RobotModel | None = None,
                  transmission: TransmissionModel | None = None) -> SceneBundle:
    """Bore + couch + proxy patient with the robot mounted at the entrance."""
    proxy = generate_patient(profile, sigma_bmi, couch_y=couch_y, torso_z=torso_z)
    obstacles = [make_bore(bore_radius, bore_length),
                 make_couch(top_y=couch_y, z_center=0.4)] + proxy.as_obstacles()
    env = Environment(tuple(obstacles), bore_radius=bore_radius, padding=padding)
    robot = (model or default_robot()).with_base_pose(mount_pose())
    return SceneBundle(robot, transmission or default_transmission(), env, proxy,
                       NOMINAL_CONFIG.copy())


def insertion_target(candidate: Pose, standoff: float = 0.10) -> Pose:
    """EE pose for a skin candidate: needle guide held `standoff` above the
    vertex along the outward normal, needle axis pointing into the skin."""
    rot = candidate.rotation @ rot_mat(_X, math.pi)
    return Pose(rot, candidate.translation + standoff * candidate.rotation[:, 2])


def mid_torso_mask(proxy: PatientProxy, span: float = 0.4) -> RegionMask:
    """Band around the torso center used for setup-planning evaluations."""
    c, semi = proxy.torso_center, proxy.torso_semi_axes
    return RegionMask((c[2] - span * semi[2], c[2] + span * semi[2]))


def scene_candidates(scene: SceneBundle, mask: RegionMask | None = None,
                     max_count: int | None = None):
    return sample_insertion_candidates(scene.proxy, mask, max_count=max_count)
