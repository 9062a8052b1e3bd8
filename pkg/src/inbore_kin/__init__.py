"""In-bore needle-insertion robot: kinematics, statics, calibration, planning."""

from .se3 import Pose, PoseError, compose, pose_error, rot_mat
from .robot import RobotModel, JointSpec, default_robot, fk, jacobian, load_robot

__all__ = [
    "Pose",
    "PoseError",
    "compose",
    "pose_error",
    "rot_mat",
    "RobotModel",
    "JointSpec",
    "default_robot",
    "fk",
    "jacobian",
    "load_robot",
]

__version__ = "0.1.0"
