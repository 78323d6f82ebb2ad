"""Rigid transforms and serial-chain kinematics under one import."""

from .kinematics import *  # noqa: F401,F403
from .kinematics import __all__ as _kin_all
from .se3 import (AxisAnglePose, RigidTransform, hat, pose_error, so3_exp, so3_log,  # noqa: F401
                  vee)

__all__ = ["AxisAnglePose", "RigidTransform", "hat", "vee", "so3_exp", "so3_log",
           "pose_error"] + list(_kin_all)
