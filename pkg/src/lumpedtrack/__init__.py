"""Lumped-error tracking for partially visible robot manipulators."""

from .camera import CameraModel, CylinderPrimitive
from .config import load_experiment
from .control import ControllerConfig, Goal, servo_loop
from .errors import (BehindCameraError, ConfigError, DegenerateAxisError, DegenerateFilterError,
                     DegenerateViewError, InvalidInputError, InvalidLineError)
from .harness import ExperimentSpec, run_experiment, run_trial, summarize
from .kinematics import KinematicChain, MDHJoint, ToolPoint, analytical_lump, forward_kinematics
from .se3 import AxisAnglePose, RigidTransform
from .simulator import Scenario, Simulation
from .tracker import FeatureBatch, FilterConfig, TrackingModel, initialize, update

__version__ = "0.1.0"

__all__ = [
    "CameraModel", "CylinderPrimitive", "load_experiment", "ControllerConfig", "Goal",
    "servo_loop", "BehindCameraError", "ConfigError", "DegenerateAxisError",
    "DegenerateFilterError", "DegenerateViewError", "InvalidInputError", "InvalidLineError",
    "ExperimentSpec", "run_experiment", "run_trial", "summarize", "KinematicChain", "MDHJoint",
    "ToolPoint", "analytical_lump", "forward_kinematics", "AxisAnglePose", "RigidTransform",
    "Scenario", "Simulation", "FeatureBatch", "FilterConfig", "TrackingModel", "initialize",
    "update",
]
