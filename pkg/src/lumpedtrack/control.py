"""Camera-frame position and orientation regulators driven by the tracked lump.

The regulators work in the *virtual* base frame defined by the calibrated
base-to-camera transform and the lump: a camera-frame goal is pulled back
into that frame and compared with the end-effector position computed from
the measured joints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .kinematics import forward_kinematics, solve_ik
from .se3 import AxisAnglePose, RigidTransform, so3_log


@dataclass(frozen=True)
class ControllerConfig:
    """``step_size`` (mm) caps each position update; the loop stops once the
    predicted position error drops below ``tolerance`` (mm) and, with an
    orientation goal, the rotation error below ``rotation_tolerance`` (rad)."""

    step_size: float = 3.0
    tolerance: float = 0.5
    max_iterations: int = 50
    rotation_tolerance: float = 0.01

    def __post_init__(self):
        if not self.step_size > 0 or not self.tolerance > 0 or not self.rotation_tolerance > 0:
            raise InvalidInputError("step size and tolerances must be positive")
        if self.max_iterations < 0:
            raise InvalidInputError("max_iterations must be non-negative")


@dataclass(frozen=True)
class Goal:
    """Camera-frame goal position (mm) and optional orientation."""

    position: np.ndarray
    rotation: np.ndarray | None = None

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("goal position must be finite")
        object.__setattr__(self, "position", p)
        if self.rotation is not None:
            R = np.array(self.rotation, dtype=float).reshape(3, 3)
            if not np.all(np.isfinite(R)):
                raise InvalidInputError("goal rotation must be finite")
            object.__setattr__(self, "rotation", R)


def _as_transform(T):
    if isinstance(T, AxisAnglePose):
        return T.to_transform()
    if isinstance(T, RigidTransform):
        return T
    return RigidTransform.from_matrix(np.asarray(T, dtype=float))


def position_error(goal_position, b_e, calib, lump):
    """``d = (calib @ lump)^-1 p_g - b_e`` in the virtual base frame."""
    virtual = _as_transform(calib) @ _as_transform(lump)
    return virtual.inverse().apply(np.asarray(goal_position, dtype=float)) - np.asarray(b_e, dtype=float)


def position_step(goal_position, b_e, calib, lump, step_size):
    """Move ``b_e`` toward the goal by ``min(||d||, step_size)``.

    Returns ``(new_b_e, d)``.
    """
    if not step_size > 0:
        raise InvalidInputError("step size must be positive")
    d = position_error(goal_position, b_e, calib, lump)
    n = np.linalg.norm(d)
    step = d if n <= step_size else d * (step_size / n)
    return np.asarray(b_e, dtype=float) + step, d


def orientation_target(goal_rotation, calib_rotation, lump_rotation):
    """End-effector rotation in the measured base frame: ``(R_calib R_lump)^T R_goal``."""
    Rc = np.asarray(calib_rotation, dtype=float)
    Rl = np.asarray(lump_rotation, dtype=float)
    return (Rc @ Rl).T @ np.asarray(goal_rotation, dtype=float)


class OracleTracker:
    """Reports the simulator's analytical lump (perfect tracking)."""

    def lump(self, row):
        return row.true_lump


class IdentityTracker:
    """Ignores the lump entirely (no tracking)."""

    def lump(self, row):
        return RigidTransform.identity()


class ParticleTracker:
    """Runs the particle filter on every observation and reports its estimate.

    ``warmup`` extra filter updates are run on the first observation so the
    filter has settled before the first command.
    """

    def __init__(self, cfg, model, seed=0, warmup=0):
        from . import tracker as tk
        self._tk = tk
        self.cfg = cfg
        self.model = model
        self.state, self.rng = tk.initialize(cfg, seed)
        self.warmup = int(warmup)
        self.last = None

    def lump(self, row):
        tk = self._tk
        n = 1 + self.warmup
        self.warmup = 0
        for _ in range(n):
            self.state, est = tk.update(self.state, self.cfg, self.model, row.q_meas,
                                        row.batches, self.rng, row.q_cam_meas)
        self.last = est
        return est.lump.to_transform()


@dataclass(frozen=True)
class ServoStep:
    iteration: int
    predicted_error: float
    camera_error: float
    rotation_error: float


@dataclass
class ServoResult:
    converged: bool
    iterations: int
    terminal_error: float
    log: list = field(default_factory=list)


def servo_loop(sim, tracker, controller, goal, active=None):
    """Iterate position (and orientation) steps until converged.

    ``sim`` must expose ``observe()``, ``command(q_meas)``, ``calib`` and
    ``scene``; ``tracker`` must expose ``lump(row)``.  Each iteration commands
    new measured joint values found by damped least-squares IK; the simulator
    realises them through its noisy joint processes.  Never raises on
    non-convergence.
    """
    scene = sim.scene
    if scene.eye_in_hand:
        raise InvalidInputError("servo loop supports a stationary camera only")
    chain = scene.chain
    calib = sim.calib
    if active is None:
        active = np.ones(chain.n_j, bool)
        g = sim.scenario.trajectory.gripper_joint
        if g is not None:
            active[g] = False
    log = []
    row = sim.observe()
    converged = False
    iterations = 0
    while True:
        L = _as_transform(tracker.lump(row))
        T_ee = forward_kinematics(chain, row.q_meas, chain.ee_link)
        b_new, d = position_step(goal.position, T_ee.translation, calib, L, controller.step_size)
        rot_err = 0.0
        R_target = T_ee.rotation
        if goal.rotation is not None:
            R_target = orientation_target(goal.rotation, calib.rotation, L.rotation)
            rot_err = float(np.linalg.norm(so3_log(R_target @ T_ee.rotation.T)))
        cam_err = float(np.linalg.norm(row.ee_camera.translation - goal.position))
        log.append(ServoStep(iterations, float(np.linalg.norm(d)), cam_err, rot_err))
        if np.linalg.norm(d) < controller.tolerance and rot_err < controller.rotation_tolerance:
            converged = True
            break
        if iterations >= controller.max_iterations:
            break
        q_cmd = solve_ik(chain, row.q_meas, b_new, R_target, active=active)
        sim.command(q_cmd)
        row = sim.observe()
        iterations += 1
    return ServoResult(converged, iterations, log[-1].camera_error, log)


__all__ = [
    "ControllerConfig", "Goal", "position_error", "position_step", "orientation_target",
    "OracleTracker", "IdentityTracker", "ParticleTracker", "ServoStep", "ServoResult",
    "servo_loop",
]
