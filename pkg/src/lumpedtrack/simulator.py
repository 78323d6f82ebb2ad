"""Synthetic scenes with injected calibration and joint-measurement errors.

A :class:`Simulation` owns one trial.  It draws the base calibration error
and the per-joint biases once, precomputes the true joint path, and then
emits one :class:`GroundTruthRow` per step holding the true and measured
joints, the analytical lump and the noisy per-camera detections.

Random streams are split with :class:`numpy.random.SeedSequence` into four
children (calibration, biases, path, per-step noise) so that changing one
noise source never shifts the draws of another.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraModel
from .errors import InvalidInputError
from .kinematics import KinematicChain, analytical_lump, forward_kinematics, solve_ik
from .se3 import RigidTransform, quat_multiply, quat_to_matrix
from .tracker import FeatureBatch, TrackingModel


def _tuple(x):
    return tuple(float(v) for v in np.ravel(x))


@dataclass(frozen=True)
class NoiseModel:
    """Injected error processes.

    ``calib_var`` holds the variances of the base calibration error
    ``[w (rad^2), b (mm^2)]``.  Tool joint ``i`` reads ``q_i - e_i`` with
    ``e_i = bias_i + stretch_i * q_i`` and ``bias_i ~ U(-bound_i, bound_i)``.
    Camera-arm joints get a uniform bias plus fresh Gaussian noise per step.
    """

    calib_var: tuple = (0.0,) * 6
    tool_bias_bounds: tuple = ()
    tool_stretch: tuple = ()
    camera_bias_bounds: tuple = ()
    camera_step_std: tuple = ()

    def __post_init__(self):
        for name in ("calib_var", "tool_bias_bounds", "tool_stretch",
                     "camera_bias_bounds", "camera_step_std"):
            object.__setattr__(self, name, _tuple(getattr(self, name)))
        if len(self.calib_var) != 6:
            raise InvalidInputError("calibration covariance needs 6 diagonal entries")
        if len(self.tool_bias_bounds) != len(self.tool_stretch):
            raise InvalidInputError("tool bias bounds and stretch coefficients differ in length")
        if len(self.camera_bias_bounds) != len(self.camera_step_std):
            raise InvalidInputError("camera bias bounds and step std devs differ in length")
        for name in ("calib_var", "tool_bias_bounds", "camera_bias_bounds", "camera_step_std"):
            if min(getattr(self, name), default=0.0) < 0:
                raise InvalidInputError(f"{name} must be non-negative")

    @classmethod
    def zero(cls, n_joints, n_camera_joints=0):
        return cls((0.0,) * 6, (0.0,) * n_joints, (0.0,) * n_joints,
                   (0.0,) * n_camera_joints, (0.0,) * n_camera_joints)


@dataclass(frozen=True)
class DetectionNoise:
    """Detector imperfections applied to the true projections.

    With ``confidences="beta"`` every true detection carries a confidence
    ``eta ~ Beta(*true_confidence)`` and its landmark index, and false
    positives get a random landmark with ``eta ~ Beta(*false_confidence)``.
    """

    pixel_std: float = 0.5
    rho_std: float = 0.5
    phi_std: float = 0.002
    dropout: float = 0.05
    false_positive_rate: float = 1.0
    edge_false_positive_rate: float = 0.0
    confidences: str = "none"
    true_confidence: tuple = (8.0, 2.0)
    false_confidence: tuple = (2.0, 8.0)

    def __post_init__(self):
        for name in ("true_confidence", "false_confidence"):
            object.__setattr__(self, name, _tuple(getattr(self, name)))
            if len(getattr(self, name)) != 2 or min(getattr(self, name)) <= 0:
                raise InvalidInputError(f"{name} needs two positive Beta parameters")
        if not 0.0 <= self.dropout <= 1.0:
            raise InvalidInputError("dropout probability outside [0, 1]")
        for name in ("pixel_std", "rho_std", "phi_std", "false_positive_rate",
                     "edge_false_positive_rate"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be non-negative")
        if self.confidences not in ("none", "beta"):
            raise InvalidInputError(f"unknown confidence model {self.confidences!r}")

    @classmethod
    def exact(cls):
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class TrajectorySpec:
    """Joint-space cycles plus task-space jitter and an orientation random walk.

    Joint ``i`` follows ``q0_i + amplitude_i sin(2 pi t / period_i + phase_i)``.
    The end-effector position is then jittered by ``N(0, position_jitter^2)``
    (mm) and its orientation is rotated by an accumulated random walk with
    step angles ``U(0, orientation_step)``; the perturbed pose is resolved
    once per step by damped least-squares IK, keeping ``gripper_joint`` on
    its cycle.  Camera-arm joints follow their own sinusoids.
    """

    steps: int = 140
    joint_amplitude: tuple = ()
    joint_period: tuple = ()
    joint_phase: tuple = ()
    position_jitter: float = 0.0
    orientation_step: float = 0.0
    gripper_joint: int | None = None
    camera_amplitude: tuple = ()
    camera_period: tuple = ()
    ik_iterations: int = 30

    def __post_init__(self):
        for name in ("joint_amplitude", "joint_period", "joint_phase",
                     "camera_amplitude", "camera_period"):
            object.__setattr__(self, name, _tuple(getattr(self, name)))
        if self.steps < 1:
            raise InvalidInputError("step count must be >= 1")
        if self.position_jitter < 0 or self.orientation_step < 0:
            raise InvalidInputError("jitter and orientation step must be non-negative")
        if min(self.joint_period + self.camera_period, default=1.0) <= 0:
            raise InvalidInputError("periods must be positive")


@dataclass(frozen=True)
class Scene:
    """Robot, cameras and true mounting transforms.

    Stationary camera: ``base_to_camera`` is the true ``camera <- base``
    transform.  Eye-in-hand: it is the true ``camera-arm base <- tool base``
    transform, ``camera_chain`` moves the camera and ``camera_static`` maps
    the camera arm's last link into the camera frame.
    """

    chain: KinematicChain
    rig: tuple
    q0: np.ndarray
    base_to_camera: RigidTransform
    camera_chain: KinematicChain | None = None
    camera_static: RigidTransform | None = None
    q_cam0: np.ndarray | None = None
    name: str = "scene"

    def __post_init__(self):
        object.__setattr__(self, "rig", tuple(self.rig))
        object.__setattr__(self, "q0", self.chain.check_q(np.array(self.q0, dtype=float)))
        if not self.rig or not all(isinstance(c, CameraModel) for c in self.rig):
            raise InvalidInputError("rig needs at least one CameraModel")
        if self.camera_chain is not None:
            if self.q_cam0 is None:
                raise InvalidInputError("camera arm needs nominal joint values")
            object.__setattr__(self, "q_cam0",
                               self.camera_chain.check_q(np.array(self.q_cam0, dtype=float)))
            if self.camera_static is None:
                object.__setattr__(self, "camera_static", RigidTransform.identity())

    @property
    def eye_in_hand(self):
        return self.camera_chain is not None

    @property
    def n_camera_joints(self):
        return self.camera_chain.n_j if self.eye_in_hand else 0


@dataclass(frozen=True)
class Scenario:
    scene: Scene
    noise: NoiseModel
    trajectory: TrajectorySpec
    detection: DetectionNoise = field(default_factory=DetectionNoise)
    name: str = "scenario"

    def __post_init__(self):
        n_j, n_c = self.scene.chain.n_j, self.scene.n_camera_joints
        if len(self.noise.tool_bias_bounds) != n_j:
            raise InvalidInputError(f"noise model covers {len(self.noise.tool_bias_bounds)} "
                                    f"tool joints, chain has {n_j}")
        if len(self.noise.camera_bias_bounds) != n_c:
            raise InvalidInputError(f"noise model covers {len(self.noise.camera_bias_bounds)} "
                                    f"camera joints, camera arm has {n_c}")
        tr = self.trajectory
        for name, n in (("joint_amplitude", n_j), ("joint_period", n_j),
                        ("camera_amplitude", n_c), ("camera_period", n_c)):
            if len(getattr(tr, name)) not in (0, n):
                raise InvalidInputError(f"trajectory {name} needs {n} entries")
        if len(tr.joint_phase) not in (0, n_j):
            raise InvalidInputError(f"trajectory joint_phase needs {n_j} entries")
        if tr.gripper_joint is not None and not 0 <= tr.gripper_joint < n_j:
            raise InvalidInputError("gripper joint index outside the chain")

    def with_steps(self, steps):
        from dataclasses import replace
        return replace(self, trajectory=replace(self.trajectory, steps=steps))


@dataclass(frozen=True)
class GroundTruthRow:
    """Everything known about one simulated step.

    ``true_lump`` is the transform the lumped filter should recover:
    ``T^{b-}_{b} @ analytical_lump(beta=0)`` for a stationary camera, or the
    single eye-in-hand lump otherwise.  ``ee_camera`` is the true
    end-effector pose in the (reference) camera frame.
    """

    t: int
    q: np.ndarray
    q_meas: np.ndarray
    joint_errors: np.ndarray
    q_cam: np.ndarray | None
    q_cam_meas: np.ndarray | None
    camera_errors: np.ndarray | None
    true_lump: RigidTransform
    ee_camera: RigidTransform
    batches: list


def sample_calibration_error(var, rng):
    """Draw the base calibration error ``T^{b-}_b`` from ``N(0, diag(var))`` in ``[w, b]``."""
    var = np.asarray(var, dtype=float).reshape(6)
    if np.any(var < 0):
        raise InvalidInputError("calibration covariance must be PSD")
    wb = rng.standard_normal(6) * np.sqrt(var)
    return RigidTransform.from_axis_angle(wb[:3], wb[3:])


def apply_calibration_error(truth, error):
    """Calibrated transform seen by the estimator: ``truth @ error^-1``."""
    return truth @ error.inverse()


def tool_joint_errors(noise, q, biases):
    """``e = bias + stretch * q`` for every tool joint."""
    return np.asarray(biases, dtype=float) + np.asarray(noise.tool_stretch) * np.asarray(q, dtype=float)


def camera_joint_errors(noise, biases, rng):
    """Camera-arm errors: the fixed bias plus a fresh Gaussian draw."""
    std = np.asarray(noise.camera_step_std)
    return np.asarray(biases, dtype=float) + rng.standard_normal(std.shape) * std


def joint_error_process(noise, q, biases, rng=None, camera=False):
    """Measurement errors for one step; see :func:`tool_joint_errors` and
    :func:`camera_joint_errors`."""
    if camera:
        return camera_joint_errors(noise, biases, rng)
    return tool_joint_errors(noise, q, biases)


def sample_biases(bounds, rng):
    bounds = np.asarray(bounds, dtype=float)
    return rng.uniform(-1.0, 1.0, bounds.shape) * bounds


def sample_walk_axes(n, rng):
    """Random-walk step axes, ``theta = arccos(u)`` and ``phi ~ U(0, 2 pi)``."""
    theta = np.arccos(rng.uniform(-1.0, 1.0, n))
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.stack([np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)], axis=-1)


def random_walk_orientation(quat, max_angle, rng):
    """Right-multiply ``quat`` by a rotation of angle ``U(0, max_angle)``."""
    angle = rng.uniform(0.0, max_angle)
    axis = sample_walk_axes(1, rng)[0]
    step = np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])
    out = quat_multiply(np.asarray(quat, dtype=float), step)
    return out / np.linalg.norm(out)


def _sinusoid(q0, amplitude, period, phase, t):
    if not len(amplitude):
        return np.array(q0, dtype=float)
    phase = phase if len(phase) else np.zeros(len(amplitude))
    return q0 + np.asarray(amplitude) * np.sin(2 * np.pi * t / np.asarray(period) + np.asarray(phase))


def precompute_joint_path(scene, trajectory, rng):
    """True tool joint values for every step, shape ``(steps, n_j)``."""
    chain = scene.chain
    tr = trajectory
    nominal = np.array([_sinusoid(scene.q0, tr.joint_amplitude, tr.joint_period, tr.joint_phase, t)
                        for t in range(tr.steps)])
    if tr.position_jitter == 0 and tr.orientation_step == 0:
        return nominal
    active = np.ones(chain.n_j, bool)
    if tr.gripper_joint is not None:
        active[tr.gripper_joint] = False
    quat = np.array([1.0, 0.0, 0.0, 0.0])
    path = np.empty_like(nominal)
    offset = np.zeros(chain.n_j)
    for t in range(tr.steps):
        T = forward_kinematics(chain, nominal[t], chain.ee_link)
        if t > 0 and tr.orientation_step > 0:
            quat = random_walk_orientation(quat, tr.orientation_step, rng)
        target_p = T.translation + rng.standard_normal(3) * tr.position_jitter
        target_R = T.rotation @ quat_to_matrix(quat)
        start = nominal[t] + offset
        q = solve_ik(chain, start, target_p, target_R, active=active, damping=0.5,
                     iterations=tr.ik_iterations)
        path[t] = q
        offset = q - nominal[t]
    return path


def precompute_camera_path(scene, trajectory):
    if not scene.eye_in_hand:
        return None
    tr = trajectory
    return np.array([_sinusoid(scene.q_cam0, tr.camera_amplitude, tr.camera_period, (), t)
                     for t in range(tr.steps)])


def _normalize_hough(rho, phi):
    rho = np.array(rho, dtype=float)
    phi = np.array(phi, dtype=float)
    k = np.floor(phi / np.pi)
    phi = phi - k * np.pi
    rho = np.where(np.mod(k, 2) == 1, -rho, rho)
    return rho, phi


def synthesize_features(projections, rig, detection, rng, n_landmarks=None):
    """Noisy per-camera detections from exact single-hypothesis projections.

    ``projections`` is the output of :meth:`TrackingModel.project` for one
    hypothesis.  Draw order per camera: point noise, point dropout,
    confidences, false-positive count and positions, point shuffle, then the
    same for edges.
    """
    out = []
    for ci, (cam, (uv, pvalid, lines, lvalid)) in enumerate(zip(rig, projections)):
        uv, pvalid, lines, lvalid = uv[0], pvalid[0], lines[0], lvalid[0]
        ids = np.flatnonzero(pvalid)
        pts = uv[ids] + rng.standard_normal((len(ids), 2)) * detection.pixel_std
        keep = rng.random(len(ids)) >= detection.dropout
        keep &= cam.in_image(pts)
        pts, ids = pts[keep], ids[keep]
        conf = np.ones(len(ids))
        if detection.confidences == "beta":
            conf = rng.beta(*detection.true_confidence, size=len(ids))
        n_fp = rng.poisson(detection.false_positive_rate)
        fp = rng.uniform(0.0, 1.0, (n_fp, 2)) * [cam.width, cam.height]
        n_lm = n_landmarks if n_landmarks is not None else uv.shape[0]
        fp_ids = rng.integers(0, max(n_lm, 1), n_fp)
        fp_conf = np.ones(n_fp)
        if detection.confidences == "beta":
            fp_conf = rng.beta(*detection.false_confidence, size=n_fp)
        all_pts = np.concatenate([pts, fp])
        all_ids = np.concatenate([ids, fp_ids]).astype(int)
        all_conf = np.concatenate([conf, fp_conf])
        order = rng.permutation(len(all_pts))
        all_pts, all_ids, all_conf = all_pts[order], all_ids[order], all_conf[order]

        lid = np.flatnonzero(lvalid)
        rho = lines[lid, 0] + rng.standard_normal(len(lid)) * detection.rho_std
        phi = lines[lid, 1] + rng.standard_normal(len(lid)) * detection.phi_std
        rho, phi = _normalize_hough(rho, phi)
        keep = rng.random(len(lid)) >= detection.dropout
        rho, phi = rho[keep], phi[keep]
        n_fe = rng.poisson(detection.edge_false_positive_rate)
        anchor = rng.uniform(0.0, 1.0, (n_fe, 2)) * [cam.width, cam.height]
        fphi = rng.uniform(0.0, np.pi, n_fe)
        frho = anchor[:, 0] * np.cos(fphi) + anchor[:, 1] * np.sin(fphi)
        edges = np.column_stack([np.concatenate([rho, frho]), np.concatenate([phi, fphi])])
        edges = edges[rng.permutation(len(edges))]

        landmarks = all_ids if detection.confidences == "beta" else None
        out.append(FeatureBatch(ci, all_pts, edges, all_conf, landmarks))
    return out


class Simulation:
    """One simulated trial.

    ``seed`` may be an int or a :class:`numpy.random.SeedSequence`.  Call
    :meth:`step` to advance along the precomputed path, or
    :meth:`command` / :meth:`observe` to drive the tool from measured joints.
    """

    def __init__(self, scenario, seed=0, calibration_error=None, tool_biases=None):
        self.scenario = scenario
        scene = scenario.scene
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        calib_ss, bias_ss, path_ss, step_ss = ss.spawn(4)
        self.calibration_error = (sample_calibration_error(scenario.noise.calib_var,
                                                           np.random.default_rng(calib_ss))
                                  if calibration_error is None else calibration_error)
        self.calib = apply_calibration_error(scene.base_to_camera, self.calibration_error)
        bias_rng = np.random.default_rng(bias_ss)
        self.tool_biases = (sample_biases(scenario.noise.tool_bias_bounds, bias_rng)
                            if tool_biases is None else np.asarray(tool_biases, dtype=float))
        self.camera_biases = sample_biases(scenario.noise.camera_bias_bounds, bias_rng)
        self.joint_path = precompute_joint_path(scene, scenario.trajectory,
                                                np.random.default_rng(path_ss))
        self.camera_path = precompute_camera_path(scene, scenario.trajectory)
        self.rng = np.random.default_rng(step_ss)
        self.truth_model = TrackingModel(scene.chain, scene.rig, scene.base_to_camera, 0, 0,
                                         scene.camera_chain, scene.camera_static)
        self.t = 0
        self.q = self.joint_path[0].copy()
        self.q_cam = None if self.camera_path is None else self.camera_path[0].copy()

    @property
    def steps(self):
        return self.scenario.trajectory.steps

    @property
    def scene(self):
        return self.scenario.scene

    def measured_joints(self, q=None):
        q = self.q if q is None else q
        return q - tool_joint_errors(self.scenario.noise, q, self.tool_biases)

    def command(self, q_meas):
        """Move the tool so that its joint readings equal ``q_meas``.

        Inverts ``q_meas = q - (bias + stretch * q)`` joint by joint.
        """
        q_meas = self.scene.chain.check_q(q_meas)
        self.q = (q_meas + self.tool_biases) / (1.0 - np.asarray(self.scenario.noise.tool_stretch))
        return self.q

    def true_lump(self, q_meas, e, q_cam_meas=None, e_cam=None):
        scene = self.scene
        chain = scene.chain
        L = self.calibration_error @ analytical_lump(chain, q_meas, e, np.zeros(chain.n_b))
        if not scene.eye_in_hand:
            return L
        cam_chain = scene.camera_chain.with_n_b(scene.camera_chain.n_j)
        Lc = analytical_lump(cam_chain, q_cam_meas, e_cam, np.zeros(cam_chain.n_j))
        C = self.calib
        return C.inverse() @ Lc.inverse() @ C @ L

    def observe(self):
        """Ground truth and detections at the current configuration (no time advance)."""
        scene = self.scene
        noise = self.scenario.noise
        e = tool_joint_errors(noise, self.q, self.tool_biases)
        q_meas = self.q - e
        q_cam = q_cam_meas = e_cam = None
        if scene.eye_in_hand:
            q_cam = self.q_cam
            e_cam = camera_joint_errors(noise, self.camera_biases, self.rng)
            q_cam_meas = q_cam - e_cam
        lump = self.true_lump(q_meas, e, q_cam_meas, e_cam)
        cam_from_base = RigidTransform.from_matrix(self.truth_model.camera_from_base(q_cam))
        ee = cam_from_base @ forward_kinematics(scene.chain, self.q, scene.chain.ee_link)
        proj = self.truth_model.project(np.zeros((1, 6)), np.zeros((1, 0)), self.q, q_cam)
        batches = synthesize_features(proj, scene.rig, self.scenario.detection, self.rng,
                                      scene.chain.n_points)
        return GroundTruthRow(self.t, self.q.copy(), q_meas, e, q_cam, q_cam_meas, e_cam,
                              lump, ee, batches)

    def step(self):
        """Emit the row for the current step of the path, then advance."""
        if self.t >= self.steps:
            raise StopIteration
        self.q = self.joint_path[self.t].copy()
        if self.camera_path is not None:
            self.q_cam = self.camera_path[self.t].copy()
        row = self.observe()
        self.t += 1
        return row

    def __iter__(self):
        while self.t < self.steps:
            yield self.step()

    def run(self):
        return list(self)


def step_scene(sim):
    """Advance ``sim`` by one step and return its :class:`GroundTruthRow`."""
    return sim.step()


__all__ = [
    "NoiseModel", "DetectionNoise", "TrajectorySpec", "Scene", "Scenario", "GroundTruthRow",
    "Simulation", "sample_calibration_error", "apply_calibration_error", "tool_joint_errors",
    "camera_joint_errors", "joint_error_process", "sample_biases", "sample_walk_axes",
    "random_walk_orientation", "precompute_joint_path", "precompute_camera_path",
    "synthesize_features", "step_scene",
]
