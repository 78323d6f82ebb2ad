"""Particle filter tracking the Lumped Error and the observable joint errors.

Each particle carries a 6-vector ``[w, b]`` (axis-angle + translation of the
lump) and a vector of tracked joint errors.  Weights live in log space and
are normalised with log-sum-exp.

Random numbers are consumed in a fixed order per call: ``predict`` draws
``N`` ancestor uniforms, then an ``(N, 6)`` block of lump perturbations,
then an ``(N, n_e)`` block of joint-error perturbations; ``stratified_resample``
draws ``N`` uniforms.  Within each block draws are particle-major.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import association as assoc
from .camera import CameraModel, EdgeFeature, PointFeature, cylinder_edges, line_in_image, project_points
from .errors import ConfigError, DegenerateFilterError, InvalidInputError
from .kinematics import KinematicChain, link_matrices
from .se3 import AxisAnglePose, RigidTransform, invert_matrices, pose_matrices, transform_points

MODES = ("all-unknowns", "lumped", "lumped-plus-joints")
OBSERVATION_MODELS = ("clipped-gaussian", "confidence-weighted")


@dataclass(frozen=True)
class FilterConfig:
    """Particle-filter parameters.

    Covariances are given as their diagonals (variances).  ``joint_error_bounds``
    and ``joint_error_var`` must have one entry per tracked joint error (zero
    entries in ``lumped`` mode).
    """

    n_particles: int = 1000
    ess_threshold: float = 0.5
    lump_var_0: tuple = (0.05, 0.05, 0.05, 2.5, 2.5, 2.5)
    lump_var_t: tuple = (0.005, 0.005, 0.005, 0.25, 0.25, 0.25)
    joint_error_bounds: tuple = ()
    joint_error_var: tuple = ()
    gamma_m: float = 0.15
    gamma_rho: float = 0.1
    gamma_phi: float = 40.0
    c_max_m: float | None = None
    c_max_l: float | None = None
    mode: str = "lumped"
    observation_model: str = "clipped-gaussian"
    prediction_weighting: str = "listing"   # or "sir"
    resample_trigger: str = "below"         # or "above" (literal listing)
    parallel_substreams: bool = False

    def __post_init__(self):
        if self.c_max_m is None:
            object.__setattr__(self, "c_max_m", 25.0 * self.gamma_m)
        if self.c_max_l is None:
            object.__setattr__(self, "c_max_l", 0.1 * self.gamma_phi + 25.0 * self.gamma_rho)
        for name in ("lump_var_0", "lump_var_t", "joint_error_bounds", "joint_error_var"):
            object.__setattr__(self, name, tuple(float(x) for x in np.ravel(getattr(self, name))))
        self.validate()

    def validate(self):
        if self.n_particles < 1:
            raise ConfigError("n_particles must be >= 1")
        if not 0.0 < self.ess_threshold <= 1.0:
            raise ConfigError("ess_threshold must lie in (0, 1]")
        if len(self.lump_var_0) != 6 or len(self.lump_var_t) != 6:
            raise ConfigError("lump covariances must have 6 diagonal entries")
        if min(self.lump_var_0) <= 0 or not np.all(np.isfinite(self.lump_var_0)):
            raise ConfigError("initial lump covariance must be positive definite")
        if min(self.lump_var_t) < 0 or min(self.joint_error_var, default=0.0) < 0:
            raise ConfigError("covariances must be positive semi-definite")
        if min(self.joint_error_bounds, default=0.0) < 0:
            raise ConfigError("joint error bounds must be non-negative")
        if len(self.joint_error_bounds) != len(self.joint_error_var):
            raise ConfigError("joint error bounds and variances differ in length")
        if self.c_max_m <= 0 or self.c_max_l <= 0:
            raise ConfigError("association cutoffs must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.observation_model not in OBSERVATION_MODELS:
            raise ConfigError(f"unknown observation model {self.observation_model!r}")
        if self.prediction_weighting not in ("listing", "sir"):
            raise ConfigError(f"unknown prediction weighting {self.prediction_weighting!r}")
        if self.resample_trigger not in ("below", "above"):
            raise ConfigError(f"unknown resample trigger {self.resample_trigger!r}")

    @property
    def n_joint_errors(self):
        return len(self.joint_error_bounds)


@dataclass(frozen=True)
class Particle:
    weight: float
    lump: AxisAnglePose
    joint_errors: np.ndarray


@dataclass(frozen=True)
class FilterState:
    """Particle set; ``log_weights`` are normalised unless noted otherwise."""

    log_weights: np.ndarray
    params: np.ndarray
    joint_errors: np.ndarray
    step: int = 0
    seed: int = 0

    @property
    def n(self):
        return self.params.shape[0]

    @property
    def weights(self):
        return normalized_weights(self.log_weights)

    def particle(self, i):
        return Particle(float(self.weights[i]), AxisAnglePose.from_vector(self.params[i]),
                        self.joint_errors[i].copy())


@dataclass(frozen=True)
class Estimate:
    lump: AxisAnglePose
    joint_errors: np.ndarray
    ess_fraction: float


@dataclass
class FeatureBatch:
    """Detections from one camera at one time step.

    ``points`` is ``(K, 2)`` pixels, ``edges`` is ``(L, 2)`` of ``(rho, phi)``.
    ``landmarks`` holds the landmark index of each point for detectors that
    associate by themselves; ``confidences`` default to one.
    """

    camera: int = 0
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    confidences: np.ndarray | None = None
    landmarks: np.ndarray | None = None

    def __post_init__(self):
        pts = self.points
        if len(pts) and isinstance(pts[0], PointFeature):
            if self.confidences is None:
                self.confidences = np.array([p.confidence for p in pts])
            pts = [p.uv for p in pts]
        self.points = np.asarray(pts, dtype=float).reshape(-1, 2)
        eds = self.edges
        if len(eds) and isinstance(eds[0], EdgeFeature):
            eds = [(e.rho, e.phi) for e in eds]
        self.edges = np.asarray(eds, dtype=float).reshape(-1, 2)
        if self.confidences is None:
            self.confidences = np.ones(len(self.points))
        self.confidences = np.asarray(self.confidences, dtype=float).reshape(-1)
        if self.landmarks is not None:
            self.landmarks = np.asarray(self.landmarks, dtype=int).reshape(-1)
            if len(self.landmarks) != len(self.points):
                raise InvalidInputError("one landmark index per point detection required")
        if len(self.confidences) != len(self.points):
            raise InvalidInputError("one confidence per point detection required")
        if np.any((self.confidences < 0) | (self.confidences > 1)):
            raise InvalidInputError("confidences must lie in [0, 1]")


@dataclass(frozen=True)
class TrackingModel:
    """Kinematic composition used to project features for every particle.

    Stationary camera: ``calib`` is the calibrated base-to-camera transform.
    Eye-in-hand: ``calib`` is the calibrated base-to-base transform,
    ``camera_chain`` the camera arm and ``camera_static`` the fixed transform
    from its last link to the camera.  ``n_b`` is the boundary used by the
    filter (0 when tracking all unknowns); ``n_tool_errors`` trailing tool
    joints and, if ``track_camera_joints``, every camera joint carry tracked
    errors.
    """

    chain: KinematicChain
    rig: tuple
    calib: RigidTransform
    n_b: int
    n_tool_errors: int = 0
    camera_chain: KinematicChain | None = None
    camera_static: RigidTransform | None = None
    track_camera_joints: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rig", tuple(self.rig))
        if self.n_tool_errors not in (0, self.chain.n_j - self.n_b):
            raise InvalidInputError("tracked tool errors must cover joints n_b+1..n_j or none")
        if self.eye_in_hand and self.camera_static is None:
            object.__setattr__(self, "camera_static", RigidTransform.identity())
        if self.track_camera_joints and not self.eye_in_hand:
            raise InvalidInputError("camera joints can only be tracked with a camera arm")

    @classmethod
    def for_mode(cls, mode, chain, rig, calib, camera_chain=None, camera_static=None):
        if mode == "lumped":
            return cls(chain, rig, calib, chain.n_b, 0, camera_chain, camera_static)
        if mode == "lumped-plus-joints":
            return cls(chain, rig, calib, chain.n_b, chain.n_j - chain.n_b,
                       camera_chain, camera_static)
        if mode == "all-unknowns":
            return cls(chain, rig, calib, 0, chain.n_j, camera_chain, camera_static,
                       track_camera_joints=camera_chain is not None)
        raise ConfigError(f"unknown mode {mode!r}")

    @property
    def eye_in_hand(self):
        return self.camera_chain is not None

    @property
    def n_camera_errors(self):
        return self.camera_chain.n_j if self.track_camera_joints else 0

    @property
    def n_errors(self):
        return self.n_tool_errors + self.n_camera_errors

    @property
    def tool_error_joints(self):
        """Zero-based tool joint indices whose errors are tracked."""
        return np.arange(self.n_b, self.chain.n_j) if self.n_tool_errors else np.arange(0)

    def camera_from_base(self, q_cam=None, cam_err=None):
        """``camera <- (lumped) base`` transform, batched when ``cam_err`` is."""
        if not self.eye_in_hand:
            return self.calib.matrix
        if q_cam is None:
            raise InvalidInputError("camera-arm joint readings required")
        q = np.asarray(q_cam, dtype=float)
        if cam_err is not None and cam_err.shape[-1]:
            q = q + cam_err
        Fc = link_matrices(self.camera_chain, q)[-1]
        return self.camera_static.matrix @ invert_matrices(Fc) @ self.calib.matrix

    def chain_geometry(self, q_meas, tool_err=None):
        """Tool points, cylinder axes and points in the lumped-base frame.

        Returns ``(points, cyl_dirs, cyl_points)`` with a leading particle axis
        when ``tool_err`` is given.
        """
        chain = self.chain
        q_meas = chain.check_q(q_meas)
        prefix = link_matrices(chain, q_meas, 0, self.n_b)
        F = prefix[-1]
        if tool_err is None or tool_err.shape[-1] == 0:
            frames = F @ link_matrices(chain, q_meas, self.n_b, chain.n_j)
        else:
            q = np.broadcast_to(q_meas, tool_err.shape[:-1] + (chain.n_j,)).copy()
            q[..., self.n_b:] += tool_err
            frames = F @ link_matrices(chain, q, self.n_b, chain.n_j)

        def frame(j):
            if j >= self.n_b:
                return frames[j - self.n_b]
            return np.broadcast_to(prefix[j], frames.shape[1:])

        pts = np.stack([transform_points(frame(tp.link), tp.position)
                        for tp in chain.tool_points], axis=-2) if chain.tool_points else None
        if chain.cylinders:
            dirs = np.stack([frame(c.link)[..., :3, :3] @ c.direction for c in chain.cylinders], axis=-2)
            cpts = np.stack([transform_points(frame(c.link), c.point) for c in chain.cylinders], axis=-2)
        else:
            dirs = cpts = None
        return pts, dirs, cpts

    def project(self, params, joint_errors, q_meas, q_cam=None):
        """Project every tool point and cylinder for all particles.

        Returns one tuple ``(uv, point_valid, lines, line_valid)`` per camera
        with shapes ``(N, P, 2)``, ``(N, P)``, ``(N, 2C, 2)``, ``(N, 2C)``.
        Absent features have NaN coordinates.
        """
        params = np.atleast_2d(np.asarray(params, dtype=float))
        N = params.shape[0]
        errs = np.asarray(joint_errors, dtype=float).reshape(N, -1)
        tool_err = errs[:, :self.n_tool_errors]
        cam_err = errs[:, self.n_tool_errors:] if self.track_camera_joints else None
        M = self.camera_from_base(q_cam, cam_err) @ pose_matrices(params)
        per_particle = self.n_tool_errors > 0
        pts, dirs, cpts = self.chain_geometry(q_meas, tool_err if per_particle else None)
        Mb = M[:, None]
        out = []
        P = self.chain.n_points
        C = len(self.chain.cylinders)
        pts_c = transform_points(Mb, pts) if P else np.zeros((N, 0, 3))
        if C:
            dirs_c = np.einsum("...ij,...j->...i", Mb[..., :3, :3], dirs)
            cpts_c = transform_points(Mb, cpts)
        for cam in self.rig:
            uv, front = project_points(cam, pts_c)
            pvalid = front & cam.in_image(np.nan_to_num(uv, nan=-1.0))
            uv = np.where(pvalid[..., None], uv, np.nan)
            lines = np.full((N, 2 * C, 2), np.nan)
            lvalid = np.zeros((N, 2 * C), dtype=bool)
            for c, cyl in enumerate(self.chain.cylinders):
                rho, phi, ok = cylinder_edges(cam, dirs_c[:, c], cpts_c[:, c], cyl.radius)
                _, front_c = project_points(cam, cpts_c[:, c])
                for s in range(2):
                    v = ok & front_c & line_in_image(cam, rho[:, s], phi[:, s])
                    lvalid[:, 2 * c + s] = v
                    lines[:, 2 * c + s, 0] = np.where(v, rho[:, s], np.nan)
                    lines[:, 2 * c + s, 1] = np.where(v, phi[:, s], np.nan)
            out.append((uv, pvalid, lines, lvalid))
        return out


def normalized_weights(log_weights):
    lw = np.asarray(log_weights, dtype=float)
    m = logsumexp(lw)
    if not np.isfinite(m):
        raise DegenerateFilterError(
            f"all {lw.size} particle weights vanished (max log-weight {np.nanmax(lw) if lw.size else 'n/a'})")
    return np.exp(lw - m)


def normalize_log_weights(log_weights):
    lw = np.asarray(log_weights, dtype=float)
    m = logsumexp(lw)
    if not np.isfinite(m):
        raise DegenerateFilterError(f"all {lw.size} particle weights vanished")
    return lw - m


def gaussian_logpdf_diag(x, var):
    """Zero-mean diagonal Gaussian log-density; zero-variance dims are skipped."""
    var = np.asarray(var, dtype=float)
    x = np.asarray(x, dtype=float)
    keep = var > 0
    if not keep.any():
        return np.zeros(x.shape[:-1])
    xv = x[..., keep]
    v = var[keep]
    return -0.5 * (np.sum(xv * xv / v, axis=-1) + np.sum(np.log(2 * np.pi * v)))


def initialize(cfg, rng_seed=0):
    """Draw the initial particle set.

    Lumps come from ``N(0, lump_var_0)`` weighted by that density, joint
    errors from ``U(-bounds, bounds)``.
    """
    rng = np.random.default_rng(rng_seed)
    N = cfg.n_particles
    var0 = np.array(cfg.lump_var_0)
    params = rng.standard_normal((N, 6)) * np.sqrt(var0)
    a = np.array(cfg.joint_error_bounds)
    errs = rng.uniform(-1.0, 1.0, (N, len(a))) * a
    logw = normalize_log_weights(gaussian_logpdf_diag(params, var0))
    seed = int(rng_seed) if np.isscalar(rng_seed) else 0
    return FilterState(logw, params, errs, 0, seed), rng


def _substream_normals(seed, step, n_particles, dim):
    out = np.empty((n_particles, dim))
    for p in range(n_particles):
        g = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, step, p])))
        out[p] = g.standard_normal(dim)
    return out


def predict(state, cfg, rng):
    """Draw ancestors by weight and apply the random-walk motion model."""
    w = state.weights
    N = cfg.n_particles
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    anc = np.minimum(np.searchsorted(cdf, rng.random(N), side="right"), state.n - 1)
    var_t = np.array(cfg.lump_var_t)
    var_e = np.array(cfg.joint_error_var)
    n_e = len(var_e)
    if cfg.parallel_substreams:
        z = _substream_normals(state.seed, state.step + 1, N, 6 + n_e)
        z_wb, z_e = z[:, :6], z[:, 6:]
    else:
        z_wb = rng.standard_normal((N, 6))
        z_e = rng.standard_normal((N, n_e))
    d_wb = z_wb * np.sqrt(var_t)
    d_e = z_e * np.sqrt(var_e)
    params = state.params[anc] + d_wb
    errs = state.joint_errors[anc] + d_e
    if cfg.prediction_weighting == "listing":
        logw = gaussian_logpdf_diag(d_wb, var_t) + gaussian_logpdf_diag(d_e, var_e)
    else:
        logw = np.zeros(N)
    return FilterState(logw, params, errs, state.step + 1, state.seed)


def project_expected_features(model, lump, joint_errors, q_meas, q_cam=None):
    """Projected features of a single hypothesis, per camera.

    Returns a list (one entry per camera) of ``(points, edges)`` where absent
    features are ``None``.
    """
    if isinstance(lump, AxisAnglePose):
        lump = lump.as_vector()
    out = []
    for uv, pv, lines, lv in model.project(np.asarray(lump)[None], np.asarray(joint_errors)[None],
                                           q_meas, q_cam):
        pts = [PointFeature(uv[0, k]) if pv[0, k] else None for k in range(uv.shape[1])]
        eds = [EdgeFeature(float(lines[0, k, 0]), float(lines[0, k, 1])) if lv[0, k] else None
               for k in range(lines.shape[1])]
        out.append((pts, eds))
    return out


def effective_sample_size(weights):
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def stratified_resample(state, rng):
    """One uniform draw per stratum ``[i/N, (i+1)/N)``; weights become uniform."""
    w = state.weights
    N = state.n
    u = (np.arange(N) + rng.random(N)) / N
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), N - 1)
    logw = np.full(N, -np.log(N))
    return replace(state, log_weights=logw, params=state.params[idx],
                   joint_errors=state.joint_errors[idx])


def extract_estimate(state, ess_fraction=None):
    """Weighted arithmetic mean of ``[w, b, e]`` (axis-angle averaged componentwise)."""
    w = state.weights
    mean = w @ state.params
    errs = w @ state.joint_errors if state.joint_errors.shape[1] else np.zeros(0)
    if ess_fraction is None:
        ess_fraction = effective_sample_size(w) / state.n
    return Estimate(AxisAnglePose.from_vector(mean), errs, float(ess_fraction))


def observation_log_likelihood(cfg, model, projections, batches):
    """Sum over cameras of the log point and edge likelihoods for every particle."""
    N = projections[0][0].shape[0]
    total = np.zeros(N)
    n_m = model.chain.n_points
    n_l = 2 * len(model.chain.cylinders)
    for batch in batches:
        uv, pvalid, lines, lvalid = projections[batch.camera]
        if n_m:
            if cfg.observation_model == "confidence-weighted":
                if batch.landmarks is None:
                    raise InvalidInputError("confidence-weighted model needs landmark indices")
                lik = assoc.confidence_point_likelihood(
                    batch.points, batch.landmarks, batch.confidences, uv, cfg.gamma_m, pvalid)
            else:
                if len(batch.points):
                    costs = assoc.point_costs(batch.points, uv, cfg.gamma_m)
                    _, _, mc = assoc.greedy_match_batch(costs, cfg.c_max_m)
                else:
                    mc = np.full((N, 0), np.nan)
                lik = assoc.clipped_likelihood(mc, n_m, cfg.c_max_m)
            total += np.log(lik)
        if n_l:
            if len(batch.edges):
                costs = assoc.edge_costs(batch.edges, lines, cfg.gamma_rho, cfg.gamma_phi)
                _, _, mc = assoc.greedy_match_batch(costs, cfg.c_max_l)
            else:
                mc = np.full((N, 0), np.nan)
            total += np.log(assoc.clipped_likelihood(mc, n_l, cfg.c_max_l))
    return total


def update(state, cfg, model, q_meas, batches, rng, q_cam=None):
    """One full filter iteration: predict, weight, normalise, maybe resample, estimate."""
    if model.n_errors != cfg.n_joint_errors:
        raise ConfigError(f"filter tracks {cfg.n_joint_errors} joint errors, model needs {model.n_errors}")
    state = predict(state, cfg, rng)
    proj = model.project(state.params, state.joint_errors, q_meas, q_cam)
    for b in batches:
        if not 0 <= b.camera < len(model.rig):
            raise InvalidInputError(f"camera index {b.camera} outside rig")
    logw = state.log_weights + observation_log_likelihood(cfg, model, proj, batches)
    state = replace(state, log_weights=normalize_log_weights(logw))
    ess_frac = effective_sample_size(state.weights) / state.n
    resample = ess_frac < cfg.ess_threshold if cfg.resample_trigger == "below" \
        else ess_frac > cfg.ess_threshold
    if resample:
        state = stratified_resample(state, rng)
    return state, extract_estimate(state, ess_frac)
