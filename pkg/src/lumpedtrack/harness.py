"""Experiment orchestration: simulate, track, score and tabulate.

Every trial draws its simulator and filter seeds from
``SeedSequence([seed, trial, k])`` so that trials are independent, and
two experiments that differ only in the tracking mode see identical scenes
and identical filter random streams.

CSV columns (in order)::

    trial, t, eps_b, eps_w, eps_q<j>..., ess, n_pts, n_edges,
    lump_eps_b, lump_eps_w, degenerate

``eps_q<j>`` has one column per observable joint ``j`` (1-based), ``ess``
is the ESS fraction, ``n_pts``/``n_edges`` count detections matched by the
estimate, and ``lump_eps_*`` compare the tracked transform against its true
counterpart (the lump, or the base calibration error when tracking all
unknowns).
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import association as assoc
from . import tracker as tk
from .errors import DegenerateFilterError, InvalidInputError
from .kinematics import forward_kinematics
from .se3 import RigidTransform, pose_error
from .simulator import Simulation

CAMERA_MODES = ("stationary", "eye-in-hand")


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: object
    filter_config: tk.FilterConfig
    mode: str = "lumped"
    trials: int = 1
    seed: int = 0
    burn_in: int = 100
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        if self.mode not in tk.MODES:
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.filter_config.mode != self.mode:
            raise InvalidInputError(
                f"filter configured for {self.filter_config.mode!r}, experiment runs {self.mode!r}")

    @property
    def camera(self):
        return "eye-in-hand" if self.scenario.scene.eye_in_hand else "stationary"

    @property
    def steps(self):
        return self.scenario.trajectory.steps

    def observable_joints(self):
        chain = self.scenario.scene.chain
        return list(range(chain.n_b + 1, chain.n_j + 1))


@dataclass(frozen=True)
class ResultRow:
    trial: int
    t: int
    eps_b: float
    eps_w: float
    eps_q: tuple
    ess: float
    n_pts: int
    n_edges: int
    lump_eps_b: float
    lump_eps_w: float
    degenerate: bool = False


def trial_seeds(seed, trial):
    """``(simulation seed, filter seed)`` for one trial."""
    sim_ss = np.random.SeedSequence([int(seed), int(trial), 0])
    filt = int(np.random.SeedSequence([int(seed), int(trial), 1]).generate_state(1)[0])
    return sim_ss, filt


def build_model(spec, sim):
    scene = sim.scene
    return tk.TrackingModel.for_mode(spec.mode, scene.chain, scene.rig, sim.calib,
                                     scene.camera_chain, scene.camera_static)


def _split_errors(model, joint_errors):
    tool = joint_errors[:model.n_tool_errors]
    cam = joint_errors[model.n_tool_errors:] if model.track_camera_joints else None
    return tool, cam


def estimated_joints(model, q_meas, joint_errors):
    q = np.array(q_meas, dtype=float)
    tool, _ = _split_errors(model, joint_errors)
    if model.n_tool_errors:
        q[model.tool_error_joints] += tool
    return q


def estimated_ee_camera(model, est, row):
    """End-effector pose in the camera frame implied by an estimate."""
    _, cam = _split_errors(model, est.joint_errors)
    C = RigidTransform.from_matrix(model.camera_from_base(row.q_cam_meas, cam))
    q = estimated_joints(model, row.q_meas, est.joint_errors)
    chain = model.chain
    return C @ est.lump.to_transform() @ forward_kinematics(chain, q, chain.ee_link)


def matched_counts(cfg, model, est, row):
    """Detections matched by the estimate's own projection, summed over cameras."""
    proj = model.project(est.lump.as_vector()[None], est.joint_errors[None], row.q_meas,
                         row.q_cam_meas)
    n_pts = n_edges = 0
    for b in row.batches:
        uv, _, lines, _ = proj[b.camera]
        if len(b.points) and uv.shape[1]:
            _, _, mc = assoc.greedy_match_batch(assoc.point_costs(b.points, uv, cfg.gamma_m),
                                                cfg.c_max_m)
            n_pts += int(np.isfinite(mc).sum())
        if len(b.edges) and lines.shape[1]:
            costs = assoc.edge_costs(b.edges, lines, cfg.gamma_rho, cfg.gamma_phi)
            _, _, mc = assoc.greedy_match_batch(costs, cfg.c_max_l)
            n_edges += int(np.isfinite(mc).sum())
    return n_pts, n_edges


def true_tracked_transform(spec, sim, row):
    return sim.calibration_error if spec.mode == "all-unknowns" else row.true_lump


def run_trial(spec, trial):
    """Simulate and track one trial; returns its list of :class:`ResultRow`."""
    sim_ss, filt_seed = trial_seeds(spec.seed, trial)
    sim = Simulation(spec.scenario, sim_ss)
    model = build_model(spec, sim)
    cfg = spec.filter_config
    state, rng = tk.initialize(cfg, filt_seed)
    obs = [j - 1 for j in spec.observable_joints()]
    rows = []
    for row in sim:
        degenerate = False
        try:
            state, est = tk.update(state, cfg, model, row.q_meas, row.batches, rng, row.q_cam_meas)
        except DegenerateFilterError:
            degenerate = True
            state, _ = tk.initialize(cfg, filt_seed + 1 + row.t)
            est = tk.extract_estimate(state)
        ee = estimated_ee_camera(model, est, row)
        eps_b, eps_w = pose_error(row.ee_camera, ee)
        q_hat = estimated_joints(model, row.q_meas, est.joint_errors)
        eps_q = tuple(float(abs(q_hat[j] - row.q[j])) for j in obs)
        n_pts, n_edges = matched_counts(cfg, model, est, row)
        lb, lw = pose_error(true_tracked_transform(spec, sim, row), est.lump.to_transform())
        rows.append(ResultRow(int(trial), int(row.t), eps_b, eps_w, eps_q, float(est.ess_fraction),
                              n_pts, n_edges, lb, lw, degenerate))
    return rows


def _run_trial_star(args):
    return run_trial(*args)


def run_experiment(spec):
    """Yield :class:`ResultRow` objects for every trial, in (trial, t) order."""
    jobs = [(spec, k) for k in range(spec.trials)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for rows in pool.map(_run_trial_star, jobs):
                yield from rows
    else:
        for job in jobs:
            yield from run_trial(*job)


def lump_check(scenario, trials=1, seed=0, beta_draws=4):
    """Verify the lump identities on simulated trajectories.

    For every step of every trial, recomposes the end-effector pose in the
    camera frame from the calibrated transform, the true lump, the measured
    joints and the true errors of joints after the lump boundary, and
    compares it with the simulator's ground truth.  Also checks the
    telescoping identity for ``beta_draws`` random weight vectors per step.
    Returns the largest translation (mm) and rotation (rad) residuals.
    """
    from .kinematics import analytical_lump

    worst = {"steps": 0, "pose_eps_b": 0.0, "pose_eps_w": 0.0, "beta_eps_b": 0.0, "beta_eps_w": 0.0}
    for trial in range(trials):
        sim_ss, _ = trial_seeds(seed, trial)
        sim = Simulation(scenario, sim_ss)
        chain = sim.scene.chain
        model = tk.TrackingModel.for_mode("lumped-plus-joints", chain, sim.scene.rig, sim.calib,
                                          sim.scene.camera_chain, sim.scene.camera_static)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(trial), 2]))
        for row in sim:
            C = RigidTransform.from_matrix(model.camera_from_base(row.q_cam_meas))
            q = np.array(row.q_meas)
            q[chain.n_b:] += row.joint_errors[chain.n_b:]
            ee = C @ row.true_lump @ forward_kinematics(chain, q, chain.ee_link)
            eb, ew = pose_error(row.ee_camera, ee)
            worst["pose_eps_b"] = max(worst["pose_eps_b"], eb)
            worst["pose_eps_w"] = max(worst["pose_eps_w"], ew)
            F_true = forward_kinematics(chain, row.q_meas + row.joint_errors, chain.n_b)
            for _ in range(beta_draws):
                beta = rng.uniform(0.0, 1.0, chain.n_b)
                qb = np.array(row.q_meas)
                qb[:chain.n_b] += beta * row.joint_errors[:chain.n_b]
                L = analytical_lump(chain, row.q_meas, row.joint_errors, beta)
                bb, bw = pose_error(F_true, L @ forward_kinematics(chain, qb, chain.n_b))
                worst["beta_eps_b"] = max(worst["beta_eps_b"], bb)
                worst["beta_eps_w"] = max(worst["beta_eps_w"], bw)
            worst["steps"] += 1
    return worst


def csv_header(joint_labels):
    return (["trial", "t", "eps_b", "eps_w"] + [f"eps_q{j}" for j in joint_labels]
            + ["ess", "n_pts", "n_edges", "lump_eps_b", "lump_eps_w", "degenerate"])


def _fmt(x):
    return repr(float(x))


def row_values(row):
    return ([row.trial, row.t, _fmt(row.eps_b), _fmt(row.eps_w)] + [_fmt(v) for v in row.eps_q]
            + [_fmt(row.ess), row.n_pts, row.n_edges, _fmt(row.lump_eps_b), _fmt(row.lump_eps_w),
               int(row.degenerate)])


def write_csv(rows, out, joint_labels):
    """Write rows to a path or text stream; returns the number of rows written."""
    own = isinstance(out, (str, bytes)) or hasattr(out, "__fspath__")
    fh = open(out, "w", newline="", encoding="utf-8") if own else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(joint_labels))
        n = 0
        for r in rows:
            w.writerow(row_values(r))
            n += 1
        return n
    finally:
        if own:
            fh.close()


def rows_to_csv_string(rows, joint_labels):
    buf = io.StringIO()
    write_csv(rows, buf, joint_labels)
    return buf.getvalue()


def read_csv(path):
    """Load a results CSV back into :class:`ResultRow` objects."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        qcols = [c for c in reader.fieldnames if c.startswith("eps_q")]
        return [ResultRow(int(d["trial"]), int(d["t"]), float(d["eps_b"]), float(d["eps_w"]),
                          tuple(float(d[c]) for c in qcols), float(d["ess"]), int(d["n_pts"]),
                          int(d["n_edges"]), float(d["lump_eps_b"]), float(d["lump_eps_w"]),
                          bool(int(d["degenerate"])))
                for d in reader]


def _stats(x):
    x = np.asarray(x, dtype=float)
    q25, q50, q75 = np.percentile(x, [25, 50, 75])
    return {"mean": float(x.mean()), "median": float(q50), "iqr": float(q75 - q25)}


def summarize(rows, burn_in=100, window=None):
    """Statistics over rows with ``burn_in <= t < burn_in + window``.

    Returns a dict with ``n_rows``, ``metrics`` (mean/median/IQR over rows),
    ``per_trial`` (per-trial means) and ``across_trials`` (mean/median/IQR of
    the per-trial means).
    """
    rows = list(rows)
    hi = np.inf if window is None else burn_in + window
    sel = [r for r in rows if burn_in <= r.t < hi]
    if not sel:
        raise InvalidInputError(f"no rows in the post-burn-in window starting at t={burn_in}")
    n_q = len(sel[0].eps_q)
    cols = {"eps_b": [r.eps_b for r in sel], "eps_w": [r.eps_w for r in sel],
            "lump_eps_b": [r.lump_eps_b for r in sel], "lump_eps_w": [r.lump_eps_w for r in sel],
            "ess": [r.ess for r in sel]}
    for k in range(n_q):
        cols[f"eps_q[{k}]"] = [r.eps_q[k] for r in sel]
    trials = sorted({r.trial for r in sel})
    per_trial = {}
    for name, vals in cols.items():
        v = np.asarray(vals)
        tr = np.array([r.trial for r in sel])
        per_trial[name] = {t: float(v[tr == t].mean()) for t in trials}
    return {
        "n_rows": len(sel),
        "trials": trials,
        "metrics": {name: _stats(vals) for name, vals in cols.items()},
        "per_trial": per_trial,
        "across_trials": {name: _stats(list(d.values())) for name, d in per_trial.items()},
        "degenerate_rows": int(sum(r.degenerate for r in sel)),
    }


__all__ = [
    "ExperimentSpec", "ResultRow", "CAMERA_MODES", "trial_seeds", "run_trial", "run_experiment",
    "summarize", "write_csv", "read_csv", "rows_to_csv_string", "csv_header",
    "estimated_ee_camera", "matched_counts", "lump_check",
]
