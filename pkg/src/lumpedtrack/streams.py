"""Line-delimited JSON feature streams and estimate streams.

Feature stream: a header record followed by one record per time step::

    {"type": "header", "n_j": 7, "n_cameras": 2, "calib": {"w": [...], "b": [...]}, ...}
    {"t": 0, "q_meas": [...], "q_cam_meas": [...] | null,
     "cameras": [{"points": [[u, v, eta], ...], "landmarks": [...] | null,
                  "edges": [[rho, phi], ...]}, ...]}

``calib`` is the calibrated base-to-camera transform (stationary camera) or
base-to-base transform (camera arm) the estimator should start from.
Estimate stream: one ``{"t", "w", "b", "e", "ess_fraction"}`` record per step.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import InvalidInputError
from .se3 import AxisAnglePose
from .tracker import FeatureBatch


def _floats(x):
    return [float(v) for v in np.ravel(x)]


def header_record(sim):
    calib = sim.calib.as_axis_angle()
    scene = sim.scene
    return {"type": "header", "scenario": sim.scenario.name, "n_j": scene.chain.n_j,
            "n_b": scene.chain.n_b, "n_cameras": len(scene.rig),
            "eye_in_hand": bool(scene.eye_in_hand),
            "calib": {"w": _floats(calib.w), "b": _floats(calib.b)}}


def step_record(row):
    cams = []
    for b in row.batches:
        pts = [[float(u), float(v), float(c)] for (u, v), c in zip(b.points, b.confidences)]
        cams.append({"points": pts,
                     "landmarks": None if b.landmarks is None else [int(i) for i in b.landmarks],
                     "edges": [[float(r), float(p)] for r, p in b.edges]})
    return {"t": int(row.t), "q_meas": _floats(row.q_meas),
            "q_cam_meas": None if row.q_cam_meas is None else _floats(row.q_cam_meas),
            "cameras": cams}


def truth_record(row):
    lump = row.true_lump.as_axis_angle()
    ee = row.ee_camera.as_axis_angle()
    return {"t": int(row.t), "q": _floats(row.q), "lump": {"w": _floats(lump.w), "b": _floats(lump.b)},
            "ee_camera": {"w": _floats(ee.w), "b": _floats(ee.b)}}


def write_jsonl(records, fh):
    n = 0
    for rec in records:
        fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
        n += 1
    return n


def parse_step(rec, n_j=None, n_cameras=None):
    """Turn one step record into ``(t, q_meas, q_cam_meas, batches)``."""
    try:
        t = int(rec["t"])
        q = np.asarray(rec["q_meas"], dtype=float)
        qc = rec.get("q_cam_meas")
        qc = None if qc is None else np.asarray(qc, dtype=float)
        batches = []
        for ci, cam in enumerate(rec["cameras"]):
            pts = np.asarray(cam.get("points", []), dtype=float).reshape(-1, 3)
            edges = np.asarray(cam.get("edges", []), dtype=float).reshape(-1, 2)
            batches.append(FeatureBatch(ci, pts[:, :2], edges, pts[:, 2], cam.get("landmarks")))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed stream record: {exc}") from exc
    if n_j is not None and q.shape != (n_j,):
        raise InvalidInputError(f"record t={t}: expected {n_j} joint readings, got {q.shape}")
    if n_cameras is not None and len(batches) > n_cameras:
        raise InvalidInputError(f"record t={t}: {len(batches)} cameras exceed rig size {n_cameras}")
    return t, q, qc, batches


def read_feature_stream(fh):
    """Return ``(header, iterator over parsed steps)``."""
    lines = (ln for ln in fh if ln.strip())
    try:
        header = json.loads(next(lines))
    except StopIteration:
        raise InvalidInputError("empty feature stream") from None
    if header.get("type") != "header":
        raise InvalidInputError("feature stream must start with a header record")

    def steps():
        for ln in lines:
            yield parse_step(json.loads(ln), header.get("n_j"), header.get("n_cameras"))

    return header, steps()


def calib_from_header(header):
    c = header["calib"]
    return AxisAnglePose(c["w"], c["b"]).to_transform()


def estimate_record(t, est):
    return {"t": int(t), "w": _floats(est.lump.w), "b": _floats(est.lump.b),
            "e": _floats(est.joint_errors), "ess_fraction": float(est.ess_fraction)}
