"""Strict YAML configuration for chains, rigs, scenarios, filters and experiments.

Unknown keys are rejected and every error names the file and line.  A file
may reference another file by a relative path string wherever a mapping is
expected.  ``preset: davinci`` / ``preset: baxter`` picks a built-in
scenario or filter, optionally overridden key by key.

Experiment file layout::

    scenario: {preset: davinci, camera: stationary, steps: 140}   # or a path / explicit mapping
    filter: {preset: davinci, n_particles: 1000}                  # or a path / explicit mapping
    mode: lumped
    trials: 20
    seed: 0
    burn_in: 100
    controller: {step_size: 3.0, tolerance: 0.5, max_iterations: 50}
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

import numpy as np
import yaml

from . import presets
from .camera import CameraModel, CylinderPrimitive
from .control import ControllerConfig
from .errors import ConfigError, InvalidInputError
from .harness import ExperimentSpec
from .kinematics import KinematicChain, MDHJoint, ToolPoint
from .se3 import AxisAnglePose, RigidTransform
from .simulator import DetectionNoise, NoiseModel, Scenario, Scene, TrajectorySpec
from .tracker import MODES, FilterConfig


class LineDict(dict):
    """Mapping that remembers the source line of each key."""

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.lines = {}
        self.line = 0
        self.source = "<config>"


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    d = LineDict()
    d.line = node.start_mark.line + 1
    d.source = loader.source_name
    for k_node, v_node in node.value:
        key = loader.construct_object(k_node, deep=True)
        d[key] = loader.construct_object(v_node, deep=True)
        d.lines[key] = k_node.start_mark.line + 1
    return d


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def load_yaml(path_or_text, source=None):
    """Parse YAML from a path or a text string (when ``source`` is given)."""
    if source is None:
        source = os.fspath(path_or_text)
        try:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{source}: cannot read ({exc.strerror})") from exc
    else:
        text = path_or_text
    loader = _LineLoader(text)
    loader.source_name = source
    try:
        data = loader.get_single_data()
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from exc
    finally:
        loader.dispose()
    if data is None:
        data = LineDict()
        data.source = source
    return data


def _where(d, key=None):
    src = getattr(d, "source", "<config>")
    line = d.lines.get(key, d.line) if isinstance(d, LineDict) and key is not None else getattr(d, "line", 0)
    return f"{src}:{line}"


def _check_keys(d, allowed, required=(), what="section"):
    if not isinstance(d, dict):
        raise ConfigError(f"{what} must be a mapping")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{_where(d, k)}: unknown key {k!r} in {what} "
                              f"(allowed: {', '.join(sorted(allowed))})")
    for k in required:
        if k not in d:
            raise ConfigError(f"{_where(d)}: missing required key {k!r} in {what}")


def _num(d, key, default=None, kind=float):
    if key not in d:
        if default is None:
            raise ConfigError(f"{_where(d)}: missing required key {key!r}")
        return default
    try:
        v = kind(d[key])
    except (TypeError, ValueError):
        what = "an integer" if kind is int else "a number"
        raise ConfigError(f"{_where(d, key)}: {key} must be {what}") from None
    if kind is float and not np.isfinite(v):
        raise ConfigError(f"{_where(d, key)}: {key} must be finite")
    return v


def _vec(d, key, n=None, default=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"{_where(d)}: missing required key {key!r}")
        return default
    try:
        v = np.asarray(d[key], dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ConfigError(f"{_where(d, key)}: {key} must be a list of numbers") from None
    if n is not None and v.size != n:
        raise ConfigError(f"{_where(d, key)}: {key} needs {n} values, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ConfigError(f"{_where(d, key)}: {key} must be finite")
    return v


def _resolve(value, base_dir):
    """Load a referenced file when ``value`` is a path string."""
    if isinstance(value, str):
        path = value if os.path.isabs(value) else os.path.join(base_dir, value)
        return load_yaml(path), os.path.dirname(path)
    return value, base_dir


def _pose(d, what):
    _check_keys(d, {"w", "b"}, ("w", "b"), what)
    return AxisAnglePose(_vec(d, "w", 3), _vec(d, "b", 3)).to_transform()


def _guard(d, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (InvalidInputError, TypeError) as exc:
        raise ConfigError(f"{_where(d)}: {exc}") from exc


# -- chain and rig -----------------------------------------------------------

def chain_from_dict(d):
    _check_keys(d, {"name", "n_b", "ee_link", "joints", "tool_points", "cylinders"},
                ("joints",), "chain")
    joints = []
    for j in d["joints"]:
        _check_keys(j, {"kind", "alpha", "a", "theta_offset", "d_offset"}, ("alpha", "a"), "joint")
        joints.append(_guard(j, MDHJoint, _num(j, "alpha"), _num(j, "a"),
                             _num(j, "theta_offset", 0.0), _num(j, "d_offset", 0.0),
                             j.get("kind", "revolute")))
    pts = []
    for p in d.get("tool_points", []) or []:
        _check_keys(p, {"link", "position"}, ("link", "position"), "tool point")
        pts.append(ToolPoint(_num(p, "link", kind=int), _vec(p, "position", 3)))
    cyls = []
    for c in d.get("cylinders", []) or []:
        _check_keys(c, {"link", "radius", "direction", "point"}, ("link", "radius", "direction"),
                    "cylinder")
        cyls.append(_guard(c, CylinderPrimitive, _num(c, "radius"), _vec(c, "direction", 3),
                           _vec(c, "point", 3, np.zeros(3)), _num(c, "link", kind=int)))
    ee = d.get("ee_link")
    return _guard(d, KinematicChain, tuple(joints), _num(d, "n_b", 0, int), tuple(pts), tuple(cyls),
                  None if ee is None else _num(d, "ee_link", kind=int), str(d.get("name", "chain")))


def chain_to_dict(chain):
    return {
        "name": chain.name, "n_b": chain.n_b, "ee_link": chain.ee_link,
        "joints": [{"kind": j.kind, "alpha": j.alpha, "a": j.a, "theta_offset": j.theta_offset,
                    "d_offset": j.d_offset} for j in chain.joints],
        "tool_points": [{"link": p.link, "position": [float(x) for x in p.position]}
                        for p in chain.tool_points],
        "cylinders": [{"link": c.link, "radius": c.radius,
                       "direction": [float(x) for x in c.direction],
                       "point": [float(x) for x in c.point]} for c in chain.cylinders],
    }


def rig_from_dict(d):
    _check_keys(d, {"cameras"}, ("cameras",), "rig")
    cams = []
    for c in d["cameras"]:
        _check_keys(c, {"fx", "fy", "cu", "cv", "width", "height", "extrinsic"},
                    ("fx", "fy", "cu", "cv", "width", "height"), "camera")
        ext = _pose(c["extrinsic"], "extrinsic") if "extrinsic" in c else RigidTransform.identity()
        cams.append(_guard(c, CameraModel, _num(c, "fx"), _num(c, "fy"), _num(c, "cu"),
                           _num(c, "cv"), _num(c, "width", kind=int), _num(c, "height", kind=int),
                           ext))
    if not cams:
        raise ConfigError(f"{_where(d)}: rig needs at least one camera")
    return tuple(cams)


def _pose_dict(T):
    p = T.as_axis_angle()
    return {"w": [float(x) for x in p.w], "b": [float(x) for x in p.b]}


def rig_to_dict(rig):
    return {"cameras": [{"fx": c.fx, "fy": c.fy, "cu": c.cu, "cv": c.cv, "width": c.width,
                         "height": c.height, "extrinsic": _pose_dict(c.extrinsic)} for c in rig]}


# -- scenario ----------------------------------------------------------------

_NOISE_KEYS = {f.name for f in fields(NoiseModel)}
_TRAJ_KEYS = {f.name for f in fields(TrajectorySpec)}
_DET_KEYS = {f.name for f in fields(DetectionNoise)}


def _dataclass_from(d, cls, keys, what, base=None):
    _check_keys(d, keys, (), what)
    kw = {}
    for k, v in d.items():
        kw[k] = v
    try:
        return replace(base, **kw) if base is not None else cls(**kw)
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise ConfigError(f"{_where(d)}: invalid {what}: {exc}") from exc


def scenario_from_dict(d, base_dir=".", camera=None, steps=None):
    """Build a :class:`Scenario`; ``camera``/``steps`` override preset values."""
    if "preset" in d:
        _check_keys(d, {"preset", "camera", "steps", "noise", "trajectory", "detection", "name"},
                    ("preset",), "scenario")
        name = d["preset"]
        cam = camera or d.get("camera", "stationary")
        if name == "davinci":
            if cam not in ("stationary", "eye-in-hand"):
                raise ConfigError(f"{_where(d, 'camera')}: unknown camera mode {cam!r}")
            sc = presets.davinci_scenario(cam)
        elif name == "baxter":
            if cam != "stationary":
                raise ConfigError(f"{_where(d, 'camera')}: baxter preset has a stationary camera only")
            sc = presets.baxter_scenario()
        else:
            raise ConfigError(f"{_where(d, 'preset')}: unknown scenario preset {name!r}")
        if "noise" in d:
            sc = replace(sc, noise=_dataclass_from(d["noise"], NoiseModel, _NOISE_KEYS, "noise",
                                                   sc.noise))
        if "trajectory" in d:
            sc = replace(sc, trajectory=_dataclass_from(d["trajectory"], TrajectorySpec, _TRAJ_KEYS,
                                                        "trajectory", sc.trajectory))
        if "detection" in d:
            sc = replace(sc, detection=_dataclass_from(d["detection"], DetectionNoise, _DET_KEYS,
                                                       "detection", sc.detection))
        n = steps if steps is not None else (_num(d, "steps", kind=int) if "steps" in d else None)
        if n is not None:
            sc = _guard(d, sc.with_steps, n)
        return _guard(d, Scenario, sc.scene, sc.noise, sc.trajectory, sc.detection,
                      str(d.get("name", sc.name)))

    _check_keys(d, {"name", "chain", "rig", "q0", "base_to_camera", "camera_arm", "noise",
                    "trajectory", "detection"},
                ("chain", "rig", "q0", "base_to_camera", "noise", "trajectory"), "scenario")
    cd, _ = _resolve(d["chain"], base_dir)
    chain = chain_from_dict(cd)
    rd, _ = _resolve(d["rig"], base_dir)
    rig = rig_from_dict(rd)
    cam_chain = cam_static = q_cam0 = None
    if "camera_arm" in d:
        arm = d["camera_arm"]
        _check_keys(arm, {"chain", "q0", "static"}, ("chain", "q0"), "camera_arm")
        acd, _ = _resolve(arm["chain"], base_dir)
        cam_chain = chain_from_dict(acd)
        q_cam0 = _vec(arm, "q0", cam_chain.n_j)
        cam_static = _pose(arm["static"], "static") if "static" in arm else RigidTransform.identity()
    if camera is not None and (camera == "eye-in-hand") != (cam_chain is not None):
        raise ConfigError(f"{_where(d)}: scenario camera mode does not match requested {camera!r}")
    scene = _guard(d, Scene, chain, rig, _vec(d, "q0", chain.n_j), _pose(d["base_to_camera"],
                   "base_to_camera"), cam_chain, cam_static, q_cam0, str(d.get("name", "scene")))
    noise = _dataclass_from(d["noise"], NoiseModel, _NOISE_KEYS, "noise")
    traj = _dataclass_from(d["trajectory"], TrajectorySpec, _TRAJ_KEYS, "trajectory")
    det = (_dataclass_from(d["detection"], DetectionNoise, _DET_KEYS, "detection")
           if "detection" in d else DetectionNoise())
    sc = _guard(d, Scenario, scene, noise, traj, det, str(d.get("name", "scenario")))
    if steps is not None:
        sc = _guard(d, sc.with_steps, steps)
    return sc


def scenario_to_dict(sc):
    def tup(x):
        return [float(v) for v in x]

    s = sc.scene
    out = {"name": sc.name, "chain": chain_to_dict(s.chain), "rig": rig_to_dict(s.rig),
           "q0": tup(s.q0), "base_to_camera": _pose_dict(s.base_to_camera)}
    if s.eye_in_hand:
        out["camera_arm"] = {"chain": chain_to_dict(s.camera_chain), "q0": tup(s.q_cam0),
                             "static": _pose_dict(s.camera_static)}
    out["noise"] = {f.name: tup(getattr(sc.noise, f.name)) for f in fields(NoiseModel)}
    tr = {}
    for f in fields(TrajectorySpec):
        v = getattr(sc.trajectory, f.name)
        tr[f.name] = tup(v) if isinstance(v, tuple) else v
    out["trajectory"] = tr
    det = {}
    for f in fields(DetectionNoise):
        v = getattr(sc.detection, f.name)
        det[f.name] = tup(v) if isinstance(v, tuple) else v
    out["detection"] = det
    return out


# -- filter ------------------------------------------------------------------

_FILTER_KEYS = {f.name for f in fields(FilterConfig)}


def filter_from_dict(d, mode=None, camera="stationary"):
    """Build a :class:`FilterConfig`; ``mode`` overrides the file's mode."""
    _check_keys(d, _FILTER_KEYS | {"preset", "literal_rotation_var"}, (), "filter")
    kw = {k: v for k, v in d.items() if k not in ("preset", "literal_rotation_var", "mode")}
    m = mode or d.get("mode", "lumped")
    if m not in MODES:
        raise ConfigError(f"{_where(d, 'mode')}: unknown mode {m!r}")
    try:
        if "preset" in d:
            if d["preset"] == "davinci":
                return presets.davinci_filter_config(
                    m, camera, literal_rotation_var=bool(d.get("literal_rotation_var", False)), **kw)
            if d["preset"] == "baxter":
                return presets.baxter_filter_config(m, **kw)
            raise ConfigError(f"{_where(d, 'preset')}: unknown filter preset {d['preset']!r}")
        if "literal_rotation_var" in d:
            raise ConfigError(f"{_where(d, 'literal_rotation_var')}: only valid with a preset")
        return FilterConfig(mode=m, **kw)
    except (InvalidInputError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError) and str(exc).startswith(getattr(d, "source", "")):
            raise
        raise ConfigError(f"{_where(d)}: invalid filter: {exc}") from exc


def filter_to_dict(cfg):
    out = {}
    for f in fields(FilterConfig):
        v = getattr(cfg, f.name)
        out[f.name] = [float(x) for x in v] if isinstance(v, tuple) else v
    return out


# -- experiment --------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    spec: ExperimentSpec
    controller: ControllerConfig
    source: str


_EXPERIMENT_KEYS = {"scenario", "filter", "mode", "trials", "seed", "burn_in", "workers",
                    "controller", "camera", "steps"}


def required_joint_errors(mode, scenario):
    s = scenario.scene
    if mode == "lumped":
        return 0
    if mode == "lumped-plus-joints":
        return s.chain.n_j - s.chain.n_b
    return s.chain.n_j + s.n_camera_joints


def default_burn_in(steps):
    """100 steps, or half the run when it is not longer than that."""
    return 100 if steps > 100 else steps // 2


def experiment_from_dict(d, base_dir=".", trials=None, seed=None, mode=None, camera=None,
                         steps=None, burn_in=None):
    _check_keys(d, _EXPERIMENT_KEYS, ("scenario",), "experiment")
    camera = camera or d.get("camera")
    if camera is not None and camera not in ("stationary", "eye-in-hand"):
        raise ConfigError(f"{_where(d, 'camera')}: unknown camera mode {camera!r}")
    if steps is None and "steps" in d:
        steps = _num(d, "steps", kind=int)
    sd, sdir = _resolve(d["scenario"], base_dir)
    scenario = scenario_from_dict(sd, sdir, camera, steps)
    cam = "eye-in-hand" if scenario.scene.eye_in_hand else "stationary"
    m = mode or d.get("mode", "lumped")
    if m not in MODES:
        raise ConfigError(f"{_where(d, 'mode')}: unknown mode {m!r}")
    fd, _ = _resolve(d.get("filter", LineDict(preset="davinci")), base_dir)
    cfg = filter_from_dict(fd, m, cam)
    need = required_joint_errors(m, scenario)
    if cfg.n_joint_errors != need:
        raise ConfigError(f"{_where(fd)}: mode {m!r} needs {need} joint-error bounds, "
                          f"filter gives {cfg.n_joint_errors}")
    ctl = d.get("controller", {})
    _check_keys(ctl, {f.name for f in fields(ControllerConfig)}, (), "controller")
    try:
        controller = ControllerConfig(**ctl)
        spec = ExperimentSpec(scenario, cfg, m,
                              trials if trials is not None else _num(d, "trials", 1, int),
                              seed if seed is not None else _num(d, "seed", 0, int),
                              burn_in if burn_in is not None
                              else _num(d, "burn_in", default_burn_in(scenario.trajectory.steps), int),
                              _num(d, "workers", 1, int))
    except (InvalidInputError, TypeError) as exc:
        raise ConfigError(f"{_where(d)}: {exc}") from exc
    if not 0 <= spec.burn_in < scenario.trajectory.steps:
        raise ConfigError(f"{_where(d, 'burn_in')}: burn_in {spec.burn_in} leaves no steps "
                          f"(scenario has {scenario.trajectory.steps})")
    return ExperimentConfig(spec, controller, getattr(d, "source", "<config>"))


def load_experiment(path, **overrides):
    """Load an experiment file, or a ``preset:<name>`` shortcut."""
    path = os.fspath(path)
    if path.startswith("preset:"):
        d = LineDict(scenario=LineDict(preset=path.split(":", 1)[1]),
                     filter=LineDict(preset=path.split(":", 1)[1]))
        d.source = path
        return experiment_from_dict(d, ".", **overrides)
    d = load_yaml(path)
    return experiment_from_dict(d, os.path.dirname(os.path.abspath(path)), **overrides)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def dump_yaml(data):
    return yaml.safe_dump(_plain(data), sort_keys=False)


__all__ = [
    "load_yaml", "chain_from_dict", "chain_to_dict", "rig_from_dict", "rig_to_dict",
    "scenario_from_dict", "scenario_to_dict", "filter_from_dict", "filter_to_dict",
    "ExperimentConfig", "experiment_from_dict", "load_experiment", "dump_yaml",
    "required_joint_errors", "default_burn_in",
]
