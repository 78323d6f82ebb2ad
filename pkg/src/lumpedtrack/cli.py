"""Command-line entry points.

Subcommands::

    simulate    write a feature stream (JSON lines) for one simulated trial
    track       run the particle filter over a feature stream
    run         simulate and track many trials, write per-step CSV results
    servo       drive the simulated tool to a camera-frame goal
    lump-check  verify the lump identities on simulated trajectories

Every subcommand takes ``--config`` (an experiment YAML file or
``preset:davinci`` / ``preset:baxter``) plus ``--trials``, ``--seed``,
``--mode``, ``--camera`` and ``--out`` overrides.  Configuration errors
exit with status 2 and a ``file:line`` message.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager

import numpy as np

from . import harness, presets, streams
from . import tracker as tk
from .config import load_experiment
from .control import Goal, IdentityTracker, OracleTracker, ParticleTracker, servo_loop
from .errors import ConfigError, InvalidInputError
from .simulator import Simulation

EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_CHECK = 1


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _load(args):
    return load_experiment(args.config, trials=args.trials, seed=args.seed, mode=args.mode,
                           camera=args.camera, steps=args.steps, burn_in=args.burn_in)


def cmd_simulate(args):
    exp = _load(args)
    spec = exp.spec
    trial = args.trial
    sim_ss, _ = harness.trial_seeds(spec.seed, trial)
    sim = Simulation(spec.scenario, sim_ss)
    rows = sim.run()
    with _output(args.out) as fh:
        streams.write_jsonl([streams.header_record(sim)] + [streams.step_record(r) for r in rows], fh)
    if args.truth:
        with open(args.truth, "w", encoding="utf-8") as fh:
            streams.write_jsonl([streams.truth_record(r) for r in rows], fh)
    return 0


def cmd_track(args):
    exp = _load(args)
    spec = exp.spec
    scene = spec.scenario.scene
    fin = sys.stdin if args.input in (None, "-") else open(args.input, encoding="utf-8")
    try:
        header, steps = streams.read_feature_stream(fin)
        if header.get("n_j") != scene.chain.n_j or bool(header.get("eye_in_hand")) != scene.eye_in_hand:
            raise InvalidInputError("feature stream does not match the configured scene")
        calib = streams.calib_from_header(header)
        model = tk.TrackingModel.for_mode(spec.mode, scene.chain, scene.rig, calib,
                                          scene.camera_chain, scene.camera_static)
        cfg = spec.filter_config
        state, rng = tk.initialize(cfg, spec.seed)
        with _output(args.out) as fh:
            for t, q_meas, q_cam, batches in steps:
                state, est = tk.update(state, cfg, model, q_meas, batches, rng, q_cam)
                fh.write(json.dumps(streams.estimate_record(t, est)) + "\n")
    finally:
        if fin is not sys.stdin:
            fin.close()
    return 0


def cmd_run(args):
    exp = _load(args)
    spec = exp.spec
    if args.workers is not None:
        from dataclasses import replace
        spec = replace(spec, workers=args.workers)
    rows = list(harness.run_experiment(spec))
    labels = spec.observable_joints()
    if args.out:
        harness.write_csv(rows, args.out, labels)
    summary = harness.summarize(rows, spec.burn_in)
    m = summary["metrics"]
    print(f"mode={spec.mode} camera={spec.camera} trials={spec.trials} seed={spec.seed} "
          f"rows={summary['n_rows']}", file=sys.stderr)
    for name in ("eps_b", "eps_w", "lump_eps_b", "lump_eps_w", "ess"):
        s = m[name]
        print(f"{name}: mean={s['mean']:.4f} median={s['median']:.4f} iqr={s['iqr']:.4f}",
              file=sys.stderr)
    if not args.out:
        harness.write_csv(rows, sys.stdout, labels)
    return 0


def cmd_servo(args):
    exp = _load(args)
    spec = exp.spec
    if spec.camera != "stationary":
        raise ConfigError(f"{exp.source}: servo requires a stationary camera")
    results = []
    for trial in range(spec.trials):
        sim_ss, filt_seed = harness.trial_seeds(spec.seed, trial)
        sim = Simulation(spec.scenario, sim_ss)
        start = sim.observe()
        goal = Goal(start.ee_camera.translation + np.asarray(args.goal_offset, dtype=float))
        if args.tracker == "oracle":
            tracker = OracleTracker()
        elif args.tracker == "identity":
            tracker = IdentityTracker()
        else:
            model = harness.build_model(spec, sim)
            cfg = presets.servo_filter_config(spec.filter_config, args.walk_scale)
            tracker = ParticleTracker(cfg, model, filt_seed, warmup=args.warmup)
        res = servo_loop(sim, tracker, exp.controller, goal)
        results.append({"trial": trial, "converged": res.converged, "iterations": res.iterations,
                        "terminal_error": res.terminal_error,
                        "log": [vars(s) for s in res.log]})
    with _output(args.out) as fh:
        json.dump({"tracker": args.tracker, "results": results}, fh, indent=1)
        fh.write("\n")
    for r in results:
        print(f"trial {r['trial']}: converged={r['converged']} iterations={r['iterations']} "
              f"terminal_error={r['terminal_error']:.4f} mm", file=sys.stderr)
    return 0


def cmd_lump_check(args):
    exp = _load(args)
    spec = exp.spec
    res = harness.lump_check(spec.scenario, spec.trials, spec.seed, args.beta_draws)
    ok = all(res[k] < args.tol for k in ("pose_eps_b", "pose_eps_w", "beta_eps_b", "beta_eps_w"))
    res["tolerance"] = args.tol
    res["pass"] = ok
    with _output(args.out) as fh:
        json.dump(res, fh, indent=1)
        fh.write("\n")
    return 0 if ok else EXIT_CHECK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="preset:davinci",
                        help="experiment YAML file or preset:davinci / preset:baxter")
    common.add_argument("--trials", type=int, default=None, help="number of trials")
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--mode", choices=tk.MODES, default=None, help="tracking mode")
    common.add_argument("--camera", choices=harness.CAMERA_MODES, default=None,
                        help="camera configuration (preset scenarios only)")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--steps", type=int, default=None, help="steps per trial")
    common.add_argument("--burn-in", type=int, default=None,
                        help="steps excluded from summaries (default 100, or half the steps)")

    p = argparse.ArgumentParser(prog="lumpedtrack", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write a feature stream")
    s.add_argument("--trial", type=int, default=0, help="trial index to simulate")
    s.add_argument("--truth", default=None, help="also write ground truth JSON lines here")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("track", parents=[common], help="track a feature stream")
    s.add_argument("--input", default=None, help="feature stream (default: stdin)")
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("run", parents=[common], help="simulate and track many trials")
    s.add_argument("--workers", type=int, default=None, help="worker processes")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("servo", parents=[common], help="closed-loop position servo")
    s.add_argument("--tracker", choices=("oracle", "identity", "particle"), default="particle")
    s.add_argument("--goal-offset", type=float, nargs=3, default=(6.0, -5.0, 4.0),
                   metavar=("DX", "DY", "DZ"), help="goal offset from the start position (mm)")
    s.add_argument("--warmup", type=int, default=presets.SERVO_WARMUP,
                   help="filter updates before the first move")
    s.add_argument("--walk-scale", type=float, default=presets.SERVO_WALK_SCALE,
                   help="factor applied to the lump random-walk variances while servoing")
    s.set_defaults(func=cmd_servo)

    s = sub.add_parser("lump-check", parents=[common], help="verify the lump identities")
    s.add_argument("--beta-draws", type=int, default=4)
    s.add_argument("--tol", type=float, default=1e-8)
    s.set_defaults(func=cmd_lump_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidInputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
