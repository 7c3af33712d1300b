"""Command-line front end: scenario runs, config validation, and one-shot
forward/inverse kinematics queries.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import arm, config, geometry, mapping, runner
from .errors import FaceProjError, ParseError, ValidationError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faceproj",
        description="Robot-held projector simulator: track a face and keep "
                    "mask content registered on it.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario episode")
    run.add_argument("--config", required=True, help="scenario config file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--duration", type=float, default=None,
                     help="episode length in seconds")
    run.add_argument("--no-predictor", action="store_true",
                     help="disable latency compensation")
    run.add_argument("--dump-frames", action="store_true",
                     help="write rendered projector frames as PPM")

    val = sub.add_parser("validate", help="check a config file and exit")
    val.add_argument("--config", required=True)

    fk = sub.add_parser("fk", help="forward kinematics for one joint vector")
    fk.add_argument("--q", required=True,
                    help="six joint angles in radians, space separated")
    fk.add_argument("--tool", choices=("flange", "camera", "projector"),
                    default="flange")
    fk.add_argument("--config", default=None,
                    help="optional config supplying arm geometry")

    ik = sub.add_parser("ik", help="inverse kinematics for one target pose")
    ik.add_argument("--pose", required=True,
                    help="x y z yaw pitch roll (meters, radians)")
    ik.add_argument("--seed-q", default="0 -1.8 -1.4 -1.5 1.5708 0",
                    help="starting joint vector")
    ik.add_argument("--tool", choices=("flange", "camera", "projector"),
                    default="flange")
    ik.add_argument("--config", default=None)
    return parser


def _load_config(path: str | None) -> config.ScenarioConfig:
    if path is None:
        return config.load_scenario("")
    return config.load_scenario_file(path)


def _tool_pose(cfg: config.ScenarioConfig, which: str):
    if which == "camera":
        return cfg.camera_mount
    if which == "projector":
        return cfg.projector.mount
    return None


def _parse_floats(text: str, count: int) -> np.ndarray:
    vals = [float(v) for v in text.split()]
    if len(vals) != count:
        raise ValueError(f"expected {count} numbers, got {len(vals)}")
    return np.array(vals)


def _cmd_run(args) -> int:
    cfg = config.load_scenario_file(args.config)
    cfg = config.with_overrides(
        cfg, seed=args.seed, duration=args.duration,
        predictor=False if args.no_predictor else None,
        dump_frames=True if args.dump_frames else None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    callback = None
    if cfg.dump_frames:
        def callback(tick_index, frame):
            mapping.write_ppm(frame, out / f"frame_{tick_index:06d}.ppm")

    log = runner.run_scenario(cfg, frame_callback=callback)
    written = runner.write_outputs(log, None, out, config_raw=cfg.raw)
    summary = runner.summarize(log)
    for path in written:
        print(path)
    mean = summary["onface_mean_mm_mean"]
    p95 = summary["onface_mean_mm_p95"]
    print(f"ticks={summary['ticks']} faults={summary['faults']} "
          f"onface_mean_mm={mean if mean is None else format(mean, '.3f')} "
          f"onface_p95_mm={p95 if p95 is None else format(p95, '.3f')} "
          f"final_alignment_deg={summary['final_alignment_error_deg']:.4f}")
    return 0


def _cmd_validate(args) -> int:
    config.load_scenario_file(args.config)
    print(f"{args.config}: OK")
    return 0


def _cmd_fk(args) -> int:
    cfg = _load_config(args.config)
    q = _parse_floats(args.q, 6)
    pose = arm.forward_kinematics(cfg.dh, q, _tool_pose(cfg, args.tool))
    rv = geometry.rotvec_from_rotation(pose.rotation)
    print("position_m", " ".join(f"{v:.9g}" for v in pose.translation))
    print("rotvec_rad", " ".join(f"{v:.9g}" for v in rv))
    return 0


def _cmd_ik(args) -> int:
    cfg = _load_config(args.config)
    vals = _parse_floats(args.pose, 6)
    rot = (geometry.rot_z(vals[3]).rotation
           @ geometry.rot_y(vals[4]).rotation
           @ geometry.rot_x(vals[5]).rotation)
    target = geometry.Pose(rot, vals[:3])
    seed = _parse_floats(args.seed_q, 6)
    q = arm.inverse_kinematics(cfg.dh, target, seed, _tool_pose(cfg, args.tool))
    print("q_rad", " ".join(f"{v:.9g}" for v in q))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "validate": _cmd_validate,
                "fk": _cmd_fk, "ik": _cmd_ik}
    try:
        return handlers[args.command](args)
    except ParseError as exc:
        print(f"config parse error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"config validation error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2
    except (FaceProjError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
