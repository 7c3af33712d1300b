"""Scenario configuration: a flat `section.key = value` text format with
typed defaults, unknown-key rejection, and construction of the typed
objects the episode runner consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import arm, face as face_mod, geometry, mapping, optics, servo
from .errors import ParseError, ValidationError

_UR3 = arm.ur3_dh()

_GT0 = ("> 0", lambda v: v > 0)
_GE0 = (">= 0", lambda v: v >= 0)
_FINITE = ("finite", lambda v: True)  # type parse already enforces finiteness
_ANY = ("", lambda v: True)

# key -> (type tag, default, (constraint text, predicate))
_SCHEMA: dict[str, tuple] = {
    "camera.fx": ("float", 1000.0, _GT0),
    "camera.fy": ("float", 1000.0, _GT0),
    "camera.cx": ("float", 640.0, _FINITE),
    "camera.cy": ("float", 360.0, _FINITE),
    "camera.width": ("int", 1280, _GT0),
    "camera.height": ("int", 720, _GT0),
    "projector.fx": ("float", 800.0, _GT0),
    "projector.fy": ("float", 800.0, _GT0),
    "projector.cx": ("float", 640.0, _FINITE),
    "projector.cy": ("float", 400.0, _FINITE),
    "projector.width": ("int", 1280, _GT0),
    "projector.height": ("int", 800, _GT0),
    "tool.projector.x": ("float", 0.04, _FINITE),
    "tool.projector.y": ("float", 0.0, _FINITE),
    "tool.projector.z": ("float", 0.0, _FINITE),
    "tool.camera.x": ("float", -0.04, _FINITE),
    "tool.camera.y": ("float", 0.0, _FINITE),
    "tool.camera.z": ("float", 0.0, _FINITE),
    "arm.a": ("float6", [float(v) for v in _UR3.a], _ANY),
    "arm.d": ("float6", [float(v) for v in _UR3.d], _ANY),
    "arm.alpha": ("float6", [float(v) for v in _UR3.alpha], _ANY),
    "arm.q_init": ("float6",
                   [1.3039, -1.1787, 2.4700, 1.7430, -1.3439, -3.0169], _ANY),
    "arm.limit.lower": ("float6", [-2.0 * math.pi] * 6, _ANY),
    "arm.limit.upper": ("float6", [2.0 * math.pi] * 6, _ANY),
    "arm.max_speed": ("float", math.pi, _GT0),
    "face.path": ("str", "", _ANY),
    "face.real_width": ("float", 0.15, _GT0),
    "trajectory.kind": ("str", "static",
                        (f"one of {face_mod.TRAJECTORY_KINDS}",
                         lambda v: v in face_mod.TRAJECTORY_KINDS)),
    "trajectory.amplitude": ("float", 0.0, _GE0),
    "trajectory.frequency": ("float", 0.0, _GE0),
    "trajectory.x": ("float", 0.0, _FINITE),
    "trajectory.y": ("float", -0.50, _FINITE),
    "trajectory.z": ("float", 0.28, _FINITE),
    # rest yaw sits 15 deg off the robot radial so the wrist fold (q5 = 0)
    # stays outside the tracked yaw band
    "trajectory.yaw": ("float", math.pi - 0.26, _FINITE),
    "trajectory.pitch": ("float", 0.0, _FINITE),
    "trajectory.roll": ("float", math.pi / 2.0, _FINITE),
    "noise.sigma_px": ("float", 0.5, _GE0),
    "servo.standoff": ("float", 0.2, _GT0),
    "servo.position_gain": ("float", 6.0, _GT0),
    "servo.orientation_gain": ("float", 6.0, _GT0),
    "servo.control_period": ("float", 1.0 / 30.0, _GT0),
    "latency.capture": ("float", 0.033, _GE0),
    "latency.detect": ("float", 0.020, _GE0),
    "latency.plan": ("float", 0.005, _GE0),
    "latency.project": ("float", 0.016, _GE0),
    "predictor.enabled": ("bool", True, _ANY),
    "predictor.accel_sigma": ("float", 2.0, _GT0),
    "predictor.ang_accel_sigma": ("float", 5.0, _GT0),
    "predictor.meas_pos_sigma": ("float", 0.002, _GE0),
    "predictor.meas_rot_sigma": ("float", 0.01, _GE0),
    "run.duration": ("float", 5.0, _GT0),
    "run.seed": ("int", 0, _GE0),
    "output.dump_frames": ("bool", False, _ANY),
    "output.frame_stride": ("int", 1, _GT0),
    "output.template": ("str", "beard",
                        (f"one of {mapping.MASK_KINDS}",
                         lambda v: v in mapping.MASK_KINDS)),
    "output.template_texture": ("str", "", _ANY),
    "output.template_anchors": ("str", "", _ANY),
}


def _parse_value(tag: str, token: str):
    if tag == "int":
        return int(token)
    if tag == "float":
        v = float(token)
        if not np.isfinite(v):
            raise ValueError("not finite")
        return v
    if tag == "bool":
        low = token.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError("not a boolean")
    if tag == "float6":
        parts = token.split()
        if len(parts) != 6:
            raise ValueError("expected 6 numbers")
        vals = [float(p) for p in parts]
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("not finite")
        return vals
    return token  # str


def parse_keyvalues(text: str) -> dict:
    """Raw `key = value` pairs against the schema; defaults fill the rest."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected 'key = value', got {line!r}")
        key, _, token = line.partition("=")
        key = key.strip()
        token = token.strip()
        if key not in _SCHEMA:
            raise ParseError(lineno, f"unknown key {key!r}")
        if key in values:
            raise ParseError(lineno, f"duplicate key {key!r}")
        tag = _SCHEMA[key][0]
        try:
            values[key] = _parse_value(tag, token)
        except ValueError as exc:
            raise ParseError(lineno, f"bad {tag} for {key!r}: {exc}") from exc
    for key, (_, default, _) in _SCHEMA.items():
        values.setdefault(key, list(default) if isinstance(default, list) else default)
    for key, (_, _, (text_c, pred)) in _SCHEMA.items():
        val = values[key]
        if isinstance(val, list):
            if not all(pred(v) for v in val):
                raise ValidationError(key, text_c)
        elif not pred(val):
            raise ValidationError(key, text_c)
    return values


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Everything an episode needs, fully constructed and validated."""

    camera: optics.CameraIntrinsics
    projector: optics.ProjectorModel
    camera_mount: object
    dh: arm.DHParams
    limits: arm.JointLimits
    q_init: np.ndarray
    face: face_mod.FaceModel
    trajectory: face_mod.HeadTrajectory
    noise_sigma: float
    gains: servo.ServoGains
    pipeline: servo.PipelineConfig
    predictor_enabled: bool
    predictor_noise: servo.PredictorNoise
    duration: float
    seed: int
    dump_frames: bool
    frame_stride: int
    template_kind: str
    template_texture: str
    template_anchors: str
    raw: dict


def _build(values: dict) -> ScenarioConfig:
    def g(key):
        return values[key]

    def _intrinsics(prefix):
        try:
            return optics.CameraIntrinsics(
                g(f"{prefix}.fx"), g(f"{prefix}.fy"), g(f"{prefix}.cx"),
                g(f"{prefix}.cy"), g(f"{prefix}.width"), g(f"{prefix}.height"))
        except ValueError as exc:
            raise ValidationError(prefix, str(exc)) from exc

    camera = _intrinsics("camera")
    projector = optics.ProjectorModel(
        _intrinsics("projector"),
        mount=geometry.translation(
            g("tool.projector.x"), g("tool.projector.y"), g("tool.projector.z")))
    camera_mount = geometry.translation(
        g("tool.camera.x"), g("tool.camera.y"), g("tool.camera.z"))

    dh = arm.DHParams(g("arm.a"), g("arm.d"), g("arm.alpha"), np.zeros(6))
    lower = np.array(g("arm.limit.lower"))
    upper = np.array(g("arm.limit.upper"))
    if np.any(lower >= upper):
        raise ValidationError("arm.limit", "lower < upper per joint")
    limits = arm.JointLimits(lower, upper, np.full(6, g("arm.max_speed")))
    q_init = np.array(g("arm.q_init"))
    if np.any(q_init < lower) or np.any(q_init > upper):
        raise ValidationError("arm.q_init", "within joint limits")

    path = g("face.path")
    try:
        if path:
            if not Path(path).is_file():
                raise ValidationError("face.path", "file exists")
            face = face_mod.load_face(path, real_width=g("face.real_width"))
        else:
            face = face_mod.default_face(real_width=g("face.real_width"))
    except ValueError as exc:
        raise ValidationError("face", str(exc)) from exc

    base = geometry.Pose(
        geometry.rot_z(g("trajectory.yaw")).rotation
        @ geometry.rot_y(g("trajectory.pitch")).rotation
        @ geometry.rot_x(g("trajectory.roll")).rotation,
        np.array([g("trajectory.x"), g("trajectory.y"), g("trajectory.z")]))
    trajectory = face_mod.HeadTrajectory(
        g("trajectory.kind"), g("trajectory.amplitude"),
        g("trajectory.frequency"), base)

    try:
        gains = servo.ServoGains(g("servo.standoff"), g("servo.position_gain"),
                                 g("servo.orientation_gain"),
                                 g("servo.control_period"))
        pipeline = servo.PipelineConfig(g("latency.capture"), g("latency.detect"),
                                        g("latency.plan"), g("latency.project"))
        predictor_noise = servo.PredictorNoise(
            g("predictor.accel_sigma"), g("predictor.ang_accel_sigma"),
            g("predictor.meas_pos_sigma"), g("predictor.meas_rot_sigma"))
    except ValueError as exc:
        raise ValidationError("servo/latency/predictor", str(exc)) from exc

    kind = g("output.template")
    texture = g("output.template_texture")
    anchors = g("output.template_anchors")
    if kind == "custom":
        if not texture or not anchors:
            raise ValidationError("output.template",
                                  "custom requires texture + anchors paths")
        for field_name, p in (("output.template_texture", texture),
                              ("output.template_anchors", anchors)):
            if not Path(p).is_file():
                raise ValidationError(field_name, "file exists")

    return ScenarioConfig(
        camera=camera, projector=projector, camera_mount=camera_mount,
        dh=dh, limits=limits, q_init=q_init, face=face, trajectory=trajectory,
        noise_sigma=g("noise.sigma_px"), gains=gains, pipeline=pipeline,
        predictor_enabled=g("predictor.enabled"),
        predictor_noise=predictor_noise, duration=g("run.duration"),
        seed=g("run.seed"), dump_frames=g("output.dump_frames"),
        frame_stride=g("output.frame_stride"), template_kind=kind,
        template_texture=texture, template_anchors=anchors,
        raw=dict(sorted(values.items())))


def load_scenario(text: str) -> ScenarioConfig:
    """Parse, default-fill, validate, and construct a scenario config."""
    return _build(parse_keyvalues(text))


def load_scenario_file(path) -> ScenarioConfig:
    return load_scenario(Path(path).read_text())


def with_overrides(cfg: ScenarioConfig, seed: int | None = None,
                   duration: float | None = None,
                   predictor: bool | None = None,
                   dump_frames: bool | None = None) -> ScenarioConfig:
    """CLI-level overrides; revalidates the touched fields."""
    raw = dict(cfg.raw)
    if seed is not None:
        if seed < 0:
            raise ValidationError("run.seed", ">= 0")
        raw["run.seed"] = int(seed)
    if duration is not None:
        if not (duration > 0):
            raise ValidationError("run.duration", "> 0")
        raw["run.duration"] = float(duration)
    if predictor is not None:
        raw["predictor.enabled"] = bool(predictor)
    if dump_frames is not None:
        raw["output.dump_frames"] = bool(dump_frames)
    return _build(raw)
