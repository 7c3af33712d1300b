"""Deterministic episode runner: trajectory -> observe -> delayed delivery
-> pose estimate -> predict -> target -> control step -> render -> metrics.

Per-tick faults (lost detection, unreachable targets, non-convergence) are
recorded in the log and never abort the episode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import arm, face as face_mod, geometry, mapping, servo
from .config import ScenarioConfig
from .errors import (DegenerateAim, FaceBehindProjector, InvalidDetection,
                     NotConverged, Unreachable)

# ticks without a fresh valid estimate before the joints freeze
GRACE_TICKS = 10

CSV_COLUMNS = ("t", "alignment_error_deg", "standoff_error_mm",
               "onface_mean_mm", "onface_max_mm", "est_distance_m",
               "true_distance_m", "q1", "q2", "q3", "q4", "q5", "q6",
               "detection_valid", "predictor_on")

_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class MetricsRow:
    t: float
    alignment_error_deg: float
    standoff_error_mm: float
    onface_mean_mm: float
    onface_max_mm: float
    est_distance_m: float
    true_distance_m: float
    q: np.ndarray
    detection_valid: bool
    predictor_on: bool

    def to_csv(self) -> str:
        nums = [self.t, self.alignment_error_deg, self.standoff_error_mm,
                self.onface_mean_mm, self.onface_max_mm, self.est_distance_m,
                self.true_distance_m, *self.q]
        return ",".join(f"{v:.9g}" for v in nums) \
            + f",{int(self.detection_valid)},{int(self.predictor_on)}"


@dataclass
class MetricsLog:
    rows: list[MetricsRow] = field(default_factory=list)
    fault_count: int = 0

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        lines.extend(row.to_csv() for row in self.rows)
        return "\n".join(lines) + "\n"


def parse_metrics_csv(text: str) -> MetricsLog:
    lines = text.strip().splitlines()
    if lines[0] != ",".join(CSV_COLUMNS):
        raise ValueError("unexpected CSV header")
    log = MetricsLog()
    for line in lines[1:]:
        f = line.split(",")
        log.rows.append(MetricsRow(
            t=float(f[0]), alignment_error_deg=float(f[1]),
            standoff_error_mm=float(f[2]), onface_mean_mm=float(f[3]),
            onface_max_mm=float(f[4]), est_distance_m=float(f[5]),
            true_distance_m=float(f[6]),
            q=np.array([float(v) for v in f[7:13]]),
            detection_valid=bool(int(f[13])), predictor_on=bool(int(f[14]))))
    return log


def _episode_template(cfg: ScenarioConfig) -> mapping.MaskTemplate:
    if cfg.template_kind == "custom":
        return mapping.load_template(cfg.template_texture, cfg.template_anchors)
    return mapping.make_template(cfg.template_kind, cfg.face)


class Episode:
    """One simulated run; tick() advances a single control period."""

    def __init__(self, cfg: ScenarioConfig, frame_callback=None):
        self.cfg = cfg
        self.clock = servo.SimClock()
        self.q = cfg.q_init.copy()
        self.tick_index = 0
        self.num_ticks = int(round(cfg.duration / cfg.gains.control_period))
        self.grace = 0
        self.frozen = False
        self.last_estimate: geometry.Pose | None = None
        self.predictor_state: servo.PredictorState | None = None
        self.predictor_time = 0.0
        self.template = _episode_template(cfg)
        self.frame_callback = frame_callback
        self.log = MetricsLog()

    def _capture(self, t: float):
        head = face_mod.head_pose_at(self.cfg.trajectory, t)
        cam_pose = arm.forward_kinematics(self.cfg.dh, self.q, self.cfg.camera_mount)
        det = face_mod.observe_landmarks(self.cfg.face, head, self.cfg.camera,
                                         cam_pose, self.cfg.noise_sigma,
                                         self.cfg.seed, t)
        return det, cam_pose

    def _consume(self, measurements) -> bool:
        """Fold delivered measurements into estimate + predictor."""
        cfg = self.cfg
        fresh = False
        for det, cam_pose in measurements:
            if not det.valid:
                self.log.fault_count += 1
                continue
            try:
                if self.last_estimate is None or self.grace > GRACE_TICKS:
                    seed_pose = face_mod.coarse_pose_from_detection(
                        det, cfg.face, cfg.camera, cam_pose)
                else:
                    seed_pose = self.last_estimate
                est = face_mod.estimate_head_pose(det, cfg.face, cfg.camera,
                                                  cam_pose, seed_pose)
            except (InvalidDetection, NotConverged, DegenerateAim):
                self.log.fault_count += 1
                continue
            self.last_estimate = est.pose
            if self.predictor_state is None:
                self.predictor_state = servo.init_predictor(est.pose)
            else:
                dt = det.capture_time - self.predictor_time
                if dt > 0:
                    self.predictor_state, _ = servo.predictor_step(
                        self.predictor_state, est.pose, dt, 0.0,
                        cfg.predictor_noise)
            self.predictor_time = det.capture_time
            fresh = True
        return fresh

    def _plan_pose(self, t_land: float) -> geometry.Pose | None:
        """Head pose the controller plans and renders against."""
        if self.cfg.predictor_enabled and self.predictor_state is not None:
            return servo.predict_pose(self.predictor_state,
                                      t_land - self.predictor_time)
        return self.last_estimate

    def tick(self) -> MetricsRow:
        cfg = self.cfg
        events = servo.pipeline_tick(self.clock, cfg.pipeline,
                                     cfg.gains.control_period, self._capture)
        fresh = self._consume(events.measurements)
        if fresh:
            self.grace = 0
            self.frozen = False
        else:
            self.grace += 1
            if self.grace > GRACE_TICKS:
                self.frozen = True

        t_land = events.command_effect_at
        plan_pose = self._plan_pose(t_land)

        q_new = self.q
        if not self.frozen and plan_pose is not None:
            try:
                plane = face_mod.fit_face_plane(plan_pose, cfg.face)
                target = servo.compute_target_pose(plane, cfg.gains)
                q_new = servo.control_step(self.q, target, cfg.dh,
                                           cfg.projector.mount, cfg.limits,
                                           cfg.gains)
            except (Unreachable, NotConverged, DegenerateAim):
                self.log.fault_count += 1
                q_new = self.q

        # hard safety invariant, independent of clamp_step's correctness
        dt = cfg.gains.control_period
        if (np.any(q_new < cfg.limits.lower - 1e-12)
                or np.any(q_new > cfg.limits.upper + 1e-12)
                or np.any(np.abs(q_new - self.q)
                          > cfg.limits.max_speed * dt * (1 + 1e-9) + 1e-12)):
            raise AssertionError("joint limit or speed bound violated")

        row = self._measure(events.time, t_land, q_new, plan_pose, fresh)
        if (cfg.dump_frames and plan_pose is not None
                and self.tick_index % cfg.frame_stride == 0):
            try:
                frame, _ = mapping.render_projector_frame(
                    self.template, plan_pose, cfg.face, cfg.projector,
                    arm.forward_kinematics(cfg.dh, q_new, cfg.projector.mount))
                if self.frame_callback is not None:
                    self.frame_callback(self.tick_index, frame)
            except FaceBehindProjector:
                self.log.fault_count += 1

        self.q = q_new
        self.tick_index += 1
        self.log.rows.append(row)
        return row

    def _measure(self, t: float, t_land: float, q_new: np.ndarray,
                 plan_pose: geometry.Pose | None, fresh: bool) -> MetricsRow:
        cfg = self.cfg
        truth = face_mod.head_pose_at(cfg.trajectory, t_land)
        true_plane = face_mod.fit_face_plane(truth, cfg.face)
        proj_pose = arm.forward_kinematics(cfg.dh, q_new, cfg.projector.mount)
        cam_pose = arm.forward_kinematics(cfg.dh, q_new, cfg.camera_mount)

        axis = proj_pose.rotation @ _Z
        cosang = float(np.clip(axis @ -true_plane.normal, -1.0, 1.0))
        alignment_deg = float(np.degrees(np.arccos(cosang)))
        standoff_mm = abs(float(np.linalg.norm(
            proj_pose.translation - true_plane.center)) - cfg.gains.standoff) * 1000.0
        true_dist = float(np.linalg.norm(cam_pose.translation - truth.translation))

        if plan_pose is not None:
            est_plane = face_mod.fit_face_plane(plan_pose, cfg.face)
            fm = mapping.FrameMapping(plan_pose, est_plane, cfg.projector, proj_pose)
            onface_mean, onface_max = mapping.onface_error(fm, truth, cfg.face)
            est_dist = float(np.linalg.norm(cam_pose.translation
                                            - plan_pose.translation))
        else:
            onface_mean = onface_max = est_dist = float("nan")

        return MetricsRow(t=t, alignment_error_deg=alignment_deg,
                          standoff_error_mm=standoff_mm,
                          onface_mean_mm=onface_mean, onface_max_mm=onface_max,
                          est_distance_m=est_dist, true_distance_m=true_dist,
                          q=q_new.copy(), detection_valid=fresh,
                          predictor_on=cfg.predictor_enabled)

    def run(self) -> MetricsLog:
        while self.tick_index < self.num_ticks:
            self.tick()
        return self.log


def run_scenario(cfg: ScenarioConfig, frame_callback=None) -> MetricsLog:
    """Run the full episode described by cfg; deterministic given the seed."""
    return Episode(cfg, frame_callback).run()


def summarize(log: MetricsLog) -> dict:
    """Aggregate stats for the run summary; the on-face figures are the
    headline metrics."""
    onface = np.array([r.onface_mean_mm for r in log.rows])
    finite = onface[np.isfinite(onface)]
    align = np.array([r.alignment_error_deg for r in log.rows])
    return {
        "ticks": len(log.rows),
        "faults": log.fault_count,
        "detection_valid_fraction":
            float(np.mean([r.detection_valid for r in log.rows])) if log.rows else 0.0,
        "onface_mean_mm_mean": float(finite.mean()) if finite.size else None,
        "onface_mean_mm_p95": float(np.percentile(finite, 95)) if finite.size else None,
        "final_alignment_error_deg": float(align[-1]) if log.rows else None,
        "final_standoff_error_mm":
            float(log.rows[-1].standoff_error_mm) if log.rows else None,
    }


def write_outputs(log: MetricsLog, frames, out_dir, config_raw: dict | None = None) -> list[str]:
    """metrics.csv + optional frame dumps + a JSON run summary.

    Returns the paths written.  Byte-identical for identical inputs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out / "metrics.csv"
    csv_path.write_text(log.to_csv())
    written.append(str(csv_path))
    if frames is not None:
        for i, frame in enumerate(frames):
            p = out / f"frame_{i:06d}.ppm"
            mapping.write_ppm(frame, p)
            written.append(str(p))
    payload = {"config": config_raw or {}, "summary": summarize(log)}
    json_path = out / "run.json"
    json_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    written.append(str(json_path))
    return written
