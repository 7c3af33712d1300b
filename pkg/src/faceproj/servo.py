"""Eye-in-hand servo loop pieces: target pose from the face plane, a
constant-velocity Kalman predictor for latency compensation, the
rate-limited joint step, and the simulated capture/command pipeline.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import arm, geometry
from .face import FacePlane

WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ServoGains:
    """Loop shaping: commanded standoff plus first-order pose gains."""

    standoff: float = 0.6
    position_gain: float = 6.0
    orientation_gain: float = 6.0
    control_period: float = 1.0 / 30.0

    def __post_init__(self):
        for name in ("standoff", "position_gain", "orientation_gain", "control_period"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be > 0, got {v}")


@dataclass(frozen=True)
class PipelineConfig:
    """One-way delays through the capture/command pipeline, seconds."""

    capture_latency: float = 0.033
    detect_latency: float = 0.020
    plan_latency: float = 0.005
    project_latency: float = 0.016

    def __post_init__(self):
        for name in ("capture_latency", "detect_latency", "plan_latency",
                     "project_latency"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be >= 0, got {v}")

    @property
    def total(self) -> float:
        return (self.capture_latency + self.detect_latency
                + self.plan_latency + self.project_latency)

    @property
    def measurement_delay(self) -> float:
        return self.capture_latency + self.detect_latency

    @property
    def command_delay(self) -> float:
        return self.plan_latency + self.project_latency


def compute_target_pose(plane: FacePlane, gains: ServoGains,
                        up_hint=WORLD_UP) -> geometry.Pose:
    """Projector pose at standoff along the face normal, axis aimed back
    at the plane center. Roll is fixed by up_hint."""
    position = plane.center + gains.standoff * plane.normal
    return geometry.look_at_pose(position, plane.center, up_hint)


# Constant-velocity filter over [position, velocity, orientation, spin].
# The orientation mean is kept as a rotation matrix; the covariance tracks
# a left-multiplicative rotation-vector deviation (error-state form).
_POS = slice(0, 3)
_VEL = slice(3, 6)
_ANG = slice(6, 9)
_SPIN = slice(9, 12)


@dataclass(frozen=True)
class PredictorState:
    position: np.ndarray
    velocity: np.ndarray
    rotation: np.ndarray
    ang_velocity: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (12, 12):
            raise ValueError("covariance must be 12x12")
        if not np.allclose(cov, cov.T, atol=1e-9):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-9:
            raise ValueError("covariance must be positive semidefinite")


@dataclass(frozen=True)
class PredictorNoise:
    """Process (white-acceleration) and measurement standard deviations."""

    accel_sigma: float = 2.0
    ang_accel_sigma: float = 5.0
    meas_pos_sigma: float = 0.002
    meas_rot_sigma: float = 0.01

    def __post_init__(self):
        if self.accel_sigma <= 0 or self.ang_accel_sigma <= 0:
            raise ValueError("process noise must be > 0")
        if self.meas_pos_sigma < 0 or self.meas_rot_sigma < 0:
            raise ValueError("measurement noise must be >= 0")


def init_predictor(pose: geometry.Pose, pos_var: float = 1.0,
                   vel_var: float = 1.0, ang_var: float = 1.0,
                   spin_var: float = 1.0) -> PredictorState:
    cov = np.diag(np.concatenate([np.full(3, pos_var), np.full(3, vel_var),
                                  np.full(3, ang_var), np.full(3, spin_var)]))
    return PredictorState(pose.translation.copy(), np.zeros(3),
                          pose.rotation.copy(), np.zeros(3), cov)


def _process_noise(dt: float, noise: PredictorNoise) -> np.ndarray:
    q = np.zeros((12, 12))
    for block, sigma in ((0, noise.accel_sigma), (6, noise.ang_accel_sigma)):
        s2 = sigma * sigma
        for axis in range(3):
            i = block + axis
            j = block + 3 + axis
            q[i, i] = s2 * dt ** 4 / 4.0
            q[i, j] = q[j, i] = s2 * dt ** 3 / 2.0
            q[j, j] = s2 * dt ** 2
    return q


def predict_pose(state: PredictorState, horizon: float) -> geometry.Pose:
    """Extrapolate the posterior mean by `horizon` seconds (pure)."""
    position = state.position + horizon * state.velocity
    rotation = geometry.rotation_from_rotvec(horizon * state.ang_velocity) @ state.rotation
    return geometry.Pose(rotation, position)


def predictor_step(state: PredictorState, measurement: geometry.Pose | None,
                   dt: float, horizon: float,
                   noise: PredictorNoise = PredictorNoise()
                   ) -> tuple[PredictorState, geometry.Pose]:
    """Advance the filter by dt, fold in the pose measurement when present,
    and return the new state plus the pose extrapolated by `horizon`."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")

    # predict
    f = np.eye(12)
    f[_POS, _VEL] = dt * np.eye(3)
    f[_ANG, _SPIN] = dt * np.eye(3)
    position = state.position + dt * state.velocity
    rotation = geometry.rotation_from_rotvec(dt * state.ang_velocity) @ state.rotation
    velocity = state.velocity
    spin = state.ang_velocity
    cov = f @ state.covariance @ f.T + _process_noise(dt, noise)

    if measurement is not None:
        h = np.zeros((6, 12))
        h[0:3, _POS] = np.eye(3)
        h[3:6, _ANG] = np.eye(3)
        r = np.diag([noise.meas_pos_sigma ** 2] * 3
                    + [noise.meas_rot_sigma ** 2] * 3)
        innov = np.concatenate([
            measurement.translation - position,
            geometry.rotvec_from_rotation(measurement.rotation @ rotation.T),
        ])
        s = h @ cov @ h.T + r
        gain = cov @ h.T @ np.linalg.inv(s)
        dx = gain @ innov
        position = position + dx[_POS]
        velocity = velocity + dx[_VEL]
        rotation = geometry.rotation_from_rotvec(dx[_ANG]) @ rotation
        spin = spin + dx[_SPIN]
        ikh = np.eye(12) - gain @ h
        cov = ikh @ cov @ ikh.T + gain @ r @ gain.T

    cov = 0.5 * (cov + cov.T)
    new_state = PredictorState(position, velocity,
                               geometry.reorthonormalize(rotation), spin, cov)
    return new_state, predict_pose(new_state, horizon)


def control_step(q: np.ndarray, target: geometry.Pose, dh: arm.DHParams,
                 tool: geometry.Pose | None, limits: arm.JointLimits,
                 gains: ServoGains) -> np.ndarray:
    """One servo period: move the tool a gain-scaled fraction of the way
    toward the target, solve IK seeded at q, and rate-limit the joint step.

    With gain * period >= 1 the intermediate pose IS the target.  Raises
    Unreachable/NotConverged for the caller to log; q is never mutated.
    """
    q = np.asarray(q, dtype=float)
    current = arm.forward_kinematics(dh, q, tool)
    lam_p = min(1.0, gains.position_gain * gains.control_period)
    lam_o = min(1.0, gains.orientation_gain * gains.control_period)
    step_t = current.translation + lam_p * (target.translation - current.translation)
    rv = geometry.rotvec_from_rotation(target.rotation @ current.rotation.T)
    step_r = geometry.rotation_from_rotvec(lam_o * rv) @ current.rotation
    q_goal = arm.inverse_kinematics(dh, geometry.Pose(step_r, step_t), q, tool)
    return arm.clamp_step(q, q_goal, gains.control_period, limits)


@dataclass(order=True)
class _Pending:
    deliver_at: float
    seq: int
    payload: object = field(compare=False)


@dataclass
class SimClock:
    """Simulation time plus the in-flight measurement queue."""

    now: float = 0.0
    pending: list = field(default_factory=list)
    _seq: int = 0

    def schedule(self, payload, deliver_at: float) -> None:
        heapq.heappush(self.pending, _Pending(deliver_at, self._seq, payload))
        self._seq += 1

    def due(self, at: float) -> list:
        out = []
        while self.pending and self.pending[0].deliver_at <= at:
            out.append(heapq.heappop(self.pending).payload)
        return out


@dataclass(frozen=True)
class TickEvents:
    """What one control period produced: wall time of the tick, the
    measurements that became available, and when commands land."""

    time: float
    measurements: tuple
    command_effect_at: float


def pipeline_tick(clock: SimClock, cfg: PipelineConfig, control_period: float,
                  capture=None) -> TickEvents:
    """Advance one control period.

    A frame captured at t is delivered at t + capture + detect; commands
    issued at t take effect at t + plan + project.  Capture happens before
    the delivery check so zero-latency configs see their own frame.
    """
    t = clock.now
    if capture is not None:
        payload = capture(t)
        if payload is not None:
            clock.schedule(payload, t + cfg.measurement_delay)
    delivered = tuple(clock.due(t))
    clock.now = t + control_period
    return TickEvents(t, delivered, t + cfg.command_delay)
