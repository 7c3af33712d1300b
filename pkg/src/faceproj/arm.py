"""6-DoF serial arm: DH forward kinematics, geometric Jacobian, damped
least-squares inverse kinematics, and joint rate/position limiting.

Default parameters describe a UR3-class arm (manufacturer-published DH
values, ~0.5 m reach); everything is overridable through the scenario
config.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import NotConverged, Unreachable

NUM_JOINTS = 6


@dataclass(frozen=True)
class DHParams:
    """Standard DH link parameters, one entry per joint."""

    a: np.ndarray
    d: np.ndarray
    alpha: np.ndarray
    theta_offset: np.ndarray

    def __post_init__(self):
        for name in ("a", "d", "alpha", "theta_offset"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (NUM_JOINTS,):
                raise ValueError(f"{name} must have exactly {NUM_JOINTS} entries")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    def max_reach(self) -> float:
        """Upper bound on flange distance from the base origin."""
        return float(np.sum(np.abs(self.a)) + np.sum(np.abs(self.d)))


def ur3_dh() -> DHParams:
    return DHParams(
        a=np.array([0.0, -0.24365, -0.21325, 0.0, 0.0, 0.0]),
        d=np.array([0.1519, 0.0, 0.0, 0.11235, 0.08535, 0.0819]),
        alpha=np.array([np.pi / 2, 0.0, 0.0, np.pi / 2, -np.pi / 2, 0.0]),
        theta_offset=np.zeros(6),
    )


@dataclass(frozen=True)
class JointLimits:
    """Per-joint position range (rad) and speed bound (rad/s)."""

    lower: np.ndarray
    upper: np.ndarray
    max_speed: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        sp = np.asarray(self.max_speed, dtype=float)
        if lo.shape != (NUM_JOINTS,) or hi.shape != (NUM_JOINTS,) or sp.shape != (NUM_JOINTS,):
            raise ValueError("limits need exactly 6 entries each")
        if np.any(lo >= hi):
            raise ValueError("lower limits must be below upper limits")
        if np.any(sp <= 0):
            raise ValueError("speed limits must be positive")
        for name, v in (("lower", lo), ("upper", hi), ("max_speed", sp)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)


def default_limits() -> JointLimits:
    return JointLimits(
        lower=np.full(6, -2.0 * np.pi),
        upper=np.full(6, 2.0 * np.pi),
        max_speed=np.full(6, np.pi),
    )


@dataclass(frozen=True)
class ToolOffset:
    """Camera and projector mount poses relative to the flange."""

    projector_mount: geometry.Pose = field(
        default_factory=lambda: geometry.translation(0.04, 0.0, 0.0))
    camera_mount: geometry.Pose = field(
        default_factory=lambda: geometry.translation(-0.04, 0.0, 0.0))


def _dh_transform(theta: float, d: float, a: float, alpha: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def _chain(dh: DHParams, q: np.ndarray) -> list[np.ndarray]:
    """Cumulative base->joint-i transforms, i = 0..6 (0 is the base)."""
    mats = [np.eye(4)]
    t = np.eye(4)
    for i in range(NUM_JOINTS):
        t = t @ _dh_transform(q[i] + dh.theta_offset[i], dh.d[i], dh.a[i], dh.alpha[i])
        mats.append(t)
    return mats


def forward_kinematics(dh: DHParams, q, tool: geometry.Pose | None = None) -> geometry.Pose:
    """Tool pose in the base frame for joint vector q (radians)."""
    q = np.asarray(q, dtype=float)
    t = _chain(dh, q)[-1]
    pose = geometry.Pose.from_matrix(t)
    if tool is not None:
        pose = geometry.compose(pose, tool)
    return pose


def jacobian(dh: DHParams, q, tool: geometry.Pose | None = None) -> np.ndarray:
    """Geometric Jacobian of the tool point, linear rows over angular rows.

    Column i is [z_i x (p_e - p_i); z_i] with z_i the axis of joint i+1 and
    p_i its origin, all in the base frame.
    """
    q = np.asarray(q, dtype=float)
    mats = _chain(dh, q)
    end = mats[-1]
    if tool is not None:
        end = end @ tool.matrix()
    p_e = end[:3, 3]
    jac = np.zeros((6, NUM_JOINTS))
    for i in range(NUM_JOINTS):
        z = mats[i][:3, 2]
        p = mats[i][:3, 3]
        jac[:3, i] = np.cross(z, p_e - p)
        jac[3:, i] = z
    return jac


def pose_error(current: geometry.Pose, target: geometry.Pose) -> np.ndarray:
    """6-vector twist error [dp; dtheta] taking current toward target."""
    dp = target.translation - current.translation
    dr = geometry.rotvec_from_rotation(target.rotation @ current.rotation.T)
    return np.concatenate([dp, dr])


def inverse_kinematics(dh: DHParams, target: geometry.Pose, seed,
                       tool: geometry.Pose | None = None,
                       tol_m: float = 1e-8, tol_rad: float = 1e-8,
                       max_iter: int = 200, damping: float = 1e-3) -> np.ndarray:
    """Damped least-squares IK from the seed configuration.

    Converges to the solution branch nearest the seed; raises Unreachable
    when the target position exceeds the arm's reach sphere and
    NotConverged(residual) after max_iter.
    """
    reach = dh.max_reach() + (np.linalg.norm(tool.translation) if tool else 0.0)
    if np.linalg.norm(target.translation) > reach:
        raise Unreachable(
            f"target at {np.linalg.norm(target.translation):.3f} m exceeds reach {reach:.3f} m")
    q = np.asarray(seed, dtype=float).copy()
    err = pose_error(forward_kinematics(dh, q, tool), target)
    lam2 = damping * damping
    for _ in range(max_iter):
        if np.linalg.norm(err[:3]) < tol_m and np.linalg.norm(err[3:]) < tol_rad:
            return q
        jac = jacobian(dh, q, tool)
        a = jac @ jac.T + lam2 * np.eye(6)
        dq = jac.T @ np.linalg.solve(a, err)
        # halve the step while it would increase the residual
        scale = 1.0
        base_norm = np.linalg.norm(err)
        for _ in range(20):
            q_try = q + scale * dq
            err_try = pose_error(forward_kinematics(dh, q_try, tool), target)
            if np.linalg.norm(err_try) <= base_norm:
                break
            scale *= 0.5
        else:
            raise NotConverged("IK stalled", residual=float(base_norm))
        q = q_try
        err = err_try
    if np.linalg.norm(err[:3]) < tol_m and np.linalg.norm(err[3:]) < tol_rad:
        return q
    raise NotConverged("IK exceeded max iterations", residual=float(np.linalg.norm(err)))


def clamp_step(q, q_desired, dt: float, limits: JointLimits) -> np.ndarray:
    """Step toward q_desired bounded per joint by max_speed*dt, then clamped
    to the position range."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    q = np.asarray(q, dtype=float)
    q_desired = np.asarray(q_desired, dtype=float)
    max_step = limits.max_speed * dt
    step = np.clip(q_desired - q, -max_step, max_step)
    return np.clip(q + step, limits.lower, limits.upper)
