"""Rigid-transform (SE3) algebra used by every other module.

Conventions, stated once and used everywhere:
  * a Pose maps local coordinates into its parent frame: x_parent = R @ x_local + t
  * local +Z is the optical/projection axis for both camera and projector
  * rotations are stored as 3x3 matrices and re-orthonormalized when drift
    exceeds ORTHO_DRIFT_TOL
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateAim

ORTHO_DRIFT_TOL = 1e-7


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {a.shape}")
    return a


def normalize(v) -> np.ndarray:
    v = _as_vec3(v)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


def orthonormality_drift(rot: np.ndarray) -> float:
    """Frobenius distance of R^T R from the identity."""
    return float(np.linalg.norm(rot.T @ rot - np.eye(3)))


def reorthonormalize(rot: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (proper, det +1) via SVD."""
    u, _, vt = np.linalg.svd(rot)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


@dataclass(frozen=True)
class Pose:
    """Rigid transform: 3x3 rotation plus translation in meters."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if orthonormality_drift(rot) > ORTHO_DRIFT_TOL:
            rot = reorthonormalize(rot)
        rot.setflags(write=False)
        t = _as_vec3(self.translation).copy()
        t.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    def apply(self, points) -> np.ndarray:
        """Map local point(s) into the parent frame; accepts (3,) or (N,3)."""
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_matrix(m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return Pose(m[:3, :3], m[:3, 3])


def identity() -> Pose:
    return Pose()


def translation(x: float, y: float, z: float) -> Pose:
    return Pose(np.eye(3), np.array([x, y, z], dtype=float))


def rot_x(angle: float) -> Pose:
    c, s = np.cos(angle), np.sin(angle)
    return Pose(np.array([[1, 0, 0], [0, c, -s], [0, s, c]]), np.zeros(3))


def rot_y(angle: float) -> Pose:
    c, s = np.cos(angle), np.sin(angle)
    return Pose(np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]]), np.zeros(3))


def rot_z(angle: float) -> Pose:
    c, s = np.cos(angle), np.sin(angle)
    return Pose(np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]), np.zeros(3))


def compose(a: Pose, b: Pose) -> Pose:
    """Apply b then a: compose(a, b).apply(x) == a.apply(b.apply(x))."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(p: Pose) -> Pose:
    rt = p.rotation.T
    return Pose(rt, -(rt @ p.translation))


def rotvec_from_rotation(rot: np.ndarray) -> np.ndarray:
    """Axis-angle vector (log map) of a rotation matrix."""
    cos_angle = (np.trace(rot) - 1.0) / 2.0
    cos_angle = min(1.0, max(-1.0, cos_angle))
    angle = np.arccos(cos_angle)
    if angle < 1e-12:
        return np.zeros(3)
    if np.pi - angle < 1e-6:
        # near pi: extract axis from R + I
        m = (rot + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(m), 0.0))
        # fix signs from off-diagonals
        i = int(np.argmax(axis))
        if axis[i] > 0:
            for j in range(3):
                if j != i and m[i, j] < 0:
                    axis[j] = -axis[j]
        axis = axis / np.linalg.norm(axis)
        return axis * angle
    axis = np.array([rot[2, 1] - rot[1, 2],
                     rot[0, 2] - rot[2, 0],
                     rot[1, 0] - rot[0, 1]]) / (2.0 * np.sin(angle))
    return axis * angle


def rotation_from_rotvec(vec) -> np.ndarray:
    """Rotation matrix (exp map) of an axis-angle vector (Rodrigues)."""
    v = _as_vec3(vec)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        k = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
        return np.eye(3) + k  # first-order, exact enough below 1e-12
    axis = v / angle
    k = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotation_angle_between(ra: np.ndarray, rb: np.ndarray) -> float:
    """Geodesic angle between two rotations, radians."""
    cos_angle = (np.trace(ra.T @ rb) - 1.0) / 2.0
    return float(np.arccos(min(1.0, max(-1.0, cos_angle))))


def look_at_pose(eye, target, up_hint) -> Pose:
    """Pose whose local +Z points from eye toward target.

    Local +Y is chosen in the half-space of up_hint; raises DegenerateAim
    when eye == target or up_hint is parallel to the aim direction.
    """
    eye = _as_vec3(eye)
    target = _as_vec3(target)
    up = _as_vec3(up_hint)
    aim = target - eye
    dist = np.linalg.norm(aim)
    if dist < 1e-12:
        raise DegenerateAim("eye and target coincide")
    z = aim / dist
    x = np.cross(up, z)
    nx = np.linalg.norm(x)
    if nx < 1e-9 * np.linalg.norm(up):
        raise DegenerateAim("up hint parallel to aim direction")
    x = x / nx
    y = np.cross(z, x)
    rot = np.column_stack([x, y, z])
    return Pose(rot, eye)
