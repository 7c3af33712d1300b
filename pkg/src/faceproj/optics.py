"""Pinhole camera / projector models, homography estimation and calibration.

The projector is modeled as an inverse camera: same intrinsics math, rays
leave the device instead of entering it.  The camera-to-projector pixel
calibration is homography-based and therefore only valid for the plane the
calibration grid was observed on.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry
from .errors import (
    BehindCamera,
    DegenerateConfiguration,
    InsufficientPairs,
    NonPositiveDepth,
    NonPositiveWidth,
    PointAtInfinity,
)

MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class ProjectorModel:
    """Projector intrinsics plus its mount pose relative to the tool flange."""

    intrinsics: CameraIntrinsics
    mount: geometry.Pose


DEFAULT_CAMERA = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=640.0, cy=360.0,
                                  width=1280, height=720)
DEFAULT_PROJECTOR_INTRINSICS = CameraIntrinsics(fx=1700.0, fy=1700.0, cx=640.0,
                                                cy=400.0, width=1280, height=800)


def world_to_camera(cam_pose: geometry.Pose, world_points) -> np.ndarray:
    """Express world point(s) in the camera frame (cam_pose maps cam->world)."""
    return geometry.invert(cam_pose).apply(world_points)


def project_point(k: CameraIntrinsics, cam_pose: geometry.Pose, world_point) -> np.ndarray:
    """Pinhole projection of a world point; raises BehindCamera for Z <= 1e-6 m.

    The result may fall outside the image rectangle; visibility is the
    caller's decision.
    """
    p = world_to_camera(cam_pose, world_point)
    if p[2] <= MIN_DEPTH:
        raise BehindCamera(f"depth {p[2]:.3g} m")
    return np.array([k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy])


def project_points(k: CameraIntrinsics, cam_pose: geometry.Pose, world_points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection; returns (pixels (N,2), depths (N,))."""
    p = world_to_camera(cam_pose, np.asarray(world_points, dtype=float))
    z = p[:, 2]
    safe = np.where(z > MIN_DEPTH, z, 1.0)
    uv = np.empty((p.shape[0], 2))
    uv[:, 0] = k.fx * p[:, 0] / safe + k.cx
    uv[:, 1] = k.fy * p[:, 1] / safe + k.cy
    return uv, z


def backproject_pixel(k: CameraIntrinsics, cam_pose: geometry.Pose, pixel, depth: float) -> np.ndarray:
    """World point on the pixel's ray at the given camera-frame depth."""
    if depth <= 0:
        raise NonPositiveDepth(f"depth {depth}")
    u, v = float(pixel[0]), float(pixel[1])
    local = np.array([(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth])
    return cam_pose.apply(local)


def pixel_ray(k: CameraIntrinsics, pose: geometry.Pose, pixel) -> tuple[np.ndarray, np.ndarray]:
    """(origin, direction) of the ray leaving `pose` through a pixel; unnormalized z=1 direction."""
    u, v = float(pixel[0]), float(pixel[1])
    d_local = np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0])
    return pose.translation.copy(), pose.rotation @ d_local


@dataclass(frozen=True)
class Correspondence:
    """A src->dst 2D pixel pair."""

    src: tuple[float, float]
    dst: tuple[float, float]

    def __post_init__(self):
        vals = (*self.src, *self.dst)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("correspondence coordinates must be finite")


def read_correspondences(path) -> list[Correspondence]:
    """Parse `u_src v_src u_dst v_dst` quadruples; `#` starts a comment."""
    pairs = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"expected 4 numbers per line, got: {raw!r}")
        u0, v0, u1, v1 = (float(p) for p in parts)
        pairs.append(Correspondence((u0, v0), (u1, v1)))
    return pairs


def _normalize_h(h: np.ndarray) -> np.ndarray:
    """Frobenius norm 1, sign fixed so H[2,2] >= 0; idempotent."""
    n = float(np.linalg.norm(h))
    if n == 0.0:
        raise DegenerateConfiguration("zero homography")
    out = h
    if abs(n - 1.0) > 4 * np.finfo(float).eps:
        out = h / n
    if out[2, 2] < 0:
        out = -out
    return out


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, stored normalized (unit Frobenius norm, H22 >= 0)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float).reshape(3, 3)
        m = _normalize_h(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


def apply_homography(h: Homography, pixel) -> np.ndarray:
    """Projective application with division by the third coordinate."""
    u, v = float(pixel[0]), float(pixel[1])
    m = h.matrix
    w = m[2, 0] * u + m[2, 1] * v + m[2, 2]
    if abs(w) < 1e-12:
        raise PointAtInfinity(f"w = {w:.3g} at ({u}, {v})")
    x = m[0, 0] * u + m[0, 1] * v + m[0, 2]
    y = m[1, 0] * u + m[1, 1] * v + m[1, 2]
    return np.array([x / w, y / w])


def _hartley_normalization(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic normalization: centroid at origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    mean_dist = np.mean(np.linalg.norm(centered, axis=1))
    if mean_dist < 1e-12:
        raise DegenerateConfiguration("all points coincide")
    s = np.sqrt(2.0) / mean_dist
    t = np.array([[s, 0, -s * centroid[0]],
                  [0, s, -s * centroid[1]],
                  [0, 0, 1.0]])
    normalized = centered * s
    return normalized, t


def estimate_homography(pairs: list[Correspondence]) -> Homography:
    """Normalized DLT from >= 4 correspondences.

    Raises InsufficientPairs for n < 4 and DegenerateConfiguration for
    duplicate/collinear configurations that leave H undetermined.
    """
    if len(pairs) < 4:
        raise InsufficientPairs(f"need >= 4 pairs, got {len(pairs)}")
    src = np.array([p.src for p in pairs], dtype=float)
    dst = np.array([p.dst for p in pairs], dtype=float)
    for pts in (src, dst):
        uniq = np.unique(pts.round(decimals=12), axis=0)
        if uniq.shape[0] < 4:
            raise DegenerateConfiguration("fewer than 4 distinct points")
    ns, ts = _hartley_normalization(src)
    nd, td = _hartley_normalization(dst)
    n = len(pairs)
    a = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = ns[i]
        u, v = nd[i]
        a[2 * i] = [-x, -y, -1, 0, 0, 0, u * x, u * y, u]
        a[2 * i + 1] = [0, 0, 0, -x, -y, -1, v * x, v * y, v]
    _, sv, vt = np.linalg.svd(a)
    # rank deficiency beyond the 1-dim null space means no unique solution
    if sv[7] < 1e-9 * sv[0]:
        raise DegenerateConfiguration("correspondences do not determine a homography")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    if abs(np.linalg.det(h)) < 1e-12 * np.linalg.norm(h) ** 3:
        raise DegenerateConfiguration("estimated homography is singular")
    return Homography(h)


@dataclass(frozen=True)
class CalibrationResult:
    homography: Homography
    mean_error_px: float
    max_error_px: float
    per_point_error_px: np.ndarray


def calibrate_camera_projector(pattern: list[Correspondence]) -> CalibrationResult:
    """Estimate the projector->camera pixel homography from a projected grid.

    Valid only for the plane the grid was observed on.  Returns the
    estimate together with per-point transfer errors.
    """
    h = estimate_homography(pattern)
    errors = np.array([
        np.linalg.norm(apply_homography(h, p.src) - np.asarray(p.dst, dtype=float))
        for p in pattern
    ])
    return CalibrationResult(h, float(errors.mean()), float(errors.max()), errors)


def distance_from_face_width(fx: float, real_width: float, pixel_width: float) -> float:
    """Similar-triangles range estimate: d = fx * real_width / pixel_width."""
    if pixel_width <= 0 or real_width <= 0:
        raise NonPositiveWidth(f"real_width={real_width}, pixel_width={pixel_width}")
    return fx * real_width / pixel_width
