"""Synthetic face ground truth and the estimators the controller runs on it.

The canonical 68-landmark head is generated procedurally (parametric
ellipses with mild depth relief) and committed as a fixture file, keeping
the standard index semantics: jaw 0-16, brows 17-26, nose 27-35, eyes
36-47, mouth 48-67.  Head frame: +Z out of the face toward the observer,
+Y up, landmarks roughly in the z=0..0.03 m slab.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import geometry, optics
from .errors import InvalidDetection, NotConverged

NUM_LANDMARKS = 68
DEFAULT_REAL_WIDTH = 0.15
WIDTH_PAIR = (0, 16)
MIN_VISIBLE_LANDMARKS = 60

JAW = range(0, 17)
BROWS = range(17, 27)
NOSE = range(27, 36)
EYES = range(36, 48)
MOUTH = range(48, 68)


def generate_canonical_points() -> np.ndarray:
    """Procedural 68-point layout, meters, head frame; width pair spans 0.15 m."""
    pts = np.zeros((NUM_LANDMARKS, 3))
    # jaw: lower half-ellipse from right ear (index 0) to left ear (index 16)
    for i in range(17):
        ang = np.pi * i / 16.0
        pts[i] = (-0.075 * np.cos(ang), -0.09 * np.sin(ang), 0.0)
    # brows: two shallow arcs
    for k in range(5):
        s = k / 4.0
        lift = 0.008 * np.sin(np.pi * s)
        pts[17 + k] = (-0.055 + 0.040 * s, 0.035 + lift, 0.010)
        pts[22 + k] = (0.015 + 0.040 * s, 0.035 + 0.008 * np.sin(np.pi * (1 - s)), 0.010)
    # nose bridge down to tip, then nostril line
    for k in range(4):
        pts[27 + k] = (0.0, 0.028 - 0.012 * k, 0.012 + 0.006 * k)
    for k in range(5):
        s = k / 4.0
        pts[31 + k] = (-0.016 + 0.032 * s, -0.020 + 0.004 * np.sin(np.pi * s),
                       0.015 + 0.006 * np.sin(np.pi * s))
    # eyes: six points around each ellipse
    for k in range(6):
        ang = np.pi - k * np.pi / 3.0
        pts[36 + k] = (-0.035 + 0.013 * np.cos(ang), 0.018 + 0.006 * np.sin(ang), 0.004)
        pts[42 + k] = (0.035 + 0.013 * np.cos(ang), 0.018 + 0.006 * np.sin(ang), 0.004)
    # mouth: outer ring of 12, inner ring of 8
    for k in range(12):
        ang = np.pi + k * np.pi / 6.0
        pts[48 + k] = (0.026 * np.cos(ang), -0.048 + 0.013 * np.sin(ang), 0.010)
    for k in range(8):
        ang = np.pi + k * np.pi / 4.0
        pts[60 + k] = (0.016 * np.cos(ang), -0.048 + 0.006 * np.sin(ang), 0.011)
    return pts


@dataclass(frozen=True)
class FaceModel:
    """Canonical 68-point rigid head model."""

    canonical_points: np.ndarray
    real_width: float = DEFAULT_REAL_WIDTH
    width_index_pair: tuple[int, int] = WIDTH_PAIR

    def __post_init__(self):
        pts = np.asarray(self.canonical_points, dtype=float)
        if pts.shape != (NUM_LANDMARKS, 3):
            raise ValueError(f"need {NUM_LANDMARKS} 3D points, got {pts.shape}")
        i, j = self.width_index_pair
        width = np.linalg.norm(pts[i] - pts[j])
        if abs(width - self.real_width) > 1e-9:
            raise ValueError(
                f"width pair spans {width:.12f} m, expected {self.real_width}")
        pts.setflags(write=False)
        object.__setattr__(self, "canonical_points", pts)

    @staticmethod
    def from_points(points, real_width: float = DEFAULT_REAL_WIDTH,
                    width_index_pair: tuple[int, int] = WIDTH_PAIR) -> "FaceModel":
        """Uniformly rescale a layout so the width pair spans real_width."""
        pts = np.asarray(points, dtype=float)
        i, j = width_index_pair
        span = np.linalg.norm(pts[i] - pts[j])
        if span <= 0:
            raise ValueError("width pair points coincide")
        return FaceModel(pts * (real_width / span), real_width, width_index_pair)

    def landmarks_world(self, head_pose: geometry.Pose) -> np.ndarray:
        return head_pose.apply(self.canonical_points)


def default_face(real_width: float = DEFAULT_REAL_WIDTH) -> FaceModel:
    """Face model from the committed canonical fixture."""
    text = resources.files("faceproj.data").joinpath("canonical_face_68.txt").read_text()
    return FaceModel.from_points(_parse_points(text), real_width)


def load_face(path, real_width: float = DEFAULT_REAL_WIDTH) -> FaceModel:
    return FaceModel.from_points(_parse_points(Path(path).read_text()), real_width)


def _parse_points(text: str) -> np.ndarray:
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"expected `x y z` per line, got: {raw!r}")
        rows.append([float(p) for p in parts])
    if len(rows) != NUM_LANDMARKS:
        raise ValueError(f"expected {NUM_LANDMARKS} points, got {len(rows)}")
    return np.array(rows)


def write_points(points: np.ndarray, path) -> None:
    lines = [f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}"
             for p in np.asarray(points, dtype=float)]
    Path(path).write_text("\n".join(lines) + "\n")


TRAJECTORY_KINDS = ("static", "sinusoidal_yaw", "sinusoidal_pitch",
                    "linear_translation", "composite")


@dataclass(frozen=True)
class HeadTrajectory:
    """Scripted head motion, evaluable at any t >= 0 and continuous in t.

    amplitude is radians for the rotational kinds and meters for
    linear_translation, which advances amplitude meters per 1/frequency
    seconds along the head's local +X.
    """

    kind: str
    amplitude: float = 0.0
    frequency: float = 0.0
    base_pose: geometry.Pose = geometry.Pose()

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")


def head_pose_at(traj: HeadTrajectory, t: float) -> geometry.Pose:
    if t < 0:
        raise ValueError("t must be >= 0")
    base = traj.base_pose
    if traj.kind == "static":
        return base
    omega = 2.0 * np.pi * traj.frequency
    if traj.kind == "sinusoidal_yaw":
        return geometry.compose(base, geometry.rot_y(traj.amplitude * np.sin(omega * t)))
    if traj.kind == "sinusoidal_pitch":
        return geometry.compose(base, geometry.rot_x(traj.amplitude * np.sin(omega * t)))
    if traj.kind == "linear_translation":
        return geometry.compose(
            base, geometry.translation(traj.amplitude * traj.frequency * t, 0.0, 0.0))
    # composite: yaw plus slower pitch plus lateral sway
    sway = geometry.translation(0.03 * np.sin(0.5 * omega * t), 0.0, 0.0)
    yaw = geometry.rot_y(traj.amplitude * np.sin(omega * t))
    pitch = geometry.rot_x(0.5 * traj.amplitude * np.sin(0.7 * omega * t))
    return geometry.compose(base, geometry.compose(sway, geometry.compose(yaw, pitch)))


@dataclass(frozen=True)
class DetectedLandmarks:
    """Simulated detector output: 68 pixel points stamped with capture time."""

    points: np.ndarray
    capture_time: float
    valid: bool

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (NUM_LANDMARKS, 2):
            raise ValueError(f"need {NUM_LANDMARKS} 2D points, got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)


def observe_landmarks(face: FaceModel, head: geometry.Pose, k: optics.CameraIntrinsics,
                      cam_pose: geometry.Pose, noise_sigma: float,
                      rng_seed: int, t: float) -> DetectedLandmarks:
    """Project the head through the camera and add per-axis Gaussian noise.

    Invalid detection (any point behind the camera, or fewer than 60 points
    inside the image rectangle) is reported via the flag, never raised.
    """
    world = face.landmarks_world(head)
    uv, depths = optics.project_points(k, cam_pose, world)
    valid = bool(np.all(depths > optics.MIN_DEPTH))
    if valid:
        inside = ((uv[:, 0] >= 0) & (uv[:, 0] < k.width)
                  & (uv[:, 1] >= 0) & (uv[:, 1] < k.height))
        valid = int(inside.sum()) >= MIN_VISIBLE_LANDMARKS
    if noise_sigma > 0:
        seq = np.random.SeedSequence([int(rng_seed), int(round(t * 1e9))])
        rng = np.random.default_rng(seq)
        uv = uv + rng.normal(0.0, noise_sigma, size=uv.shape)
    return DetectedLandmarks(uv, capture_time=t, valid=valid)


def face_center_and_width(det: DetectedLandmarks,
                          pair: tuple[int, int] = WIDTH_PAIR) -> tuple[np.ndarray, float]:
    """Centroid of the 68 points and the pixel distance between the pair."""
    if not det.valid:
        raise InvalidDetection("detection flagged invalid")
    center = det.points.mean(axis=0)
    width = float(np.linalg.norm(det.points[pair[0]] - det.points[pair[1]]))
    return center, width


def coarse_pose_from_detection(det: DetectedLandmarks, face: FaceModel,
                               k: optics.CameraIntrinsics,
                               cam_pose: geometry.Pose) -> geometry.Pose:
    """Seed pose from face center + pixel width, facing back at the camera."""
    center, width = face_center_and_width(det, face.width_index_pair)
    if width <= 0:
        raise InvalidDetection("zero pixel width")
    dist = optics.distance_from_face_width(k.fx, face.real_width, width)
    position = optics.backproject_pixel(k, cam_pose, center, dist)
    up = np.array([0.0, 0.0, 1.0])
    aim = cam_pose.translation - position
    if np.linalg.norm(np.cross(up, aim)) < 1e-9:
        up = np.array([0.0, 1.0, 0.0])
    return geometry.look_at_pose(position, cam_pose.translation, up)


@dataclass(frozen=True)
class PoseEstimate:
    pose: geometry.Pose
    rms_px: float
    iterations: int


def _reprojection_residual(face, pose, k, cam_pose, observed) -> np.ndarray | None:
    world = face.landmarks_world(pose)
    local = optics.world_to_camera(cam_pose, world)
    if np.any(local[:, 2] <= optics.MIN_DEPTH):
        return None
    uv = np.empty_like(observed)
    uv[:, 0] = k.fx * local[:, 0] / local[:, 2] + k.cx
    uv[:, 1] = k.fy * local[:, 1] / local[:, 2] + k.cy
    return (uv - observed).ravel()


def estimate_head_pose(det: DetectedLandmarks, face: FaceModel,
                       k: optics.CameraIntrinsics, cam_pose: geometry.Pose,
                       seed_pose: geometry.Pose, max_iter: int = 50) -> PoseEstimate:
    """Gauss-Newton fit of the 6-DoF head pose to the 68 observed pixels.

    Minimizes summed squared reprojection error with step halving (up to 8)
    whenever the residual would increase; stops when the parameter step
    drops below 1e-10.
    """
    if not det.valid:
        raise InvalidDetection("detection flagged invalid")
    rot = seed_pose.rotation.copy()
    trans = seed_pose.translation.copy()
    res = _reprojection_residual(face, geometry.Pose(rot, trans), k, cam_pose, det.points)
    if res is None:
        raise NotConverged("seed pose places landmarks behind the camera")
    cost = float(res @ res)
    rc_t = cam_pose.rotation.T
    n = NUM_LANDMARKS
    for it in range(1, max_iter + 1):
        pose = geometry.Pose(rot, trans)
        world = face.landmarks_world(pose)
        local = optics.world_to_camera(cam_pose, world)
        jac = np.zeros((2 * n, 6))
        for i in range(n):
            x, y, z = local[i]
            pj = np.array([[k.fx / z, 0.0, -k.fx * x / (z * z)],
                           [0.0, k.fy / z, -k.fy * y / (z * z)]])
            # lever arm of the left-multiplicative rotation increment
            u = world[i] - trans
            skew = np.array([[0.0, -u[2], u[1]],
                             [u[2], 0.0, -u[0]],
                             [-u[1], u[0], 0.0]])
            block = pj @ rc_t
            jac[2 * i:2 * i + 2, :3] = -block @ skew
            jac[2 * i:2 * i + 2, 3:] = block
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        if np.linalg.norm(step) < 1e-10:
            return PoseEstimate(pose, float(np.sqrt(cost / n)), it)
        accepted = False
        scale = 1.0
        for _ in range(8):
            rot_try = geometry.rotation_from_rotvec(scale * step[:3]) @ rot
            trans_try = trans + scale * step[3:]
            res_try = _reprojection_residual(
                face, geometry.Pose(rot_try, trans_try), k, cam_pose, det.points)
            if res_try is not None:
                cost_try = float(res_try @ res_try)
                if cost_try <= cost:
                    rot, trans, res, cost = rot_try, trans_try, res_try, cost_try
                    accepted = True
                    break
            scale *= 0.5
        if not accepted:
            # no decrease possible along the Gauss-Newton direction: stationary
            return PoseEstimate(geometry.Pose(rot, trans), float(np.sqrt(cost / n)), it)
    raise NotConverged("pose refinement exceeded max iterations",
                       residual=float(np.sqrt(cost / n)))


@dataclass(frozen=True)
class FacePlane:
    """Best-fit plane: unit normal pointing from the face toward the observer."""

    normal: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        n.setflags(write=False)
        c = np.asarray(self.center, dtype=float).copy()
        c.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "center", c)


def fit_face_plane(pose_estimate: geometry.Pose, face: FaceModel) -> FacePlane:
    """Least-squares plane through the transformed canonical points.

    The normal is the smallest principal direction, signed to agree with
    the head's outward (+Z) axis.
    """
    pts = face.landmarks_world(pose_estimate)
    center = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - center, full_matrices=False)
    normal = vt[-1]
    outward = pose_estimate.rotation @ np.array([0.0, 0.0, 1.0])
    if normal @ outward < 0:
        normal = -normal
    normal = normal / np.linalg.norm(normal)
    return FacePlane(normal, center)
