"""Projector-frame rendering: Delaunay mesh over the 68 landmarks,
piecewise-affine warping, 3D ray mapping onto the face plane, and the
on-face registration error metric.

The per-pixel inner loop lives in faceproj.kernels (compiled extension
with a pure-numpy fallback, byte-identical outputs).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay
from scipy.spatial import QhullError

from . import geometry, optics
from .errors import DegeneratePoints, FaceBehindProjector, OutsideHull
from .face import FaceModel, FacePlane, fit_face_plane
from .kernels import render_into

# shared with the kernels: barycentric edge-inclusion slack and the bbox
# inflation that keeps grid candidate lists a superset of accepting triangles
BARY_TOL = 1e-12
BBOX_MARGIN = 1e-9

MASK_KINDS = ("beard", "glasses", "logo", "makeup", "custom")


@dataclass(frozen=True)
class Frame:
    """Row-major raster, 1 (gray) or 3 (RGB) channels, uint8 samples."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) samples, got {self.pixels.shape}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def to_bytes(self) -> bytes:
        return self.pixels.tobytes()


def write_ppm(frame: Frame, path) -> None:
    """Binary PPM (P6) for RGB frames, PGM (P5) for grayscale."""
    magic = b"P6" if frame.channels == 3 else b"P5"
    header = magic + b"\n%d %d\n255\n" % (frame.width, frame.height)
    Path(path).write_bytes(header + frame.to_bytes())


def read_ppm(path) -> Frame:
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6") or maxval != 255:
        raise ValueError(f"unsupported netpbm header: {magic!r} maxval={maxval}")
    channels = 3 if magic == b"P6" else 1
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * channels, offset=pos)
    return Frame(raw.reshape(h, w, channels))


@dataclass(frozen=True)
class TriangleMesh:
    """Index triples into the 68 landmark points, canonically ordered."""

    triangles: np.ndarray

    def __post_init__(self):
        tri = np.asarray(self.triangles, dtype=np.int32)
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise ValueError("triangles must be (T, 3) index triples")
        tri.setflags(write=False)
        object.__setattr__(self, "triangles", tri)

    def __len__(self) -> int:
        return len(self.triangles)


def triangulate_landmarks(points) -> TriangleMesh:
    """Delaunay triangulation with a canonical, deterministic ordering.

    Each triangle is stored counter-clockwise with its smallest index
    first; the list is sorted lexicographically.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected (N, 2) points")
    if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
        raise DegeneratePoints("duplicate landmark points")
    try:
        dt = Delaunay(pts)
    except QhullError as exc:
        raise DegeneratePoints(str(exc)) from exc
    tris = []
    for simplex in dt.simplices:
        i, j, k = sorted(int(v) for v in simplex)
        a, b, c = pts[i], pts[j], pts[k]
        area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if area2 == 0.0:
            raise DegeneratePoints("zero-area triangle in triangulation")
        tris.append((i, j, k) if area2 > 0 else (i, k, j))
    tris.sort()
    return TriangleMesh(np.array(tris, dtype=np.int32))


def _barycentric(src: np.ndarray, tri: np.ndarray, p) -> np.ndarray:
    x1, y1 = src[tri[0]]
    x2, y2 = src[tri[1]]
    x3, y3 = src[tri[2]]
    den = (y2 - y3) * (x1 - x3) + (x3 - x2) * (y1 - y3)
    l1 = ((y2 - y3) * (p[0] - x3) + (x3 - x2) * (p[1] - y3)) / den
    l2 = ((y3 - y1) * (p[0] - x3) + (x1 - x3) * (p[1] - y3)) / den
    return np.array([l1, l2, 1.0 - l1 - l2])


def locate_triangle(src, mesh: TriangleMesh, p) -> tuple[int, np.ndarray]:
    """First triangle (in mesh order) containing p, with barycentric coords."""
    src = np.asarray(src, dtype=float)
    for idx, tri in enumerate(mesh.triangles):
        lam = _barycentric(src, tri, p)
        if np.all(lam >= -BARY_TOL):
            return idx, lam
    raise OutsideHull(f"point {tuple(p)} outside landmark hull")


def piecewise_affine_map(src, dst, mesh: TriangleMesh, p) -> np.ndarray:
    """Map p through the affine transform of its containing triangle.

    Exact on vertices and continuous across shared edges; raises
    OutsideHull when p is not covered by the mesh.
    """
    dst = np.asarray(dst, dtype=float)
    idx, lam = locate_triangle(src, mesh, p)
    tri = mesh.triangles[idx]
    return lam[0] * dst[tri[0]] + lam[1] * dst[tri[1]] + lam[2] * dst[tri[2]]


_MESH_CACHE: dict[bytes, TriangleMesh] = {}
_TABLE_CACHE: dict[bytes, dict] = {}


def canonical_mesh(face: FaceModel) -> TriangleMesh:
    """Mesh over the canonical layout's orthographic (x, y) projection,
    computed once per face model and reused for every frame."""
    key = face.canonical_points.tobytes()
    mesh = _MESH_CACHE.get(key)
    if mesh is None:
        mesh = triangulate_landmarks(face.canonical_points[:, :2])
        _MESH_CACHE[key] = mesh
    return mesh


def _warp_tables(face: FaceModel) -> dict:
    """Per-triangle barycentric coefficients plus the cell->triangle grid."""
    key = face.canonical_points.tobytes()
    tables = _TABLE_CACHE.get(key)
    if tables is not None:
        return tables
    src = np.ascontiguousarray(face.canonical_points[:, :2])
    tri = canonical_mesh(face).triangles
    p1, p2, p3 = src[tri[:, 0]], src[tri[:, 1]], src[tri[:, 2]]
    den = (p2[:, 1] - p3[:, 1]) * (p1[:, 0] - p3[:, 0]) \
        + (p3[:, 0] - p2[:, 0]) * (p1[:, 1] - p3[:, 1])
    tables = {
        "tri": np.ascontiguousarray(tri),
        "src": src,
        "x3": np.ascontiguousarray(p3[:, 0]),
        "y3": np.ascontiguousarray(p3[:, 1]),
        "a11": np.ascontiguousarray((p2[:, 1] - p3[:, 1]) / den),
        "a12": np.ascontiguousarray((p3[:, 0] - p2[:, 0]) / den),
        "a21": np.ascontiguousarray((p3[:, 1] - p1[:, 1]) / den),
        "a22": np.ascontiguousarray((p1[:, 0] - p3[:, 0]) / den),
        "bx0": np.ascontiguousarray(np.minimum(np.minimum(p1[:, 0], p2[:, 0]), p3[:, 0]) - BBOX_MARGIN),
        "bx1": np.ascontiguousarray(np.maximum(np.maximum(p1[:, 0], p2[:, 0]), p3[:, 0]) + BBOX_MARGIN),
        "by0": np.ascontiguousarray(np.minimum(np.minimum(p1[:, 1], p2[:, 1]), p3[:, 1]) - BBOX_MARGIN),
        "by1": np.ascontiguousarray(np.maximum(np.maximum(p1[:, 1], p2[:, 1]), p3[:, 1]) + BBOX_MARGIN),
    }
    tables.update(_build_grid(tables, cells=64))
    _TABLE_CACHE[key] = tables
    return tables


def _build_grid(tables: dict, cells: int) -> dict:
    """Uniform cell -> candidate-triangle lists (CSR layout, index order)."""
    gx0 = float(tables["bx0"].min())
    gy0 = float(tables["by0"].min())
    gx1 = float(tables["bx1"].max())
    gy1 = float(tables["by1"].max())
    cw = (gx1 - gx0) / cells
    ch = (gy1 - gy0) / cells
    per_cell: list[list[int]] = [[] for _ in range(cells * cells)]
    for t in range(len(tables["x3"])):
        cx0 = min(max(int((tables["bx0"][t] - gx0) / cw), 0), cells - 1)
        cx1 = min(max(int((tables["bx1"][t] - gx0) / cw), 0), cells - 1)
        cy0 = min(max(int((tables["by0"][t] - gy0) / ch), 0), cells - 1)
        cy1 = min(max(int((tables["by1"][t] - gy0) / ch), 0), cells - 1)
        for cy in range(cy0, cy1 + 1):
            for cx in range(cx0, cx1 + 1):
                per_cell[cy * cells + cx].append(t)
    cell_start = np.zeros(cells * cells + 1, dtype=np.int32)
    flat: list[int] = []
    for ci, lst in enumerate(per_cell):
        flat.extend(lst)
        cell_start[ci + 1] = len(flat)
    return {
        "grid_x0": gx0, "grid_y0": gy0,
        "grid_inv_cw": 1.0 / cw, "grid_inv_ch": 1.0 / ch,
        "grid_cells": cells,
        "cell_start": cell_start,
        "cell_tris": np.array(flat, dtype=np.int32),
    }


@dataclass(frozen=True)
class MaskTemplate:
    """Mask texture anchored to the 68 canonical landmark indices."""

    texture: Frame
    anchors: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}")
        a = np.asarray(self.anchors, dtype=float)
        if a.shape != (68, 2):
            raise ValueError(f"need 68 anchors, got {a.shape}")
        if (np.any(a[:, 0] < 0) or np.any(a[:, 0] > self.texture.width - 1)
                or np.any(a[:, 1] < 0) or np.any(a[:, 1] > self.texture.height - 1)):
            raise ValueError("anchors must lie inside the texture bounds")
        a.setflags(write=False)
        object.__setattr__(self, "anchors", a)


def read_anchors(path) -> np.ndarray:
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        u, v = line.split()
        rows.append([float(u), float(v)])
    if len(rows) != 68:
        raise ValueError(f"expected 68 anchor lines, got {len(rows)}")
    return np.array(rows)


def write_anchors(anchors: np.ndarray, path) -> None:
    lines = [f"{float(u)!r} {float(v)!r}" for u, v in np.asarray(anchors, dtype=float)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_template(texture_path, anchors_path, kind: str = "custom") -> MaskTemplate:
    return MaskTemplate(read_ppm(texture_path), read_anchors(anchors_path), kind)


def canonical_anchors(face: FaceModel, width: int, height: int,
                      margin: int = 12) -> np.ndarray:
    """Canonical layout mapped into texture pixels (y flipped: +y up -> v down)."""
    xy = face.canonical_points[:, :2]
    x0, y0 = xy.min(axis=0)
    x1, y1 = xy.max(axis=0)
    u = (xy[:, 0] - x0) / (x1 - x0) * (width - 1 - 2 * margin) + margin
    v = (y1 - xy[:, 1]) / (y1 - y0) * (height - 1 - 2 * margin) + margin
    return np.column_stack([u, v])


def _dist_to_segments(px: np.ndarray, py: np.ndarray, polyline: np.ndarray,
                      closed: bool = False) -> np.ndarray:
    pts = polyline if not closed else np.vstack([polyline, polyline[:1]])
    best = np.full(px.shape, np.inf)
    for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
        dx, dy = bx - ax, by - ay
        L2 = dx * dx + dy * dy
        t = ((px - ax) * dx + (py - ay) * dy) / L2
        t = np.clip(t, 0.0, 1.0)
        d = np.hypot(px - (ax + t * dx), py - (ay + t * dy))
        best = np.minimum(best, d)
    return best


def _inside_polygon(px: np.ndarray, py: np.ndarray, poly: np.ndarray) -> np.ndarray:
    inside = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        crosses = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (py - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (px < xint)
    return inside


def make_template(kind: str, face: FaceModel, width: int = 256,
                  height: int = 256) -> MaskTemplate:
    """Procedurally drawn mask content anchored to the canonical layout."""
    anchors = canonical_anchors(face, width, height)
    tex = np.zeros((height, width, 3), dtype=np.uint8)
    px, py = np.meshgrid(np.arange(width, dtype=float),
                         np.arange(height, dtype=float))
    if kind == "beard":
        jaw = anchors[2:15]
        mouth = anchors[48:60]
        band = _dist_to_segments(px, py, jaw) < 0.09 * width
        chin = _inside_polygon(px, py, np.vstack([jaw, mouth[::-1]]))
        stache = _dist_to_segments(px, py, anchors[[31, 33, 35]]) < 0.04 * width
        mouth_hole = _inside_polygon(px, py, mouth)
        mask = (band | chin | stache) & ~mouth_hole
        tex[mask] = (92, 64, 40)
    elif kind == "glasses":
        for eye in (anchors[36:42], anchors[42:48]):
            c = eye.mean(axis=0)
            r = 2.2 * np.linalg.norm(eye - c, axis=1).max()
            d = np.hypot(px - c[0], py - c[1])
            tex[np.abs(d - r) < 0.015 * width] = (20, 20, 20)
        bridge = _dist_to_segments(px, py, np.vstack([anchors[39], anchors[42]]))
        tex[bridge < 0.012 * width] = (20, 20, 20)
    elif kind == "logo":
        # keep the block inside the landmark hull or the warp can't reach it
        y0 = anchors[36:48, 1].max() + 2
        y1 = anchors[48:60, 1].min() - 4
        x0, x1 = anchors[36, 0], anchors[45, 0]
        block = (px >= x0) & (px <= x1) & (py >= y0) & (py <= y1)
        checker = ((px // 12).astype(int) + (py // 12).astype(int)) % 2 == 0
        tex[block & checker] = (230, 40, 40)
        tex[block & ~checker] = (240, 240, 240)
    elif kind == "makeup":
        lips = _inside_polygon(px, py, anchors[48:60])
        tex[lips] = (200, 30, 80)
        for cheek in ((anchors[2] + anchors[31]) / 2, (anchors[14] + anchors[35]) / 2):
            d = np.hypot(px - cheek[0], py - cheek[1])
            tex[d < 0.07 * width] = (220, 120, 140)
        for brow in (anchors[17:22], anchors[22:27]):
            tex[_dist_to_segments(px, py, brow) < 0.012 * width] = (60, 40, 30)
    else:
        raise ValueError(f"no procedural template for kind {kind!r}")
    return MaskTemplate(Frame(tex), anchors, kind)


@dataclass(frozen=True)
class FrameMapping:
    """The estimated geometry a rendered frame was built from."""

    face_pose_estimate: geometry.Pose
    plane: FacePlane
    projector: optics.ProjectorModel
    projector_pose: geometry.Pose


def plane_lift(pose: geometry.Pose, plane: FacePlane, xy) -> np.ndarray:
    """World point on the plane whose face-frame (x, y) equals xy."""
    xy = np.asarray(xy, dtype=float)
    base = pose.apply(np.array([xy[0], xy[1], 0.0]))
    axis = pose.rotation @ np.array([0.0, 0.0, 1.0])
    den = float(plane.normal @ axis)
    if abs(den) < 1e-12:
        raise ValueError("face plane parallel to the head's z axis")
    z = float(plane.normal @ (plane.center - base)) / den
    return base + z * axis


def intersect_plane(origin: np.ndarray, direction: np.ndarray,
                    plane: FacePlane) -> np.ndarray | None:
    """Ray/plane intersection; None when parallel or behind the origin."""
    nd = float(plane.normal @ direction)
    if abs(nd) < 1e-15:
        return None
    t = float(plane.normal @ (plane.center - origin)) / nd
    if t <= 1e-9:
        return None
    return origin + t * direction


def render_projector_frame(template: MaskTemplate, face_pose_estimate: geometry.Pose,
                           face: FaceModel, proj: optics.ProjectorModel,
                           proj_pose: geometry.Pose) -> tuple[Frame, FrameMapping]:
    """Cast every projector pixel onto the estimated face plane and pull the
    template color through the canonical->anchor piecewise-affine warp.

    Pixels missing the landmark hull stay black.  The 3D mapping makes the
    on-face content size standoff-invariant and follows the estimated face
    roll by construction.
    """
    k = proj.intrinsics
    plane = fit_face_plane(face_pose_estimate, face)
    mapping = FrameMapping(face_pose_estimate, plane, proj, proj_pose)
    center_local = optics.world_to_camera(proj_pose, plane.center)
    if center_local[2] <= optics.MIN_DEPTH:
        raise FaceBehindProjector(f"plane center depth {center_local[2]:.3g} m")
    tables = _warp_tables(face)
    out = np.zeros((k.height, k.width, template.texture.channels), dtype=np.uint8)

    # pixel bbox: hull corners lifted onto the plane, projected, padded
    lifts = np.array([plane_lift(face_pose_estimate, plane, xy)
                      for xy in tables["src"]])
    uv, depths = optics.project_points(k, proj_pose, lifts)
    if np.all(depths > optics.MIN_DEPTH):
        x0 = max(int(np.floor(uv[:, 0].min())) - 3, 0)
        x1 = min(int(np.ceil(uv[:, 0].max())) + 4, k.width)
        y0 = max(int(np.floor(uv[:, 1].min())) - 3, 0)
        y1 = min(int(np.ceil(uv[:, 1].max())) + 4, k.height)
    else:
        x0 = y0 = x1 = y1 = 0
    if x0 < x1 and y0 < y1:
        tri = tables["tri"]
        dst = template.anchors
        render_into(
            out, x0, y0, x1, y1,
            k.fx, k.fy, k.cx, k.cy,
            np.ascontiguousarray(proj_pose.rotation), proj_pose.translation,
            plane.normal, float(plane.normal @ (plane.center - proj_pose.translation)),
            np.ascontiguousarray(face_pose_estimate.rotation),
            face_pose_estimate.translation,
            tables["x3"], tables["y3"],
            tables["a11"], tables["a12"], tables["a21"], tables["a22"],
            tables["bx0"], tables["bx1"], tables["by0"], tables["by1"],
            np.ascontiguousarray(dst[tri[:, 0]]),
            np.ascontiguousarray(dst[tri[:, 1]]),
            np.ascontiguousarray(dst[tri[:, 2]]),
            tables["grid_x0"], tables["grid_y0"],
            tables["grid_inv_cw"], tables["grid_inv_ch"], tables["grid_cells"],
            tables["cell_start"], tables["cell_tris"],
            template.texture.pixels,
        )
    return Frame(out), mapping


def _plane_lift_many(pose: geometry.Pose, plane: FacePlane, xy: np.ndarray) -> np.ndarray:
    base = pose.apply(np.column_stack([xy, np.zeros(len(xy))]))
    axis = pose.rotation @ np.array([0.0, 0.0, 1.0])
    den = float(plane.normal @ axis)
    if abs(den) < 1e-12:
        raise ValueError("face plane parallel to the head's z axis")
    z = (plane.center - base) @ plane.normal / den
    return base + z[:, None] * axis


def onface_error(mapping: FrameMapping, truth_head: geometry.Pose, face: FaceModel,
                 sample_anchors=None) -> tuple[float, float]:
    """Registration error of the rendered content on the true face plane.

    For each sampled anchor: the projector pixel assigned to it under the
    ESTIMATED geometry is ray-cast against the TRUE face plane, and the 3D
    miss distance to the anchor's true on-plane position is reported.
    Anchors whose pixel falls behind the projector or whose ray misses the
    true plane score infinity.  Returns (mean, max) in millimeters.
    """
    if sample_anchors is None:
        xy = face.canonical_points[:, :2]
    else:
        xy = face.canonical_points[np.asarray(sample_anchors, dtype=int), :2]
    true_plane = fit_face_plane(truth_head, face)
    k = mapping.projector.intrinsics
    ppose = mapping.projector_pose

    target_est = _plane_lift_many(mapping.face_pose_estimate, mapping.plane, xy)
    local = (target_est - ppose.translation) @ ppose.rotation
    errors = np.full(len(xy), np.inf)
    front = local[:, 2] > optics.MIN_DEPTH
    if np.any(front):
        z = local[front, 2]
        # continuous pixel the renderer assigns, back through the same ray
        dirs_local = np.column_stack([local[front, 0] / z, local[front, 1] / z,
                                      np.ones(z.shape)])
        dirs = dirs_local @ ppose.rotation.T
        nd = dirs @ true_plane.normal
        num = float(true_plane.normal @ (true_plane.center - ppose.translation))
        ok = np.abs(nd) >= 1e-15
        t = np.where(ok, num / np.where(ok, nd, 1.0), 0.0)
        ok &= t > 1e-9
        hits = ppose.translation + t[:, None] * dirs
        target_true = _plane_lift_many(truth_head, true_plane, xy[front])
        dist_mm = np.linalg.norm(hits - target_true, axis=1) * 1000.0
        errors[front] = np.where(ok, dist_mm, np.inf)
    return float(errors.mean()), float(errors.max())
