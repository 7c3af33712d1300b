"""Compare the compiled render kernel against the numpy reference.

Renders the same servo scene through both backends, reports per-frame
wall time, and checks the outputs byte for byte.

    python3 benchmarks/bench_backends.py [--frames N]
"""

import argparse
import time

import numpy as np

from faceproj import config, face as face_mod, geometry, kernels, mapping, servo


def build_scene():
    cfg = config.load_scenario("")
    face = cfg.face
    head = cfg.trajectory.base_pose
    plane = face_mod.fit_face_plane(head, face)
    pose = servo.compute_target_pose(plane, cfg.gains)
    tpl = mapping.make_template("beard", face)
    return tpl, head, face, cfg.projector, pose


def run(backend_name: str, frames: int, scene):
    backend = kernels.get_backend(backend_name)
    saved = mapping.render_into
    mapping.render_into = backend.render_into
    try:
        out = mapping.render_projector_frame(*scene)[0]  # warm caches
        t0 = time.perf_counter()
        for _ in range(frames):
            out = mapping.render_projector_frame(*scene)[0]
        per_frame = (time.perf_counter() - t0) / frames
    finally:
        mapping.render_into = saved
    return per_frame, out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frames", type=int, default=20)
    args = ap.parse_args()

    scene = build_scene()
    try:
        kernels.get_backend("compiled")
        have_compiled = True
    except ImportError:
        have_compiled = False

    t_py, frame_py = run("python", args.frames, scene)
    print(f"python backend:   {t_py * 1000:8.2f} ms/frame")
    if not have_compiled:
        print("compiled backend: not built (pip install -e . rebuilds it)")
        return
    t_c, frame_c = run("compiled", args.frames, scene)
    print(f"compiled backend: {t_c * 1000:8.2f} ms/frame")
    print(f"speedup:          {t_py / t_c:8.1f}x")
    same = frame_py.pixels.tobytes() == frame_c.pixels.tobytes()
    lit = int(np.count_nonzero(frame_c.pixels.max(axis=2)))
    print(f"byte-identical:   {same} ({lit} lit pixels)")
    if not same:
        raise SystemExit("backend outputs diverged")


if __name__ == "__main__":
    main()
