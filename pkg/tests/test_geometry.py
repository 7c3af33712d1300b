import numpy as np
import pytest

from faceproj import geometry
from faceproj.errors import DegenerateAim
from conftest import random_rotation


def test_compose_identity():
    t = geometry.translation(1.0, 2.0, 3.0)
    out = geometry.compose(geometry.identity(), t)
    assert np.allclose(out.rotation, t.rotation)
    assert np.allclose(out.translation, t.translation)


def test_compose_commuting_translations():
    out = geometry.compose(geometry.translation(1, 0, 0), geometry.translation(0, 1, 0))
    assert np.allclose(out.translation, [1.0, 1.0, 0.0])
    assert np.allclose(out.rotation, np.eye(3))


def test_rotz_quarter_turn_point():
    p = geometry.rot_z(np.pi / 2).rotation @ np.array([1.0, 0.0, 0.0])
    assert np.allclose(p, [0.0, 1.0, 0.0], atol=1e-12)


def test_compose_applies_b_then_a():
    a = geometry.rot_z(0.3)
    b = geometry.translation(1.0, 0.0, 0.0)
    x = np.array([0.0, 2.0, 0.0])
    ab = geometry.compose(a, b)
    direct = a.rotation @ (b.rotation @ x + b.translation) + a.translation
    via = ab.rotation @ x + ab.translation
    assert np.allclose(via, direct, atol=1e-12)


def test_invert_identity_and_translation():
    inv = geometry.invert(geometry.identity())
    assert np.allclose(inv.rotation, np.eye(3))
    assert np.allclose(inv.translation, 0.0)
    inv = geometry.invert(geometry.translation(3, 0, 0))
    assert np.allclose(inv.translation, [-3.0, 0.0, 0.0])


def test_invert_round_trips_random_points():
    rng = np.random.default_rng(7)
    p = geometry.compose(geometry.rot_z(np.radians(30)), geometry.translation(0.2, -0.4, 1.0))
    both = geometry.compose(p, geometry.invert(p))
    for _ in range(100):
        x = rng.uniform(-2, 2, 3)
        y = both.rotation @ x + both.translation
        assert np.linalg.norm(y - x) < 1e-9


def test_compose_invert_is_identity_random():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = geometry.Pose(random_rotation(rng), rng.uniform(-1, 1, 3))
        e = geometry.compose(p, geometry.invert(p))
        assert np.abs(e.rotation - np.eye(3)).max() < 1e-9
        assert np.abs(e.translation).max() < 1e-9


def test_look_at_axis_aligned():
    pose = geometry.look_at_pose([0, 0, 1], [0, 0, 0], [0, 1, 0])
    assert np.allclose(pose.rotation[:, 2], [0, 0, -1], atol=1e-12)
    assert np.allclose(pose.translation, [0, 0, 1])


def test_look_at_degenerate_up():
    with pytest.raises(DegenerateAim):
        geometry.look_at_pose([0, 0, 1], [0, 0, 0], [0, 0, 1])


def test_look_at_eye_equals_target():
    with pytest.raises(DegenerateAim):
        geometry.look_at_pose([1, 2, 3], [1, 2, 3], [0, 0, 1])


def test_look_at_axis_property_random():
    rng = np.random.default_rng(11)
    for _ in range(200):
        eye = rng.uniform(-2, 2, 3)
        target = rng.uniform(-2, 2, 3)
        if np.linalg.norm(target - eye) < 1e-3:
            continue
        up = rng.normal(size=3)
        aim = (target - eye) / np.linalg.norm(target - eye)
        if np.linalg.norm(np.cross(up, aim)) < 1e-3:
            continue
        pose = geometry.look_at_pose(eye, target, up)
        assert abs(pose.rotation[:, 2] @ aim - 1.0) < 1e-9
        # +Y keeps a nonnegative component along the hint
        assert pose.rotation[:, 1] @ (up / np.linalg.norm(up)) > -1e-12
        assert geometry.orthonormality_drift(pose.rotation) < 1e-9


def test_orthonormality_preserved_many_compositions():
    rng = np.random.default_rng(5)
    pose = geometry.identity()
    for _ in range(10_000):
        step = geometry.Pose(random_rotation(rng), rng.uniform(-0.01, 0.01, 3))
        pose = geometry.compose(pose, step)
    assert geometry.orthonormality_drift(pose.rotation) < 1e-6


def test_compose_associative():
    rng = np.random.default_rng(13)
    for _ in range(50):
        a, b, c = (geometry.Pose(random_rotation(rng), rng.uniform(-1, 1, 3)) for _ in range(3))
        left = geometry.compose(geometry.compose(a, b), c)
        right = geometry.compose(a, geometry.compose(b, c))
        assert np.abs(left.rotation - right.rotation).max() < 1e-9
        assert np.abs(left.translation - right.translation).max() < 1e-9


def test_rotvec_round_trip():
    rng = np.random.default_rng(17)
    for _ in range(100):
        v = rng.normal(size=3) * rng.uniform(0, 3)
        r = geometry.rotation_from_rotvec(v)
        v2 = geometry.rotvec_from_rotation(r)
        r2 = geometry.rotation_from_rotvec(v2)
        assert np.abs(r - r2).max() < 1e-9


def test_pose_repairs_drifted_rotation():
    # construction re-orthonormalizes instead of propagating drift
    fixed = geometry.Pose(np.eye(3) * 2.0, np.zeros(3))
    assert geometry.orthonormality_drift(fixed.rotation) < 1e-12
    rng = np.random.default_rng(9)
    rot = geometry.rotation_from_rotvec(rng.normal(size=3))
    drifted = rot + rng.normal(0, 1e-5, (3, 3))
    p = geometry.Pose(drifted, np.zeros(3))
    assert geometry.orthonormality_drift(p.rotation) < 1e-9
    assert np.linalg.det(p.rotation) > 0
