import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from scipy.spatial.transform import Rotation

from conftest import box_planes
from roomverb.errors import DegenerateInput, InsufficientPlanes, OutOfRoom
from roomverb.geometry import (DEFAULT_FACE_OFFSET, Plane, Pose, ShoeboxModel, estimate_shoebox,
                               map_pose_into_shoebox, minimal_rotation, nearest_wall_distances,
                               quat_from_yaw, quat_multiply, update_shoebox)


def test_exact_planes_recover_box():
    box = estimate_shoebox(box_planes((4.0, 3.0, 2.5)), listener=[1.0, 1.0, 1.0])
    np.testing.assert_allclose(box.dimensions, [4.0, 3.0, 2.5], atol=1e-9)
    np.testing.assert_allclose(box.min_corner, [0, 0, 0], atol=1e-9)
    assert box.frame_yaw == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(box.support, 1.0)


def test_rotated_planes_recover_yaw():
    yaw = math.radians(30.0)
    listener = np.array([[math.cos(yaw), -math.sin(yaw), 0], [math.sin(yaw), math.cos(yaw), 0], [0, 0, 1]]) @ [2, 1.5, 1]
    box = estimate_shoebox(box_planes((4.0, 3.0, 2.5), yaw=yaw), listener=listener)
    assert box.frame_yaw == pytest.approx(yaw, abs=1e-6)
    np.testing.assert_allclose(box.dimensions, [4.0, 3.0, 2.5], atol=1e-6)


def test_floor_and_one_wall_uses_default_faces():
    floor = Plane([0, 0, 1], 0.0, (3, 3))
    wall = Plane([1, 0, 0], 2.0, (3, 2))
    box = estimate_shoebox([floor, wall], listener=[0.0, 0.0, 1.5])
    np.testing.assert_allclose(box.bounds, [-DEFAULT_FACE_OFFSET, 2.0, -3.0, 3.0, 0.0, 1.5 + 3.0])
    np.testing.assert_allclose(box.support, [0, 1, 0, 0, 1, 0])


def test_insufficient_planes():
    with pytest.raises(InsufficientPlanes):
        estimate_shoebox([Plane([0, 0, 1], 0.0)])
    with pytest.raises(InsufficientPlanes):
        estimate_shoebox([Plane([1, 0, 0], 2.0), Plane([0, 1, 0], 2.0)])


def test_cluster_keeps_outermost_plane():
    # a cabinet front 1 m inside the wall must not pull the wall in
    planes = box_planes((4.0, 3.0, 2.5)) + [Plane([1, 0, 0], 3.0, (1, 1), 1.0)]
    box = estimate_shoebox(planes, listener=[1, 1, 1])
    assert box.max_corner[0] == pytest.approx(4.0)


def test_update_identical_planes_is_fixed_point():
    planes = box_planes((4.0, 3.0, 2.5))
    box = estimate_shoebox(planes, listener=[1, 1, 1])
    new = update_shoebox(box, planes)
    np.testing.assert_allclose(new.bounds, box.bounds, atol=1e-9)
    np.testing.assert_allclose(new.previous, box.bounds)


def test_update_converges_geometrically():
    box = ShoeboxModel.from_dimensions((4.0, 3.0, 2.5))
    wall = [Plane([1, 0, 0], 5.0, (2, 2))]
    history = []
    for n in range(1, 22):
        box = update_shoebox(box, wall)
        history.append(box.max_corner[0])
        assert box.max_corner[0] == pytest.approx(4.0 + (1 - 0.8 ** n), abs=1e-12)
    assert abs(history[-1] - 5.0) < 0.01
    steps = np.abs(np.diff(history))
    assert np.all(np.diff(steps) < 0)


def test_update_empty_decays_support():
    box = ShoeboxModel.from_dimensions((4.0, 3.0, 2.5))
    new = update_shoebox(box, [])
    np.testing.assert_allclose(new.bounds, box.bounds)
    np.testing.assert_allclose(new.support, 0.99)


def test_minimal_rotation_examples():
    np.testing.assert_allclose(minimal_rotation([1, 2, 3], [2, 4, 6]), np.eye(3), atol=1e-12)
    r = minimal_rotation([1, 0, 0], [0, 1, 0])
    np.testing.assert_allclose(r, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-12)


def test_minimal_rotation_antipodal():
    v = np.array([0.3, -1.0, 2.0])
    r = minimal_rotation(v, -v)
    np.testing.assert_allclose(r @ v, -v, atol=1e-12)
    assert np.trace(r) == pytest.approx(-1.0)
    # axis: v x e_k with k the smallest-magnitude component of v (here x)
    axis = np.cross(v, [1, 0, 0])
    axis /= np.linalg.norm(axis)
    np.testing.assert_allclose(r @ axis, axis, atol=1e-12)
    np.testing.assert_allclose(minimal_rotation(v, -v), r)


def test_minimal_rotation_degenerate():
    with pytest.raises(DegenerateInput):
        minimal_rotation([0, 0, 0], [1, 0, 0])


vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3)


@given(vectors, vectors)
@hsettings(max_examples=300, deadline=None)
def test_minimal_rotation_properties(a, b):
    a, b = np.array(a), np.array(b)
    r = minimal_rotation(a, b)
    np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-9)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(r @ (a / np.linalg.norm(a)), b / np.linalg.norm(b), atol=1e-9)
    theta = math.atan2(np.linalg.norm(np.cross(a, b)), a @ b)
    assert np.trace(r) == pytest.approx(1 + 2 * math.cos(theta), abs=1e-9)


def test_map_pose_min_corner_example():
    box = ShoeboxModel.from_dimensions((4.0, 3.0, 2.5))
    pose = map_pose_into_shoebox(Pose([9, 9, 9]), [2.0, 1.5, 1.0], box)
    np.testing.assert_allclose(pose.position, [2.0, 1.5, 1.0])


def test_map_pose_identity_room():
    box = ShoeboxModel.from_dimensions((4.0, 3.0, 2.5))
    q = Rotation.from_euler("z", 40, degrees=True).as_quat()[[3, 0, 1, 2]]
    listener = Pose([1.0, 1.2, 1.6], q)
    source = Pose([3.0, 2.0, 1.4])
    d_src, s_src = nearest_wall_distances(box, source.position)
    src_mapped = map_pose_into_shoebox(source, d_src, box, s_src)
    d, s = nearest_wall_distances(box, listener.position)
    mapped = map_pose_into_shoebox(listener, d, box, s, companion=(source, src_mapped))
    np.testing.assert_allclose(mapped.position, listener.position, atol=1e-12)
    np.testing.assert_allclose(mapped.orientation, listener.orientation, atol=1e-12)


def test_map_pose_companion_rotation_30_degrees():
    # the real room is wider than the shoebox: the source ends up rotated by 30 deg about z
    box = ShoeboxModel.from_dimensions((4.0, 4.0, 3.0))
    listener = Pose([1.0, 1.0, 1.5])
    source_world = Pose([1.0 + 2.0, 1.0, 1.5])
    angle = math.radians(30)
    source_mapped = Pose([1.0 + 2.0 * math.cos(angle), 1.0 + 2.0 * math.sin(angle), 1.5])
    mapped = map_pose_into_shoebox(listener, [1.0, 1.0, 1.5], box, companion=(source_world, source_mapped))
    expected = quat_multiply(quat_from_yaw(angle), [1, 0, 0, 0])
    np.testing.assert_allclose(mapped.orientation, expected, atol=1e-12)
    assert mapped.orientation[0] == pytest.approx(math.cos(math.radians(15)))


def test_map_pose_out_of_room():
    box = ShoeboxModel.from_dimensions((4.0, 3.0, 2.5))
    with pytest.raises(OutOfRoom):
        map_pose_into_shoebox(Pose([0, 0, 0]), [5.0, 1.0, 1.0], box)
    with pytest.raises(OutOfRoom):
        map_pose_into_shoebox(Pose([0, 0, 0]), [-0.1, 1.0, 1.0], box)


def test_map_pose_preserves_wall_distances_random_rooms():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        box = ShoeboxModel.from_dimensions(rng.uniform(2, 12, 3), rng.uniform(-5, 5, 3), rng.uniform(-3, 3))
        sides = rng.integers(0, 2, 3)
        d = rng.uniform(0, 1, 3) * box.dimensions
        p = map_pose_into_shoebox(Pose(rng.normal(size=3)), d, box, sides)
        got, got_sides = nearest_wall_distances(box, p.position)
        to_face = np.where(sides == 1, box.max_corner - p.position, p.position - box.min_corner)
        np.testing.assert_allclose(to_face, d, atol=1e-6)


def test_pair_distance_preserved_under_consistent_mapping():
    rng = np.random.default_rng(3)
    for _ in range(200):
        box = ShoeboxModel.from_dimensions(rng.uniform(3, 10, 3))
        a, b = (rng.uniform(box.min_corner, box.max_corner) for _ in range(2))
        da, sa = nearest_wall_distances(box, a)
        db, sb = nearest_wall_distances(box, b)
        pa = map_pose_into_shoebox(Pose(a), da, box, sa).position
        pb = map_pose_into_shoebox(Pose(b), db, box, sb).position
        assert np.linalg.norm(pa - pb) == pytest.approx(np.linalg.norm(a - b), abs=1e-6)


def test_shoebox_invariants():
    with pytest.raises(ValueError):
        ShoeboxModel.from_dimensions((0.0, 3.0, 2.5))
    box = ShoeboxModel.from_dimensions((5, 4, 3), yaw=4.0)
    assert -math.pi <= box.frame_yaw < math.pi
    assert box.volume == pytest.approx(60.0)
    assert box.surface_area == pytest.approx(94.0)
    p = np.array([1.0, 2.0, 0.5])
    np.testing.assert_allclose(box.to_world(box.to_local(p)), p)


def test_plane_and_pose_normalize():
    p = Plane([0, 0, 2], 3.0)
    assert np.linalg.norm(p.normal) == pytest.approx(1.0, abs=1e-12)
    assert p.offset == pytest.approx(1.5)
    q = Pose([0, 0, 0], [2, 0, 0, 0])
    assert np.linalg.norm(q.orientation) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        Plane([0, 0, 1], 0.0, confidence=1.5)
