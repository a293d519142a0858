import math

import numpy as np
import pytest

from app.collision import (
    COLLISION_TOLERANCE,
    Box,
    Capsule,
    MeshShape,
    collide,
    distance_matrix,
    point_triangle_distance,
    segment_segment_distance,
    sphere,
)
from app.geometry import TriangleMesh, box_mesh, make_transform, pose_xyz_yaw


def _capsule(start, end, radius, tag=""):
    return Capsule(np.asarray(start, dtype=float), np.asarray(end, dtype=float), radius, tag)


def _unit_box(yaw=0.0):
    return Box(pose_xyz_yaw((0.0, 0.0, 0.0), yaw), np.array([1.0, 1.0, 1.0]), tag="box")


def test_parallel_capsules():
    a = _capsule((0, 0, 0), (1, 0, 0), 0.1)
    b = _capsule((0, 1, 0), (1, 1, 0), 0.2)
    assert distance_matrix([a], [b])[0, 0] == pytest.approx(0.7)


def test_crossing_capsules_penetrate():
    a = _capsule((-1, 0, 0), (1, 0, 0), 0.1)
    b = _capsule((0, -1, 0), (0, 1, 0), 0.1)
    hit, distance = collide([a], [b])
    assert hit
    assert distance == pytest.approx(-0.2)


def test_touching_is_not_a_collision():
    a = sphere((0.0, 0.0, 0.0), 0.5)
    b = sphere((1.0, 0.0, 0.0), 0.5)
    hit, distance = collide([a], [b])
    assert not hit
    assert abs(distance) < COLLISION_TOLERANCE


def test_segment_distance_against_dense_sampling(rng):
    t = np.linspace(0.0, 1.0, 401)
    for _ in range(25):
        p1, q1, p2, q2 = rng.uniform(-1.0, 1.0, (4, 3))
        exact = float(segment_segment_distance(p1, q1, p2, q2))
        a = p1 + np.outer(t, q1 - p1)
        b = p2 + np.outer(t, q2 - p2)
        sampled = np.linalg.norm(a[:, None] - b[None], axis=-1).min()
        assert exact <= sampled + 1e-12
        assert sampled - exact < 0.01


def test_sphere_above_box_face():
    assert distance_matrix([sphere((0.0, 0.0, 1.0), 0.2)], [_unit_box()])[0, 0] == pytest.approx(0.3, abs=1e-9)


def test_sphere_beside_rotated_box_corner():
    distance = distance_matrix([sphere((1.0, 0.0, 0.0), 0.1)], [_unit_box(math.pi / 4)])[0, 0]
    assert distance == pytest.approx(1.0 - math.sqrt(0.5) - 0.1, abs=1e-9)


def test_capsule_inside_box_reports_depth():
    capsule = _capsule((-0.1, 0.0, 0.0), (0.1, 0.0, 0.0), 0.05)
    assert distance_matrix([capsule], [_unit_box()])[0, 0] == pytest.approx(-0.55, abs=1e-6)


def test_mesh_distance_agrees_with_box_outside():
    mesh = MeshShape(box_mesh((1.0, 1.0, 1.0)), tag="mesh")
    capsules = [
        _capsule((0.0, -0.3, 1.0), (0.0, 0.3, 1.2), 0.05),
        _capsule((1.0, 1.0, 1.0), (2.0, 2.0, 2.0), 0.1),
        _capsule((0.9, -0.2, 0.0), (0.9, 0.2, 0.1), 0.02),
    ]
    by_mesh = distance_matrix(capsules, [mesh])[:, 0]
    by_box = distance_matrix(capsules, [_unit_box()])[:, 0]
    assert np.allclose(by_mesh, by_box, atol=1e-7)
    assert by_mesh[1] == pytest.approx(math.sqrt(3.0) * 0.5 - 0.1)


def test_segment_through_mesh_is_zero_distance():
    mesh = MeshShape(box_mesh((1.0, 1.0, 1.0)))
    capsule = _capsule((0.0, 0.0, -2.0), (0.0, 0.0, 2.0), 0.01)
    assert distance_matrix([capsule], [mesh])[0, 0] == pytest.approx(-0.01)


def test_capsule_inside_mesh_is_penetrating():
    mesh = MeshShape(box_mesh((1.0, 1.0, 1.0)), tag="mesh")
    capsule = _capsule((-0.1, 0.0, 0.0), (0.1, 0.0, 0.0), 0.05)
    assert distance_matrix([capsule], [mesh])[0, 0] == pytest.approx(-0.55, abs=1e-6)
    hit, distance = collide([capsule], [mesh])
    assert hit and distance < 0.0


def test_open_mesh_has_no_inside():
    closed = box_mesh((1.0, 1.0, 1.0))
    lidless = MeshShape(TriangleMesh(closed.vertices, closed.faces[2:]))
    capsule = _capsule((-0.1, 0.0, 0.0), (0.1, 0.0, 0.0), 0.05)
    assert not lidless.contains(capsule.start)[0]
    assert distance_matrix([capsule], [lidless])[0, 0] == pytest.approx(0.35, abs=1e-6)


def test_point_triangle_distance_against_sampling(rng):
    triangle = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    u, v = np.meshgrid(np.linspace(0, 1, 201), np.linspace(0, 1, 201))
    keep = (u + v) <= 1.0
    samples = triangle[0] + np.outer(u[keep], triangle[1]) + np.outer(v[keep], triangle[2])
    for point in rng.uniform(-1.0, 2.0, (20, 3)):
        exact = float(point_triangle_distance(point, triangle))
        sampled = np.linalg.norm(samples - point, axis=1).min()
        assert exact <= sampled + 1e-12
        assert sampled - exact < 0.01


def test_cutoff_reports_a_lower_bound():
    far = sphere((10.0, 0.0, 0.0), 0.1)
    exact = distance_matrix([far], [_unit_box()])[0, 0]
    bounded = distance_matrix([far], [_unit_box()], cutoff=1.0)[0, 0]
    assert bounded <= exact
    assert bounded > 1.0


def test_box_pairs_are_rejected():
    with pytest.raises(ValueError):
        distance_matrix([_unit_box()], [Box(make_transform(), np.ones(3))])


def test_empty_sets_never_collide():
    assert collide([], [sphere((0, 0, 0), 1.0)]) == (False, float("inf"))
