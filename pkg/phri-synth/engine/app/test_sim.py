"""
Tests for observation synthesis: depth rendering, segmentation,
downsampling and the fused policy input.
"""

import numpy as np
import pytest
from PIL import Image

from app.collision import point_triangle_distance
from app.errors import InsufficientPoints, WrongCloudSize
from app.geometry import box_mesh, make_transform
from app.schemas import PART_LABELS, CameraIntrinsics
from app.sim import (
    CLOUD_SIZE,
    GRIPPER_CANONICAL,
    KIND_FURNITURE,
    KIND_HUMAN,
    LabeledPointCloud,
    RenderWorld,
    backproject_segment,
    cast_rays,
    downsample,
    farthest_point_indices,
    fuse_policy_input,
    gripper_points,
    observe,
    render_depth,
    write_depth_pgm,
    write_ply,
)

SMALL = CameraIntrinsics(width=64, height=48)
HEAD = PART_LABELS.index("head")
# Looking straight down from 2 m, slightly off the plane's diagonal.
OVERHEAD = make_transform(np.diag([1.0, -1.0, -1.0]), (0.013, 0.027, 2.0))


def _floor_plane(kind=KIND_HUMAN, part=HEAD) -> RenderWorld:
    corners = np.array([[-5.0, -5.0, 0.0], [5.0, -5.0, 0.0], [5.0, 5.0, 0.0], [-5.0, 5.0, 0.0]])
    triangles = np.stack([corners[[0, 1, 2]], corners[[0, 2, 3]]])
    return RenderWorld.empty().add(triangles, kind, part)


def _block() -> np.ndarray:
    """A 20 cm cube whose top face is 0.9 m from the overhead camera."""
    return box_mesh((0.2, 0.2, 0.2)).transformed(make_transform(translation=(0.013, 0.027, 1.0))).triangles()


def _cloud(n: int) -> LabeledPointCloud:
    points = np.random.default_rng(0).uniform(-1.0, 1.0, (n, 3))
    return LabeledPointCloud(points, np.full(n, KIND_HUMAN, dtype=np.uint8), np.full(n, HEAD, dtype=np.int16), np.zeros((n, 3)))


def test_plane_depth_is_constant_along_the_optical_axis():
    frame = render_depth(_floor_plane(), OVERHEAD, SMALL)
    assert frame.hit_mask.all()
    assert np.allclose(frame.depth, 2.0)
    assert np.allclose(frame.normals, [0.0, 0.0, 1.0])


def test_backprojection_lands_on_the_surface():
    frame = render_depth(_floor_plane(), OVERHEAD, SMALL)
    cloud = backproject_segment(frame, ["head"])
    assert len(cloud) == SMALL.width * SMALL.height
    assert np.abs(cloud.points[:, 2]).max() < 1e-9
    assert set(cloud.labels) == {"head"}


def test_nearest_surface_wins_and_occluders_are_not_segmented():
    world = _floor_plane().add(_block(), KIND_FURNITURE)
    frame = render_depth(world, OVERHEAD, SMALL)
    row, col = SMALL.height // 2, SMALL.width // 2
    assert frame.kinds[row, col] == KIND_FURNITURE
    assert frame.depth[row, col] == pytest.approx(0.9)
    covered = int((frame.kinds == KIND_FURNITURE).sum())
    assert 0 < covered < SMALL.width * SMALL.height
    cloud = backproject_segment(frame, ["head"])
    assert len(cloud) == SMALL.width * SMALL.height - covered


def test_cast_rays_reports_first_hit_and_misses():
    world = _floor_plane().add(_block(), KIND_FURNITURE)
    origins = np.array([[0.013, 0.027, 2.0], [0.013, 0.027, 2.0], [0.0, 0.0, 2.0]])
    directions = np.array([[0.0, 0.0, -1.0], [1.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    t_hit, tri_index = cast_rays(world, origins, directions)
    assert t_hit[0] == pytest.approx(0.9, abs=1e-5)
    assert world.kinds[tri_index[0]] == KIND_FURNITURE
    assert tri_index[1] == -1 and np.isinf(t_hit[1])
    assert t_hit[2] == pytest.approx(0.9, abs=1e-5)


def test_surfaces_inside_the_near_plane_are_skipped():
    sheet = box_mesh((4.0, 4.0, 0.01)).transformed(OVERHEAD @ make_transform(translation=(0.0, 0.0, SMALL.near / 2)))
    frame = render_depth(_floor_plane().add(sheet.triangles(), KIND_FURNITURE), OVERHEAD, SMALL)
    assert (frame.kinds == KIND_HUMAN).all()
    assert np.allclose(frame.depth, 2.0)


def test_window_limits_rendering():
    frame = render_depth(_floor_plane(), OVERHEAD, SMALL, window=(10, 20, 5, 15))
    assert frame.hit_mask.sum() == 100
    assert frame.hit_mask[10:20, 5:15].all()


def test_fully_occluded_part_gives_an_empty_cloud(stretch):
    wall = box_mesh((4.0, 4.0, 0.01)).transformed(OVERHEAD @ make_transform(translation=(0.0, 0.0, 0.5)))
    visible = observe(_floor_plane(), stretch, stretch.home, OVERHEAD, ["head"], SMALL)
    assert len(visible.cloud) > 0
    hidden = observe(_floor_plane().add(wall.triangles(), KIND_FURNITURE), stretch, stretch.home, OVERHEAD, ["head"], SMALL)
    assert len(hidden.cloud) == 0


def test_seated_forearm_segmentation(world):
    observation = world.observe(world.q_init)
    cloud = observation.cloud
    assert len(cloud) > CLOUD_SIZE
    assert set(cloud.labels) == {"left_forearm"}
    triangles = world.placement.posed.world_mesh("left_forearm").triangles()
    sample = cloud.points[:: max(len(cloud) // 300, 1)]
    distances = point_triangle_distance(sample[:, None, :], triangles[None]).min(axis=1)
    assert distances.max() <= 1e-6


def test_downsample_is_exact_and_seeded():
    cloud = _cloud(3000)
    first = downsample(cloud, seed=5)
    assert len(first) == CLOUD_SIZE
    assert np.array_equal(downsample(cloud, seed=5).points, first.points)
    assert not np.array_equal(downsample(cloud, seed=6).points, first.points)
    assert len(np.unique(first.points, axis=0)) == CLOUD_SIZE


def test_downsample_needs_enough_points():
    with pytest.raises(InsufficientPoints) as info:
        downsample(_cloud(CLOUD_SIZE - 1))
    assert info.value.details["points"] == CLOUD_SIZE - 1


def test_farthest_point_sampling():
    points = np.column_stack([np.arange(11.0), np.zeros(11), np.zeros(11)])
    assert farthest_point_indices(points, 3).tolist() == [0, 10, 5]
    picked = downsample(_cloud(2000), seed=1, method="fps")
    assert len(np.unique(picked.points, axis=0)) == CLOUD_SIZE


def test_gripper_encoding_follows_the_tool():
    assert np.array_equal(gripper_points(np.eye(4)), GRIPPER_CANONICAL)
    pose = make_transform(np.diag([1.0, -1.0, -1.0]), (0.5, 0.2, 0.8))
    moved = gripper_points(pose)
    assert np.allclose(moved[0], [0.5, 0.2, 0.8])
    assert np.allclose(moved[1], [0.5, 0.2, 0.75])


def test_fused_policy_input():
    cloud = np.random.default_rng(2).uniform(size=(CLOUD_SIZE, 3))
    fused = fuse_policy_input(cloud, GRIPPER_CANONICAL, (0.1, 0.2, 0.3))
    assert fused.shape == (1505, 6)
    assert np.array_equal(fused[:CLOUD_SIZE, 3:], np.tile([1.0, 0.0, 0.0], (CLOUD_SIZE, 1)))
    assert np.array_equal(fused[CLOUD_SIZE : CLOUD_SIZE + 4, 3:], np.tile([0.0, 1.0, 0.0], (4, 1)))
    assert np.array_equal(fused[-1], [0.1, 0.2, 0.3, 0.0, 0.0, 1.0])
    with pytest.raises(WrongCloudSize):
        fuse_policy_input(cloud[:-1], GRIPPER_CANONICAL, (0.0, 0.0, 0.0))


def test_exports(tmp_path):
    frame = render_depth(_floor_plane(), OVERHEAD, SMALL)
    cloud = backproject_segment(frame, ["head"])
    ply = write_ply(cloud, tmp_path / "cloud.ply").read_text(encoding="ascii").splitlines()
    assert ply[0] == "ply"
    assert f"element vertex {len(cloud)}" in ply
    body = ply[ply.index("end_header") + 1 :]
    assert len(body) == len(cloud)
    assert body[0].split()[-1] == str(HEAD)

    pgm = write_depth_pgm(frame, tmp_path / "depth.pgm")
    assert pgm.read_bytes()[:2] == b"P5"
    depth = np.asarray(Image.open(pgm)).astype(int)
    assert depth.shape == (SMALL.height, SMALL.width)
    assert np.all(depth == 2000)
