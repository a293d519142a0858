"""
Observation synthesis: pinhole ray casting of the world into depth images,
part-labelled point clouds, downsampling, the four-point gripper encoding
and the fused policy input.

Rays are cast with open3d's RaycastingScene, one triangle soup per render.
Depth is measured along the optical axis.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import open3d as o3d
from PIL import Image

from .body import PosedHuman
from .errors import InsufficientPoints, IOFailure, WrongCloudSize
from .geometry import box_mesh, capsule_mesh
from .logger import get_logger
from .robot import RobotModel
from .schemas import PART_LABELS, CameraIntrinsics, SceneLayout
from .scene import floor_box, furniture_mesh, wall_boxes

logger = get_logger(__name__)

KIND_NONE, KIND_HUMAN, KIND_FURNITURE, KIND_ROBOT = 0, 1, 2, 3
KIND_NAMES = {KIND_NONE: "none", KIND_HUMAN: "human", KIND_FURNITURE: "furniture", KIND_ROBOT: "robot"}
CLOUD_SIZE = 1500
GRIPPER_CANONICAL = np.array(
    [
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.05],
        [0.0, 0.03, 0.08],
        [0.0, -0.03, 0.08],
    ]
)
ROLE_CLOUD, ROLE_GRIPPER, ROLE_TARGET = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)
ROI_MARGIN = 2
ROBOT_CAPSULE_SEGMENTS = 12
ROBOT_CAPSULE_STACKS = 3


# World snapshots

@dataclass(frozen=True, eq=False)
class RenderWorld:
    triangles: np.ndarray  # (M, 3, 3) world frame
    kinds: np.ndarray  # (M,) uint8 entity kind
    parts: np.ndarray  # (M,) int16 index into PART_LABELS, -1 when not human

    @classmethod
    def empty(cls) -> "RenderWorld":
        return cls(np.zeros((0, 3, 3)), np.zeros(0, dtype=np.uint8), np.zeros(0, dtype=np.int16))

    def add(self, triangles: np.ndarray, kind: int, part: int = -1) -> "RenderWorld":
        triangles = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
        return RenderWorld(
            np.concatenate([self.triangles, triangles]),
            np.concatenate([self.kinds, np.full(len(triangles), kind, dtype=np.uint8)]),
            np.concatenate([self.parts, np.full(len(triangles), part, dtype=np.int16)]),
        )

    def merge(self, other: "RenderWorld") -> "RenderWorld":
        return RenderWorld(
            np.concatenate([self.triangles, other.triangles]),
            np.concatenate([self.kinds, other.kinds]),
            np.concatenate([self.parts, other.parts]),
        )


def static_world(layout: Optional[SceneLayout], posed: Optional[PosedHuman]) -> RenderWorld:
    """Furniture, walls, floor and the posed human; everything that stays put during an episode."""
    world = RenderWorld.empty()
    if layout is not None:
        for entry in layout.furniture:
            world = world.add(furniture_mesh(entry).triangles(), KIND_FURNITURE)
        for box in wall_boxes(layout.room) + [floor_box(layout.room)]:
            world = world.add(box_mesh(box.extents).transformed(box.transform).triangles(), KIND_FURNITURE)
    if posed is not None:
        for label, mesh in posed.world_meshes():
            world = world.add(mesh.triangles(), KIND_HUMAN, PART_LABELS.index(label))
    return world


def robot_world(model: RobotModel, q) -> RenderWorld:
    world = RenderWorld.empty()
    for capsule in model.collision_shapes(q):
        mesh = capsule_mesh(capsule.start, capsule.end, capsule.radius, ROBOT_CAPSULE_SEGMENTS, ROBOT_CAPSULE_STACKS)
        world = world.add(mesh.triangles(), KIND_ROBOT)
    return world


# Depth rendering

@dataclass(frozen=True, eq=False)
class DepthFrame:
    depth: np.ndarray  # (H, W) metres along the optical axis, NaN on miss
    kinds: np.ndarray  # (H, W) uint8
    parts: np.ndarray  # (H, W) int16
    normals: np.ndarray  # (H, W, 3) world frame, facing the camera
    camera_pose: np.ndarray
    intrinsics: CameraIntrinsics

    @property
    def hit_mask(self) -> np.ndarray:
        return self.kinds != KIND_NONE


def pixel_directions(intrinsics: CameraIntrinsics, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Camera-frame ray directions through pixel centres, scaled so z = 1."""
    x = (cols + 0.5 - intrinsics.cx) / intrinsics.fx
    y = (rows + 0.5 - intrinsics.cy) / intrinsics.fy
    return np.stack([x, y, np.ones_like(x, dtype=float)], axis=-1)


def project_points(points: np.ndarray, camera_pose: np.ndarray, intrinsics: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates (u, v) and camera-frame depth of world points."""
    local = (np.asarray(points, dtype=float) - camera_pose[:3, 3]) @ camera_pose[:3, :3]
    depth = local[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.fx * local[..., 0] / depth + intrinsics.cx
        v = intrinsics.fy * local[..., 1] / depth + intrinsics.cy
    return np.stack([u, v], axis=-1), depth


def region_of_interest(world: RenderWorld, parts: Sequence[str], camera_pose: np.ndarray, intrinsics: CameraIntrinsics) -> Optional[tuple]:
    """Pixel window (row0, row1, col0, col1) covering the given human parts, None when none are in front."""
    wanted = np.isin(world.parts, [PART_LABELS.index(p) for p in parts]) & (world.kinds == KIND_HUMAN)
    if not wanted.any():
        return None
    uv, depth = project_points(world.triangles[wanted].reshape(-1, 3), camera_pose, intrinsics)
    front = depth > intrinsics.near * 0.5
    if not front.any():
        return None
    if not front.all():
        return (0, intrinsics.height, 0, intrinsics.width)
    col0 = max(int(np.floor(uv[:, 0].min())) - ROI_MARGIN, 0)
    col1 = min(int(np.ceil(uv[:, 0].max())) + ROI_MARGIN, intrinsics.width)
    row0 = max(int(np.floor(uv[:, 1].min())) - ROI_MARGIN, 0)
    row1 = min(int(np.ceil(uv[:, 1].max())) + ROI_MARGIN, intrinsics.height)
    if col0 >= col1 or row0 >= row1:
        return None
    return (row0, row1, col0, col1)


def cast_rays(world: RenderWorld, origins: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First hit per ray as (ray parameter, triangle index); inf and -1 on a miss."""
    scene = o3d.t.geometry.RaycastingScene()
    vertices = world.triangles.reshape(-1, 3).astype(np.float32)
    faces = np.arange(len(vertices), dtype=np.uint32).reshape(-1, 3)
    scene.add_triangles(o3d.core.Tensor(vertices), o3d.core.Tensor(faces))
    rays = o3d.core.Tensor(np.hstack([origins, directions]).astype(np.float32))
    ans = scene.cast_rays(rays)
    t_hit = ans["t_hit"].numpy().astype(float)
    primitive = ans["primitive_ids"].numpy().astype(np.int64)
    return t_hit, np.where(np.isfinite(t_hit), primitive, -1)


def render_depth(
    world: RenderWorld,
    camera_pose: np.ndarray,
    intrinsics: CameraIntrinsics = CameraIntrinsics(),
    window: Optional[tuple] = None,
) -> DepthFrame:
    """Ray-cast every pixel in ``window`` (the whole image by default); pixels outside it report a miss."""
    height, width = intrinsics.height, intrinsics.width
    row0, row1, col0, col1 = window or (0, height, 0, width)
    depth_image = np.full((height, width), np.nan)
    kinds = np.zeros((height, width), dtype=np.uint8)
    parts = np.full((height, width), -1, dtype=np.int16)
    normals = np.zeros((height, width, 3))
    frame = DepthFrame(depth_image, kinds, parts, normals, camera_pose, intrinsics)
    if len(world.triangles) == 0 or row0 >= row1 or col0 >= col1:
        return frame

    rows, cols = (grid.ravel() for grid in np.mgrid[row0:row1, col0:col1])
    origin = camera_pose[:3, 3]
    directions = pixel_directions(intrinsics, rows, cols) @ camera_pose[:3, :3].T
    # rays start on the near plane; directions have unit optical-axis component
    t_hit, tri_index = cast_rays(world, origin + intrinsics.near * directions, directions)
    hit = tri_index >= 0
    rows, cols, directions, tris = rows[hit], cols[hit], directions[hit], tri_index[hit]

    # depth is re-solved in double precision on the plane of the hit triangle
    tri = world.triangles[tris]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    facing = np.einsum("ij,ij->i", n, directions)
    along = np.einsum("ij,ij->i", n, tri[:, 0] - origin)
    grazing = np.abs(facing) < 1e-12
    depth = np.where(grazing, intrinsics.near + t_hit[hit], along / np.where(grazing, 1.0, facing))
    keep = (depth >= intrinsics.near) & (depth <= intrinsics.far)
    rows, cols, tris, depth, n, facing = rows[keep], cols[keep], tris[keep], depth[keep], n[keep], facing[keep]

    depth_image[rows, cols] = depth
    kinds[rows, cols] = world.kinds[tris]
    parts[rows, cols] = world.parts[tris]
    n[facing > 0] *= -1.0
    normals[rows, cols] = n
    return frame


# Point clouds

@dataclass(frozen=True, eq=False)
class LabeledPointCloud:
    points: np.ndarray  # (N, 3) world frame
    kinds: np.ndarray  # (N,) uint8
    parts: np.ndarray  # (N,) int16
    normals: np.ndarray  # (N, 3) unit, facing the camera

    def __len__(self) -> int:
        return len(self.points)

    @property
    def labels(self) -> list[str]:
        return [PART_LABELS[p] if p >= 0 else KIND_NAMES[k] for k, p in zip(self.kinds, self.parts)]

    def take(self, index: np.ndarray) -> "LabeledPointCloud":
        return LabeledPointCloud(self.points[index], self.kinds[index], self.parts[index], self.normals[index])


def backproject_segment(frame: DepthFrame, wanted_parts: Sequence[str]) -> LabeledPointCloud:
    """World-frame points of the pixels that hit one of ``wanted_parts`` of the human."""
    if not wanted_parts:
        raise ValueError("wanted_parts must not be empty")
    wanted = [PART_LABELS.index(part) for part in wanted_parts]
    mask = (frame.kinds == KIND_HUMAN) & np.isin(frame.parts, wanted)
    rows, cols = np.nonzero(mask)
    rays = pixel_directions(frame.intrinsics, rows, cols) * frame.depth[rows, cols][:, None]
    points = rays @ frame.camera_pose[:3, :3].T + frame.camera_pose[:3, 3]
    return LabeledPointCloud(points, frame.kinds[rows, cols], frame.parts[rows, cols], frame.normals[rows, cols])


def downsample(cloud: LabeledPointCloud, n: int = CLOUD_SIZE, seed: int = 0, method: str = "uniform") -> LabeledPointCloud:
    """Exactly ``n`` points: a seeded uniform subset, or farthest-point sampling from a seeded start."""
    if len(cloud) < n:
        raise InsufficientPoints(f"cloud has {len(cloud)} points, {n} required", points=len(cloud), required=n)
    rng = np.random.default_rng(seed)
    if method == "fps":
        index = farthest_point_indices(cloud.points, n, int(rng.integers(len(cloud))))
    else:
        index = np.sort(rng.choice(len(cloud), size=n, replace=False))
    return cloud.take(index)


def farthest_point_indices(points: np.ndarray, n: int, first: int = 0) -> np.ndarray:
    chosen = [first]
    distances = np.linalg.norm(points - points[first], axis=1)
    while len(chosen) < n:
        index = int(np.argmax(distances))
        chosen.append(index)
        distances = np.minimum(distances, np.linalg.norm(points - points[index], axis=1))
    return np.array(chosen)


# Policy input

def gripper_points(tool_pose: np.ndarray) -> np.ndarray:
    return GRIPPER_CANONICAL @ tool_pose[:3, :3].T + tool_pose[:3, 3]


def fuse_policy_input(cloud_points: np.ndarray, gripper: np.ndarray, target) -> np.ndarray:
    """(1505, 6) rows: cloud, gripper and target points, each followed by a one-hot role."""
    cloud_points = np.asarray(cloud_points, dtype=float)
    if cloud_points.shape != (CLOUD_SIZE, 3):
        raise WrongCloudSize(f"expected a {CLOUD_SIZE}x3 cloud, got {cloud_points.shape}", shape=list(cloud_points.shape))
    rows = [
        np.hstack([cloud_points, np.tile(ROLE_CLOUD, (CLOUD_SIZE, 1))]),
        np.hstack([np.asarray(gripper, dtype=float), np.tile(ROLE_GRIPPER, (4, 1))]),
        np.hstack([np.asarray(target, dtype=float).reshape(1, 3), np.array([ROLE_TARGET])]),
    ]
    return np.vstack(rows)


# Observations

@dataclass(frozen=True, eq=False)
class Observation:
    frame: DepthFrame
    cloud: LabeledPointCloud  # segmented, before downsampling


def observe(
    static: RenderWorld,
    model: RobotModel,
    q,
    camera_pose: np.ndarray,
    wanted_parts: Sequence[str],
    intrinsics: CameraIntrinsics = CameraIntrinsics(),
) -> Observation:
    """Render the wanted parts' window with the robot at ``q`` and segment them out."""
    world = static.merge(robot_world(model, q))
    window = region_of_interest(static, wanted_parts, camera_pose, intrinsics)
    if window is None:
        frame = render_depth(RenderWorld.empty(), camera_pose, intrinsics)
    else:
        frame = render_depth(world, camera_pose, intrinsics, window)
    return Observation(frame, backproject_segment(frame, wanted_parts))


# Export

def write_ply(cloud: LabeledPointCloud, path: str | Path) -> Path:
    path = Path(path)
    labels = cloud.labels
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        *(f"property float {name}" for name in ("x", "y", "z", "nx", "ny", "nz")),
        "property uchar label",
        "end_header",
    ]
    label_codes = {name: index for index, name in enumerate(PART_LABELS)}
    for point, normal, label in zip(cloud.points, cloud.normals, labels):
        values = " ".join(f"{v:.6f}" for v in (*point, *normal))
        lines.append(f"{values} {label_codes.get(label, 255)}")
    try:
        path.write_text("\n".join(lines) + "\n", encoding="ascii")
    except OSError as e:
        raise IOFailure(f"cannot write point cloud: {e}", path=str(path)) from e
    return path


def write_depth_pgm(frame: DepthFrame, path: str | Path) -> Path:
    """16-bit PGM, depth in millimetres, 0 on miss."""
    path = Path(path)
    millimetres = np.nan_to_num(frame.depth * 1000.0, nan=0.0)
    image = Image.fromarray(np.clip(np.round(millimetres), 0, 65535).astype(np.uint16))
    try:
        image.save(path, format="PPM")
    except OSError as e:
        raise IOFailure(f"cannot write depth image: {e}", path=str(path)) from e
    return path
