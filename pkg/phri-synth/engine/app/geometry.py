"""
Rigid transforms and closed triangle meshes.

Transforms are 4x4 homogeneous numpy arrays; quaternions are scalar-last
(x, y, z, w) as in ``scipy.spatial.transform.Rotation``.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import trimesh
from scipy.spatial.transform import Rotation

from .errors import EmptyMesh, IOFailure

CAPSULE_SEGMENTS = 16
CAPSULE_STACKS = 12


def make_transform(rotation=None, translation=None) -> np.ndarray:
    transform = np.eye(4)
    if rotation is not None:
        transform[:3, :3] = rotation
    if translation is not None:
        transform[:3, 3] = translation
    return transform


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def pose_xyz_yaw(position, yaw: float) -> np.ndarray:
    return make_transform(rot_z(yaw), np.asarray(position, dtype=float))


def rpy_matrix(rpy) -> np.ndarray:
    """URDF roll-pitch-yaw about fixed axes."""
    return Rotation.from_euler("xyz", rpy).as_matrix()


def pose_from_position_quat(position, quat_xyzw) -> np.ndarray:
    return make_transform(Rotation.from_quat(quat_xyzw).as_matrix(), np.asarray(position, dtype=float))


def position_quat(transform: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    quat = Rotation.from_matrix(transform[:3, :3]).as_quat()
    if quat[3] < 0:
        quat = -quat
    return transform[:3, 3].copy(), quat


def invert_transform(transform: np.ndarray) -> np.ndarray:
    rotation = transform[:3, :3].T
    return make_transform(rotation, -rotation @ transform[:3, 3])


def transform_points(transform: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return points @ transform[:3, :3].T + transform[:3, 3]


def unit(vector) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    return vector / np.linalg.norm(vector)


def orthonormal_basis(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``direction`` to a right-handed frame."""
    reference = np.array([1.0, 0.0, 0.0]) if abs(direction[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    first = unit(reference - direction * np.dot(direction, reference))
    return first, np.cross(direction, first)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def transformed(self, transform: np.ndarray) -> "TriangleMesh":
        return TriangleMesh(transform_points(transform, self.vertices), self.faces)

    def bounds(self) -> np.ndarray:
        if len(self.vertices) == 0:
            raise EmptyMesh("mesh has no vertices")
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def face_normals(self) -> np.ndarray:
        tri = self.triangles()
        normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return normals / np.linalg.norm(normals, axis=1, keepdims=True)

    def to_trimesh(self) -> trimesh.Trimesh:
        return trimesh.Trimesh(vertices=self.vertices, faces=self.faces, process=False)

    def signed_volume(self) -> float:
        tri = self.triangles()
        return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)

    def boundary_edge_count(self) -> int:
        edges = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        _, counts = np.unique(np.sort(edges, axis=1), axis=0, return_counts=True)
        return int((counts == 1).sum())


def _ring_faces(rings: int, segments: int) -> np.ndarray:
    """Faces for a pole-ring-...-ring-pole vertex layout (top pole first, bottom pole last)."""
    faces = []
    top, bottom = 0, 1 + rings * segments
    for j in range(segments):
        faces.append((top, 1 + j, 1 + (j + 1) % segments))
    for ring in range(rings - 1):
        upper = 1 + ring * segments
        lower = upper + segments
        for j in range(segments):
            jn = (j + 1) % segments
            faces.append((upper + j, lower + j, lower + jn))
            faces.append((upper + j, lower + jn, upper + jn))
    last = 1 + (rings - 1) * segments
    for j in range(segments):
        faces.append((bottom, last + (j + 1) % segments, last + j))
    return np.asarray(faces, dtype=np.int64)


def capsule_mesh(start, end, radius: float, segments: int = CAPSULE_SEGMENTS, stacks: int = CAPSULE_STACKS) -> TriangleMesh:
    """Closed capsule between ``start`` and ``end``; ``stacks`` latitude bands split over both caps."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    axis = end - start
    length = np.linalg.norm(axis)
    direction = axis / length if length > 1e-12 else np.array([0.0, 0.0, 1.0])
    u, v = orthonormal_basis(direction)
    half = stacks // 2
    angles = 2.0 * np.pi * np.arange(segments) / segments
    circle = np.outer(np.cos(angles), u) + np.outer(np.sin(angles), v)

    vertices = [end + direction * radius]
    for k in range(1, half + 1):
        phi = k * (np.pi / 2.0) / half
        vertices.extend(end + direction * radius * np.cos(phi) + circle * radius * np.sin(phi))
    for k in range(half):
        phi = np.pi / 2.0 + k * (np.pi / 2.0) / half
        vertices.extend(start + direction * radius * np.cos(phi) + circle * radius * np.sin(phi))
    vertices.append(start - direction * radius)
    return TriangleMesh(np.asarray(vertices), _ring_faces(2 * half, segments))


def ellipsoid_mesh(semi_axes, center=(0.0, 0.0, 0.0), segments: int = CAPSULE_SEGMENTS, stacks: int = CAPSULE_STACKS) -> TriangleMesh:
    a, b, c = semi_axes
    center = np.asarray(center, dtype=float)
    angles = 2.0 * np.pi * np.arange(segments) / segments
    vertices = [center + (0.0, 0.0, c)]
    for k in range(1, stacks):
        phi = k * np.pi / stacks
        ring = np.stack(
            [a * np.sin(phi) * np.cos(angles), b * np.sin(phi) * np.sin(angles), np.full(segments, c * np.cos(phi))],
            axis=1,
        )
        vertices.extend(center + ring)
    vertices.append(center - (0.0, 0.0, c))
    return TriangleMesh(np.asarray(vertices), _ring_faces(stacks - 1, segments))


# Vertex index 4*i + 2*j + k, where i, j, k select the -/+ side along x, y, z.
_BOX_FACES = np.array(
    [
        (0, 1, 3), (0, 3, 2),
        (4, 6, 7), (4, 7, 5),
        (0, 4, 5), (0, 5, 1),
        (2, 3, 7), (2, 7, 6),
        (0, 2, 6), (0, 6, 4),
        (1, 5, 7), (1, 7, 3),
    ],
    dtype=np.int64,
)


def box_vertices(extents) -> np.ndarray:
    half = np.asarray(extents, dtype=float) / 2.0
    signs = np.array([(i, j, k) for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)], dtype=float)
    return signs * half


def box_mesh(extents) -> TriangleMesh:
    return TriangleMesh(box_vertices(extents), _BOX_FACES.copy())


def load_mesh_file(path: str | Path) -> TriangleMesh:
    """Load a PLY or OBJ file as a single triangle mesh."""
    try:
        loaded = trimesh.load(str(path), force="mesh", process=False)
    except (OSError, ValueError) as e:
        raise IOFailure(f"cannot read mesh file: {e}", path=str(path)) from e
    mesh = TriangleMesh(np.asarray(loaded.vertices, dtype=float), np.asarray(loaded.faces, dtype=np.int64))
    if len(mesh.vertices) == 0:
        raise EmptyMesh("mesh file has no vertices", path=str(path))
    return mesh


def export_mesh_ply(mesh: TriangleMesh, path: str | Path) -> None:
    try:
        mesh.to_trimesh().export(str(path), file_type="ply", encoding="ascii")
    except OSError as e:
        raise IOFailure(f"cannot write mesh file: {e}", path=str(path)) from e


def look_at_transform(eye, focus, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera pose at ``eye`` with +z toward ``focus``, +x right and +y down in the image."""
    eye = np.asarray(eye, dtype=float)
    z = unit(np.asarray(focus, dtype=float) - eye)
    x = np.cross(z, np.asarray(up, dtype=float))
    if np.linalg.norm(x) < 1e-9:
        x = orthonormal_basis(z)[0]
    x = unit(x)
    y = np.cross(z, x)
    return make_transform(np.column_stack([x, y, z]), eye)
