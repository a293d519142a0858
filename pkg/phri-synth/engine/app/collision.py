"""
Analytic distance queries between capsules, oriented boxes and triangle meshes.

Distances are signed: negative values are penetration depths. Capsule-box
distance minimises the box signed-distance field along the capsule axis;
the field is convex along any line, so a golden-section search converges to
the minimum. A capsule wholly inside a closed mesh reports the depth of its
deepest axis sample; open meshes have no inside.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import open3d as o3d

from .geometry import TriangleMesh

COLLISION_TOLERANCE = 1e-6
_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_ITERATIONS = 40
INSIDE_SAMPLES = 9


@dataclass(frozen=True, eq=False)
class Capsule:
    start: np.ndarray
    end: np.ndarray
    radius: float
    tag: str = ""

    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        center = (self.start + self.end) / 2.0
        return center, float(np.linalg.norm(self.end - self.start) / 2.0 + self.radius)


@dataclass(frozen=True, eq=False)
class Box:
    """Oriented box; ``transform`` places the box centre, ``extents`` are full side lengths."""

    transform: np.ndarray
    extents: np.ndarray
    tag: str = ""

    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        return self.transform[:3, 3], float(np.linalg.norm(self.extents) / 2.0)


def _occupancy_scene(mesh: TriangleMesh) -> o3d.t.geometry.RaycastingScene:
    scene = o3d.t.geometry.RaycastingScene()
    scene.add_triangles(
        o3d.core.Tensor(mesh.vertices.astype(np.float32)), o3d.core.Tensor(np.asarray(mesh.faces, dtype=np.uint32))
    )
    return scene


@dataclass(frozen=True, eq=False)
class MeshShape:
    mesh: TriangleMesh
    tag: str = ""
    _sphere: tuple = field(default=None, repr=False)
    _closed: object = field(default=None, repr=False)

    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        if self._sphere is None:
            lo, hi = self.mesh.bounds()
            center = (lo + hi) / 2.0
            radius = float(np.linalg.norm(self.mesh.vertices - center, axis=1).max())
            object.__setattr__(self, "_sphere", (center, radius))
        return self._sphere

    def contains(self, points) -> np.ndarray:
        """Inside test against the closed surface; always false for meshes with open boundaries."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = self.mesh.bounds()
        within = np.all((points >= lo) & (points <= hi), axis=1)
        if not within.any():
            return within
        if self._closed is None:
            watertight = self.mesh.to_trimesh().is_watertight
            object.__setattr__(self, "_closed", _occupancy_scene(self.mesh) if watertight else False)
        if self._closed is False:
            return np.zeros(len(points), dtype=bool)
        occupied = self._closed.compute_occupancy(o3d.core.Tensor(points.astype(np.float32))).numpy()
        return within & (occupied > 0.5)


def sphere(center, radius: float, tag: str = "") -> Capsule:
    center = np.asarray(center, dtype=float)
    return Capsule(center, center.copy(), radius, tag)


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def segment_segment_distance(p1, q1, p2, q2) -> np.ndarray:
    """Closest distance between segments [p1, q1] and [p2, q2]; inputs broadcast over leading axes."""
    p1, q1, p2, q2 = (np.asarray(x, dtype=float) for x in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = _dot(d1, d1)
    e = _dot(d2, d2)
    f = _dot(d2, r)
    c = _dot(d1, r)
    b = _dot(d1, d2)
    eps = 1e-14
    safe_a = np.where(a > eps, a, 1.0)
    safe_e = np.where(e > eps, e, 1.0)
    denom = a * e - b * b
    safe_denom = np.where(denom > eps, denom, 1.0)

    s = np.where(denom > eps, np.clip((b * f - c * e) / safe_denom, 0.0, 1.0), 0.0)
    t = (b * s + f) / safe_e
    below, above = t < 0.0, t > 1.0
    t = np.clip(t, 0.0, 1.0)
    s = np.where(below, np.clip(-c / safe_a, 0.0, 1.0), np.where(above, np.clip((b - c) / safe_a, 0.0, 1.0), s))

    point_a = a <= eps
    point_b = e <= eps
    s = np.where(point_a, 0.0, s)
    t = np.where(point_a, np.clip(f / safe_e, 0.0, 1.0), t)
    s = np.where(point_b & ~point_a, np.clip(-c / safe_a, 0.0, 1.0), s)
    t = np.where(point_b, 0.0, t)

    closest_a = p1 + d1 * s[..., None]
    closest_b = p2 + d2 * t[..., None]
    return np.linalg.norm(closest_a - closest_b, axis=-1)


def point_segment_distance(points, a, b) -> np.ndarray:
    points, a, b = (np.asarray(x, dtype=float) for x in (points, a, b))
    ab = b - a
    denom = _dot(ab, ab)
    t = np.clip(_dot(points - a, ab) / np.where(denom > 1e-14, denom, 1.0), 0.0, 1.0)
    return np.linalg.norm(points - (a + ab * t[..., None]), axis=-1)


def _inside_triangle(x, v0, v1, v2, normal) -> np.ndarray:
    return (
        (_dot(np.cross(v1 - v0, x - v0), normal) >= 0.0)
        & (_dot(np.cross(v2 - v1, x - v1), normal) >= 0.0)
        & (_dot(np.cross(v0 - v2, x - v2), normal) >= 0.0)
    )


def point_triangle_distance(points, triangles) -> np.ndarray:
    """Distance from points (..., 3) to triangles (..., 3, 3), broadcasting leading axes."""
    points = np.asarray(points, dtype=float)
    triangles = np.asarray(triangles, dtype=float)
    v0, v1, v2 = triangles[..., 0, :], triangles[..., 1, :], triangles[..., 2, :]
    normal = np.cross(v1 - v0, v2 - v0)
    length = np.linalg.norm(normal, axis=-1)
    unit_normal = normal / np.where(length > 1e-14, length, 1.0)[..., None]
    height = _dot(points - v0, unit_normal)
    projected = points - unit_normal * height[..., None]
    inside = (length > 1e-14) & _inside_triangle(projected, v0, v1, v2, normal)
    edges = np.minimum(
        np.minimum(point_segment_distance(points, v0, v1), point_segment_distance(points, v1, v2)),
        point_segment_distance(points, v2, v0),
    )
    return np.where(inside, np.abs(height), edges)


def segment_triangle_distance(p, q, triangles) -> np.ndarray:
    """Distance between segments [p, q] and triangles, broadcasting leading axes; zero when they cross."""
    p, q, triangles = (np.asarray(x, dtype=float) for x in (p, q, triangles))
    v0, v1, v2 = triangles[..., 0, :], triangles[..., 1, :], triangles[..., 2, :]
    best = np.minimum(point_triangle_distance(p, triangles), point_triangle_distance(q, triangles))
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        best = np.minimum(best, segment_segment_distance(p, q, a, b))
    normal = np.cross(v1 - v0, v2 - v0)
    dp = _dot(p - v0, normal)
    dq = _dot(q - v0, normal)
    crossing = (dp * dq <= 0.0) & (dp != dq)
    fraction = np.where(crossing, dp / np.where(dp != dq, dp - dq, 1.0), 0.0)
    hit = p + (q - p) * fraction[..., None]
    inside = crossing & _inside_triangle(hit, v0, v1, v2, normal)
    return np.where(inside, 0.0, best)


def box_signed_distance(points_local: np.ndarray, half: np.ndarray) -> np.ndarray:
    excess = np.abs(points_local) - half
    outside = np.linalg.norm(np.maximum(excess, 0.0), axis=-1)
    inside = np.minimum(excess.max(axis=-1), 0.0)
    return outside + inside


def segment_box_distance(p, q, rotations, centers, halves) -> np.ndarray:
    """Minimum box signed distance along segments; all inputs are paired arrays of length P."""
    pl = np.einsum("pji,pj->pi", rotations, p - centers)
    ql = np.einsum("pji,pj->pi", rotations, q - centers)
    direction = ql - pl

    def field_at(t):
        return box_signed_distance(pl + direction * t[:, None], halves)

    count = len(pl)
    lo = np.zeros(count)
    hi = np.ones(count)
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = field_at(c), field_at(d)
    for _ in range(_GOLDEN_ITERATIONS):
        left = fc < fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        new_c = np.where(left, hi - _INV_PHI * (hi - lo), d)
        new_d = np.where(left, c, lo + _INV_PHI * (hi - lo))
        probe = field_at(np.where(left, new_c, new_d))
        fc, fd = np.where(left, probe, fd), np.where(left, fc, probe)
        c, d = new_c, new_d
    ends = np.minimum(field_at(np.zeros(count)), field_at(np.ones(count)))
    return np.minimum(np.minimum(fc, fd), ends)


def _capsule_arrays(capsules: Sequence[Capsule]):
    starts = np.array([c.start for c in capsules], dtype=float).reshape(-1, 3)
    ends = np.array([c.end for c in capsules], dtype=float).reshape(-1, 3)
    radii = np.array([c.radius for c in capsules], dtype=float)
    return starts, ends, radii


def _capsule_mesh_distance(capsule: Capsule, shape: MeshShape) -> float:
    triangles = shape.mesh.triangles()
    distance = float(segment_triangle_distance(capsule.start[None], capsule.end[None], triangles).min())
    if distance > 0.0 and shape.contains(capsule.start)[0]:
        # A segment that never meets the surface lies wholly inside; depth is its deepest sample.
        samples = capsule.start + np.linspace(0.0, 1.0, INSIDE_SAMPLES)[:, None] * (capsule.end - capsule.start)
        depth = point_triangle_distance(samples[:, None], triangles[None]).min(axis=1).max()
        return float(-depth - capsule.radius)
    return distance - capsule.radius


def _bound(a, b) -> float:
    center_a, radius_a = a.bounding_sphere()
    center_b, radius_b = b.bounding_sphere()
    return float(np.linalg.norm(center_a - center_b) - radius_a - radius_b)


def distance_matrix(shapes_a: Sequence, shapes_b: Sequence, cutoff: float = np.inf) -> np.ndarray:
    """
    Signed distances between every pair of shapes.

    At least one shape of each pair must be a capsule. Pairs involving boxes or
    meshes whose bounding spheres are further apart than ``cutoff`` report that
    bounding-sphere lower bound instead of the exact distance.
    """
    result = np.full((len(shapes_a), len(shapes_b)), np.inf)
    a_caps = [i for i, s in enumerate(shapes_a) if isinstance(s, Capsule)]
    b_caps = [j for j, s in enumerate(shapes_b) if isinstance(s, Capsule)]

    if a_caps and b_caps:
        sa, ea, ra = _capsule_arrays([shapes_a[i] for i in a_caps])
        sb, eb, rb = _capsule_arrays([shapes_b[j] for j in b_caps])
        block = segment_segment_distance(sa[:, None], ea[:, None], sb[None], eb[None]) - ra[:, None] - rb[None]
        result[np.ix_(a_caps, b_caps)] = block

    box_pairs = []
    for i, a in enumerate(shapes_a):
        for j, b in enumerate(shapes_b):
            capsule_a, capsule_b = isinstance(a, Capsule), isinstance(b, Capsule)
            if capsule_a and capsule_b:
                continue
            if not (capsule_a or capsule_b):
                raise ValueError(f"unsupported shape pair: {type(a).__name__}-{type(b).__name__}")
            capsule, other = (a, b) if capsule_a else (b, a)
            lower = _bound(capsule, other)
            if lower > cutoff:
                result[i, j] = lower
            elif isinstance(other, Box):
                box_pairs.append((i, j, capsule, other))
            else:
                result[i, j] = _capsule_mesh_distance(capsule, other)

    if box_pairs:
        p = np.array([pair[2].start for pair in box_pairs], dtype=float)
        q = np.array([pair[2].end for pair in box_pairs], dtype=float)
        radii = np.array([pair[2].radius for pair in box_pairs])
        rotations = np.array([pair[3].transform[:3, :3] for pair in box_pairs])
        centers = np.array([pair[3].transform[:3, 3] for pair in box_pairs])
        halves = np.array([np.asarray(pair[3].extents, dtype=float) / 2.0 for pair in box_pairs])
        distances = segment_box_distance(p, q, rotations, centers, halves) - radii
        for (i, j, _, _), distance in zip(box_pairs, distances):
            result[i, j] = distance
    return result


def collide(shapes_a: Sequence, shapes_b: Sequence, cutoff: float = np.inf) -> tuple[bool, float]:
    """(True when any pair penetrates beyond tolerance, minimum signed distance)."""
    if not shapes_a or not shapes_b:
        return False, float("inf")
    distance = float(distance_matrix(shapes_a, shapes_b, cutoff).min())
    return distance < -COLLISION_TOLERANCE, distance
