"""
Scene layouts: sampling, validation, affordance selection, completion with
extra seating, seat anchors and human/robot placement.

Rooms span [0, width] x [0, depth] with the floor at z = 0. Furniture poses
give the centre of the piece and a yaw about z; walls are 10 cm thick boxes
just outside the room.
"""

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from pydantic import ValidationError
from scipy.spatial.transform import Rotation

from .body import HumanModel, PosedHuman, pose_human
from .collision import Box, collide
from .errors import (
    EmptyMesh,
    LayoutInfeasible,
    MalformedResponse,
    NoAffordance,
    NoFreeSpace,
    PlacementCollision,
    RobotPlacementFailed,
    UnsupportedPosture,
)
from .geometry import TriangleMesh, box_mesh, invert_transform, load_mesh_file, look_at_transform, pose_xyz_yaw
from .logger import get_logger, log_execution_time
from .motion import GroundingContext, MotionProgram, eval_program
from .providers import _locate_block, request_structured
from .robot import RobotModel
from .schemas import (
    BasePose,
    BoxGeometry,
    FurnitureEntry,
    FurniturePose,
    ProviderConfig,
    RandomizationRanges,
    RootPose,
    Room,
    ScenarioSpec,
    SceneLayout,
)
from .seeding import SplitMix64, derive_seed

logger = get_logger(__name__)

WALL_THICKNESS = 0.10
OVERLAP_TOLERANCE = 1e-3
LAYOUT_ATTEMPTS = 200
ROOM_SIZE_RANGE = (3.5, 6.0)
ROOM_HEIGHT = 2.7

ANCHOR_BAND = 0.02
SEATING_TOLERANCE = 0.005
ROBOT_ACCESS_MARGIN = 0.8
LEG_ROOM = 0.6
ACCESS_GAP = 0.25
GRID_STEP = 0.05
OCCUPANCY_RESOLUTION = 0.02
MAX_COMPLETION_CHAIRS = 3

COMPLETION_CHAIR = (0.5, 0.5, 0.45)
DEFAULT_EXTENTS = (0.6, 0.6, 0.6)
CATEGORY_EXTENTS = {
    "chair": (0.5, 0.5, 0.45),
    "stool": (0.4, 0.4, 0.45),
    "bench": (0.45, 1.4, 0.45),
    "couch": (0.9, 2.0, 0.45),
    "sofa": (0.9, 2.0, 0.45),
    "bed": (2.0, 1.6, 0.5),
    "table": (1.2, 0.8, 0.75),
    "desk": (0.6, 1.2, 0.75),
    "lamp": (0.4, 0.4, 1.6),
    "wardrobe": (0.6, 1.2, 2.0),
}
DISTRACTORS = {
    "living_room": ("table", "lamp"),
    "bedroom": ("wardrobe", "desk", "lamp"),
    "study": ("desk", "lamp"),
    "bathroom": ("stool",),
    "kitchen": ("table",),
}

AFFORDANCES = {
    "sitting": ("chair", "sofa", "couch", "stool", "bench"),
    "lying": ("bed", "sofa", "couch"),
    "standing": (),
}
SEATED_SUPPORT_PARTS = ("torso", "left_thigh", "right_thigh")
STANDING_SUPPORT_PARTS = ("left_lower_leg", "right_lower_leg")

OCCUPANCY_COLORS = {
    "free": (255, 255, 255),
    "seating": (200, 60, 60),
    "furniture": (64, 64, 64),
}

LAYOUT_SYSTEM_PROMPT = """
You lay out furniture in a rectangular room for a home-care scenario.
Coordinates are metres, x along the room width and y along its depth, with
the origin at a room corner. Poses are the centre of each piece and a yaw in
radians. End your answer with exactly one fenced block:
```json
{
    "room": {"width": 4.0, "depth": 4.0, "height": 2.7, "type": "living_room"},
    "furniture": [
        {"id": "chair_0", "category": "chair",
         "geometry": {"kind": "box", "extents": [0.5, 0.5, 0.45]},
         "pose": {"position": [2.0, 2.0, 0.225], "yaw": 0.0},
         "forward_axis": [1.0, 0.0, 0.0]}
    ]
}
```
"""

COMPLETION_SYSTEM_PROMPT = """
The image is a top-down occupancy map of a room: 1 pixel is 2 cm, the top-left
pixel is the room corner at x = 0, y = 0, columns grow along x and rows along y.
White is free floor, red is seating and grey is other furniture. Propose where
to put one more chair (0.5 x 0.5 m) that a person can sit on and a mobile robot
can reach from the side. Answer with one fenced block:
```json
{"x": 1.0, "y": 1.0, "yaw": 0.0}
```
"""


# Geometry of layout entries

def furniture_transform(entry: FurnitureEntry) -> np.ndarray:
    return pose_xyz_yaw(entry.pose.position, entry.pose.yaw)


def local_mesh(entry: FurnitureEntry) -> TriangleMesh:
    if entry.geometry.kind == "box":
        return box_mesh(entry.geometry.extents)
    return load_mesh_file(entry.geometry.path)


def furniture_mesh(entry: FurnitureEntry) -> TriangleMesh:
    return local_mesh(entry).transformed(furniture_transform(entry))


def local_bounds(entry: FurnitureEntry) -> np.ndarray:
    if entry.geometry.kind == "box":
        half = np.asarray(entry.geometry.extents, dtype=float) / 2.0
        return np.stack([-half, half])
    return local_mesh(entry).bounds()


def furniture_box(entry: FurnitureEntry) -> Box:
    """Collision box; mesh furniture uses its local axis-aligned bounds."""
    lo, hi = local_bounds(entry)
    transform = furniture_transform(entry)
    center = transform[:3, :3] @ ((lo + hi) / 2.0) + transform[:3, 3]
    box_transform = transform.copy()
    box_transform[:3, 3] = center
    return Box(box_transform, hi - lo, tag=entry.id)


def wall_boxes(room: Room) -> list[Box]:
    t, w, d, h = WALL_THICKNESS, room.width, room.depth, room.height
    walls = (
        ("wall_south", (w / 2.0, -t / 2.0, h / 2.0), (w + 2 * t, t, h)),
        ("wall_north", (w / 2.0, d + t / 2.0, h / 2.0), (w + 2 * t, t, h)),
        ("wall_west", (-t / 2.0, d / 2.0, h / 2.0), (t, d, h)),
        ("wall_east", (w + t / 2.0, d / 2.0, h / 2.0), (t, d, h)),
    )
    return [Box(pose_xyz_yaw(center, 0.0), np.array(extents), tag=name) for name, center, extents in walls]


def floor_box(room: Room) -> Box:
    return Box(pose_xyz_yaw((room.width / 2.0, room.depth / 2.0, -0.01), 0.0), np.array([room.width, room.depth, 0.02]), tag="floor")


def obstacle_boxes(layout: SceneLayout, exclude: Sequence[str] = ()) -> list[Box]:
    boxes = [furniture_box(entry) for entry in layout.furniture if entry.id not in exclude]
    return boxes + wall_boxes(layout.room)


def footprint_corners(center_xy, half_xy, yaw: float) -> np.ndarray:
    """Corners of an oriented rectangle, shape (4, 2)."""
    c, s = math.cos(yaw), math.sin(yaw)
    rotation = np.array([[c, -s], [s, c]])
    signs = np.array([(-1, -1), (1, -1), (1, 1), (-1, 1)], dtype=float)
    return np.asarray(center_xy, dtype=float) + (signs * half_xy) @ rotation.T


def entry_footprint(entry: FurnitureEntry) -> np.ndarray:
    box = furniture_box(entry)
    yaw = math.atan2(box.transform[1, 0], box.transform[0, 0])
    return footprint_corners(box.transform[:2, 3], box.extents[:2] / 2.0, yaw)


def _edge_axes(corners: np.ndarray) -> np.ndarray:
    edges = np.stack([corners[..., 1, :] - corners[..., 0, :], corners[..., 3, :] - corners[..., 0, :]], axis=-2)
    return edges / np.linalg.norm(edges, axis=-1, keepdims=True)


def footprints_overlap(a: np.ndarray, b: np.ndarray, tolerance: float = OVERLAP_TOLERANCE) -> np.ndarray:
    """
    Separating-axis test between rectangles. ``a`` is (..., 4, 2) and ``b`` is
    (4, 2); rectangles overlap when every axis shows more than ``tolerance``
    of interpenetration.
    """
    a = np.asarray(a, dtype=float)
    b = np.broadcast_to(np.asarray(b, dtype=float), a.shape)
    axes = np.concatenate([_edge_axes(a), _edge_axes(b)], axis=-2)  # (..., 4, 2)
    proj_a = np.einsum("...ck,...ak->...ac", a, axes)
    proj_b = np.einsum("...ck,...ak->...ac", b, axes)
    depth = np.minimum(proj_a.max(-1), proj_b.max(-1)) - np.maximum(proj_a.min(-1), proj_b.min(-1))
    return np.all(depth > tolerance, axis=-1)


def inside_room(corners: np.ndarray, room: Room, tolerance: float = OVERLAP_TOLERANCE) -> np.ndarray:
    corners = np.asarray(corners, dtype=float)
    return np.all(
        (corners[..., 0] >= -tolerance)
        & (corners[..., 0] <= room.width + tolerance)
        & (corners[..., 1] >= -tolerance)
        & (corners[..., 1] <= room.depth + tolerance),
        axis=-1,
    )


def validate_layout(layout: SceneLayout) -> SceneLayout:
    """Every piece inside the room and no two footprints overlapping beyond 1 mm."""
    footprints = [entry_footprint(entry) for entry in layout.furniture]
    for entry, corners in zip(layout.furniture, footprints):
        if not inside_room(corners, layout.room):
            raise LayoutInfeasible(f"{entry.id} is outside the room", offending=[entry.id])
    for i in range(len(footprints)):
        for j in range(i + 1, len(footprints)):
            if footprints_overlap(footprints[i], footprints[j]):
                pair = [layout.furniture[i].id, layout.furniture[j].id]
                raise LayoutInfeasible(f"{pair[0]} overlaps {pair[1]}", offending=pair)
    return layout


# Layout sources

def category_extents(category: str) -> tuple[float, float, float]:
    return CATEGORY_EXTENTS.get(category, DEFAULT_EXTENTS)


def make_box_entry(entry_id: str, category: str, x: float, y: float, yaw: float, extents=None) -> FurnitureEntry:
    extents = tuple(float(e) for e in (extents or category_extents(category)))
    return FurnitureEntry(
        id=entry_id,
        category=category,
        geometry=BoxGeometry(extents=extents),
        pose=FurniturePose(position=(float(x), float(y), extents[2] / 2.0), yaw=float(yaw)),
        forward_axis=(1.0, 0.0, 0.0),
    )


def _sample_procedural(spec: ScenarioSpec, seed: int) -> SceneLayout:
    rng = np.random.default_rng(derive_seed(seed, f"layout:{spec.room_type}"))
    distractor_table = DISTRACTORS.get(spec.room_type, ("table",))
    for attempt in range(LAYOUT_ATTEMPTS):
        width, depth = rng.uniform(*ROOM_SIZE_RANGE, size=2)
        room = Room(width=round(float(width), 3), depth=round(float(depth), 3), height=ROOM_HEIGHT, type=spec.room_type)
        count = int(rng.integers(1, 3))
        categories = list(spec.required_furniture) + [str(c) for c in rng.choice(distractor_table, size=count)]

        placed: list[FurnitureEntry] = []
        footprints: list[np.ndarray] = []
        for index, category in enumerate(categories):
            extents = category_extents(category)
            quarter_turns = int(rng.integers(4))
            yaw = quarter_turns * math.pi / 2.0
            half = np.array(extents[:2]) / 2.0
            if quarter_turns % 2:
                half = half[::-1]
            if 2 * half[0] > room.width or 2 * half[1] > room.depth:
                break
            x = float(rng.uniform(half[0], room.width - half[0]))
            y = float(rng.uniform(half[1], room.depth - half[1]))
            entry = make_box_entry(f"{category}_{index}", category, round(x, 3), round(y, 3), yaw)
            corners = entry_footprint(entry)
            if any(footprints_overlap(corners, other) for other in footprints) or not inside_room(corners, room):
                break
            placed.append(entry)
            footprints.append(corners)
        else:
            logger.debug(f"Layout sampled after {attempt + 1} attempts")
            return SceneLayout(room=room, furniture=placed, provenance="procedural")
    raise LayoutInfeasible(f"no collision-free arrangement in {LAYOUT_ATTEMPTS} attempts", attempts=LAYOUT_ATTEMPTS)


def parse_layout(raw: str) -> SceneLayout:
    block, _ = _locate_block(raw)
    try:
        data = json.loads(block)
        data.setdefault("provenance", "provider")
        return validate_layout(SceneLayout.model_validate(data))
    except (json.JSONDecodeError, ValidationError, AttributeError) as e:
        raise MalformedResponse(f"invalid layout payload: {e}") from e


@log_execution_time()
def sample_layout(spec: ScenarioSpec, seed: int, provider: Optional[ProviderConfig] = None, **kwargs) -> SceneLayout:
    """Room and furniture for a scenario; provider layouts are parsed and validated."""
    if provider is not None and provider.kind == "http":
        prompt = f"{spec.environment_description}\nRequired furniture: {', '.join(spec.required_furniture) or 'none'}"
        return request_structured(provider, LAYOUT_SYSTEM_PROMPT, prompt, parse_layout, **kwargs)
    return _sample_procedural(spec, seed)


def layout_to_json(layout: SceneLayout) -> str:
    return json.dumps(layout.model_dump(mode="json"), indent=2) + "\n"


def load_layout(path: str | Path) -> SceneLayout:
    return validate_layout(SceneLayout.model_validate_json(Path(path).read_text(encoding="utf-8")))


# Affordances and access

def floor_entry(room: Room) -> FurnitureEntry:
    return FurnitureEntry(
        id="floor",
        category="floor",
        geometry=BoxGeometry(extents=(room.width, room.depth, 0.02)),
        pose=FurniturePose(position=(room.width / 2.0, room.depth / 2.0, -0.01), yaw=0.0),
    )


def select_affordance_furniture(layout: SceneLayout, posture: str) -> FurnitureEntry:
    if posture == "standing":
        return floor_entry(layout.room)
    for category in AFFORDANCES[posture]:
        for entry in layout.furniture:
            if entry.category == category:
                return entry
    raise NoAffordance(f"no furniture affords {posture}", posture=posture)


def access_region(entry: FurnitureEntry) -> np.ndarray:
    """
    Footprint, in world coordinates, that must stay clear around a seat: leg room
    in front and an 0.8 m robot lane on the occupant's left (+y in the seat frame).
    """
    lo, hi = local_bounds(entry)
    local_lo = np.array([lo[0], lo[1]])
    local_hi = np.array([hi[0] + LEG_ROOM, hi[1] + ACCESS_GAP + ROBOT_ACCESS_MARGIN])
    transform = furniture_transform(entry)
    center = transform[:2, :2] @ ((local_lo + local_hi) / 2.0) + transform[:2, 3]
    return footprint_corners(center, (local_hi - local_lo) / 2.0, entry.pose.yaw)


def robot_lane(entry: FurnitureEntry) -> np.ndarray:
    lo, hi = local_bounds(entry)
    local_lo = np.array([lo[0], hi[1] + ACCESS_GAP])
    local_hi = np.array([hi[0] + LEG_ROOM, hi[1] + ACCESS_GAP + ROBOT_ACCESS_MARGIN])
    transform = furniture_transform(entry)
    center = transform[:2, :2] @ ((local_lo + local_hi) / 2.0) + transform[:2, 3]
    return footprint_corners(center, (local_hi - local_lo) / 2.0, entry.pose.yaw)


def is_accessible(layout: SceneLayout, entry: FurnitureEntry) -> bool:
    region = access_region(entry)
    if not inside_room(region, layout.room):
        return False
    return not any(
        footprints_overlap(region, entry_footprint(other)) for other in layout.furniture if other.id != entry.id
    )


# Scene completion

def render_occupancy(layout: SceneLayout, resolution: float = OCCUPANCY_RESOLUTION) -> Image.Image:
    """Top-down occupancy map; pixel (row j, column i) covers the cell at x = i*res, y = j*res."""
    columns = max(1, int(math.ceil(layout.room.width / resolution)))
    rows = max(1, int(math.ceil(layout.room.depth / resolution)))
    xs = (np.arange(columns) + 0.5) * resolution
    ys = (np.arange(rows) + 0.5) * resolution
    grid = np.stack(np.meshgrid(xs, ys), axis=-1)  # (rows, columns, 2)
    pixels = np.empty((rows, columns, 3), dtype=np.uint8)
    pixels[:] = OCCUPANCY_COLORS["free"]
    seating = set(AFFORDANCES["sitting"]) | set(AFFORDANCES["lying"])
    for entry in layout.furniture:
        box = furniture_box(entry)
        local = np.einsum("ji,rcj->rci", box.transform[:2, :2], grid - box.transform[:2, 3])
        inside = np.all(np.abs(local) <= box.extents[:2] / 2.0, axis=-1)
        pixels[inside] = OCCUPANCY_COLORS["seating" if entry.category in seating else "furniture"]
    return Image.fromarray(pixels, mode="RGB")


def occupancy_png(layout: SceneLayout) -> bytes:
    buffer = io.BytesIO()
    render_occupancy(layout).save(buffer, format="PNG")
    return buffer.getvalue()


def _candidate_grid(room: Room) -> np.ndarray:
    """Chair centres on the 5 cm grid crossed with the four quarter-turn yaws, shape (N, 3)."""
    xs = np.arange(GRID_STEP, room.width, GRID_STEP)
    ys = np.arange(GRID_STEP, room.depth, GRID_STEP)
    yaws = np.arange(4) * (math.pi / 2.0)
    gx, gy, gyaw = np.meshgrid(xs, ys, yaws, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gyaw.ravel()], axis=1)


def _rectangles(centers: np.ndarray, yaws: np.ndarray, local_lo: np.ndarray, local_hi: np.ndarray) -> np.ndarray:
    c, s = np.cos(yaws), np.sin(yaws)
    rotations = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)  # (N, 2, 2)
    offset = np.einsum("nij,j->ni", rotations, (local_lo + local_hi) / 2.0)
    signs = np.array([(-1, -1), (1, -1), (1, 1), (-1, 1)], dtype=float)
    corners = signs * ((local_hi - local_lo) / 2.0)
    return centers[:, None, :] + offset[:, None, :] + np.einsum("nij,cj->nci", rotations, corners)


def free_candidates(layout: SceneLayout, candidates: np.ndarray, extents=COMPLETION_CHAIR) -> np.ndarray:
    """Mask of (x, y, yaw) chair poses whose footprint and access region are free and inside the room."""
    half = np.array(extents[:2]) / 2.0
    chairs = _rectangles(candidates[:, :2], candidates[:, 2], -half, half)
    regions = _rectangles(
        candidates[:, :2],
        candidates[:, 2],
        -half,
        np.array([half[0] + LEG_ROOM, half[1] + ACCESS_GAP + ROBOT_ACCESS_MARGIN]),
    )
    valid = inside_room(chairs, layout.room) & inside_room(regions, layout.room)
    for entry in layout.furniture:
        if not valid.any():
            break
        other = entry_footprint(entry)
        valid &= ~footprints_overlap(regions, other)
        valid &= ~footprints_overlap(chairs, other)
    return valid


def _insert_chair(layout: SceneLayout, x: float, y: float, yaw: float) -> SceneLayout:
    index = sum(1 for entry in layout.furniture if entry.id.startswith("completion_chair_"))
    chair = make_box_entry(f"completion_chair_{index}", "chair", x, y, yaw, COMPLETION_CHAIR)
    furniture = list(layout.furniture) + [chair]
    return SceneLayout(room=layout.room, furniture=furniture, provenance="completion-augmented")


def _parse_completion(raw: str) -> tuple[float, float, float]:
    block, _ = _locate_block(raw)
    try:
        data = json.loads(block)
        return float(data["x"]), float(data["y"]), float(data.get("yaw", 0.0))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise MalformedResponse(f"invalid completion payload: {e}") from e


def _provider_completion(layout: SceneLayout, spec: ScenarioSpec, provider: ProviderConfig, **kwargs) -> Optional[SceneLayout]:
    x, y, yaw = request_structured(
        provider, COMPLETION_SYSTEM_PROMPT, spec.environment_description, _parse_completion, occupancy_png(layout), **kwargs
    )
    proposal = np.array([[x, y, yaw]])
    if free_candidates(layout, proposal)[0]:
        return validate_layout(_insert_chair(layout, x, y, yaw))
    logger.warning(f"Provider proposed an occupied chair position ({x:.2f}, {y:.2f}); scanning the grid instead")
    return None


@log_execution_time()
def complete_scene(
    layout: SceneLayout, spec: ScenarioSpec, provider: Optional[ProviderConfig], seed: int, **kwargs
) -> SceneLayout:
    """Insert one box chair with leg room and a robot lane, validated against the existing furniture."""
    if provider is not None and provider.kind == "http":
        completed = _provider_completion(layout, spec, provider, **kwargs)
        if completed is not None:
            return completed

    candidates = _candidate_grid(layout.room)
    rng = np.random.default_rng(derive_seed(seed, "completion"))
    origin = rng.uniform((0.0, 0.0), (layout.room.width, layout.room.depth))
    order = np.argsort(np.linalg.norm(candidates[:, :2] - origin, axis=1), kind="stable")
    valid = free_candidates(layout, candidates[order])
    hits = np.flatnonzero(valid)
    if hits.size == 0:
        raise NoFreeSpace("no free floor for a chair with robot access", candidates=int(len(candidates)))
    x, y, yaw = candidates[order[hits[0]]]
    completed = _insert_chair(layout, round(float(x), 3), round(float(y), 3), float(yaw))
    validate_layout(completed)
    chair = completed.furniture[-1]
    logger.info(f"Inserted {chair.id} at ({chair.pose.position[0]:.2f}, {chair.pose.position[1]:.2f})")
    return completed


def placement_pool(
    layout: SceneLayout,
    spec: ScenarioSpec,
    provider: Optional[ProviderConfig],
    seed: int,
    size: int = MAX_COMPLETION_CHAIRS,
    **kwargs,
) -> tuple[SceneLayout, list[FurnitureEntry]]:
    """Accessible supports for the scenario posture, topped up with up to three completion chairs."""
    if spec.posture == "standing":
        return layout, [floor_entry(layout.room)]
    pool = [
        entry
        for category in AFFORDANCES[spec.posture]
        for entry in layout.furniture
        if entry.category == category and is_accessible(layout, entry)
    ]
    inserted = 0
    while len(pool) < size and inserted < MAX_COMPLETION_CHAIRS:
        try:
            layout = complete_scene(layout, spec, provider, derive_seed(seed, f"completion:{inserted}"), **kwargs)
        except NoFreeSpace:
            if pool:
                break
            raise
        pool.append(layout.furniture[-1])
        inserted += 1
    return layout, pool[:size]


# Anchors and human placement

def seat_anchor_from_vertices(vertices: np.ndarray, forward: np.ndarray, band: float = ANCHOR_BAND) -> np.ndarray:
    """Highest vertex within ``band`` of the furthest projection on ``forward``; ties go to the lowest index."""
    vertices = np.asarray(vertices, dtype=float)
    if len(vertices) == 0:
        raise EmptyMesh("furniture mesh has no vertices")
    projection = vertices @ np.asarray(forward, dtype=float)
    in_band = np.flatnonzero(projection >= projection.max() - band)
    heights = vertices[in_band, 2]
    top = in_band[heights >= heights.max() - 1e-9]
    return vertices[top.min()].copy()


def forward_world(entry: FurnitureEntry) -> np.ndarray:
    return furniture_transform(entry)[:3, :3] @ np.asarray(entry.forward_axis, dtype=float)


def compute_seat_anchor(entry: FurnitureEntry, posture: str = "sitting") -> np.ndarray:
    if posture != "sitting":
        raise UnsupportedPosture(f"no anchor rule for posture {posture}", posture=posture)
    return seat_anchor_from_vertices(furniture_mesh(entry).vertices, forward_world(entry))


@dataclass
class PlacementResult:
    human_root_pose: RootPose
    anchor_point: np.ndarray
    support_furniture_id: str
    posed: PosedHuman
    robot: Optional["RobotPlacement"] = None
    randomization_applied: dict = field(default_factory=dict)

    @property
    def robot_base_pose(self) -> Optional[np.ndarray]:
        return None if self.robot is None else self.robot.base_pose


def _support_parts(entry: FurnitureEntry) -> tuple[str, ...]:
    return STANDING_SUPPORT_PARTS if entry.id == "floor" else SEATED_SUPPORT_PARTS


def _lowest_point(posed: PosedHuman, labels: Sequence[str]) -> float:
    return float(min(posed.world_mesh(label).vertices[:, 2].min() for label in labels))


@log_execution_time()
def place_human(
    layout: SceneLayout, entry: FurnitureEntry, human: HumanModel, theta, anchor
) -> PlacementResult:
    """
    Face the human along the support's forward axis with the pelvis over the
    anchor, then lift the body until its support region rests on the anchor.
    """
    anchor = np.asarray(anchor, dtype=float)
    forward = forward_world(entry)
    yaw = math.atan2(forward[1], forward[0])
    center = np.asarray(entry.pose.position, dtype=float)
    horizontal = np.array([forward[0], forward[1], 0.0])
    horizontal /= np.linalg.norm(horizontal)
    pelvis_xy = center[:2] + horizontal[:2] * float(np.dot((anchor - center)[:2], horizontal[:2]))

    support = _support_parts(entry)
    trial = pose_human(human, theta, RootPose(position=(float(pelvis_xy[0]), float(pelvis_xy[1]), 0.0), yaw=yaw))
    root_z = float(anchor[2]) - _lowest_point(trial, support)
    root = RootPose(position=(float(pelvis_xy[0]), float(pelvis_xy[1]), root_z), yaw=yaw)
    posed = pose_human(human, theta, root)

    body = posed.collision_shapes(head_as_capsule=True)
    if entry.id != "floor":
        _, support_distance = collide(body, [furniture_box(entry)])
        if support_distance < -SEATING_TOLERANCE:
            raise PlacementCollision(
                f"human sinks {-support_distance * 1000:.1f} mm into {entry.id}", furniture=entry.id
            )
    others = obstacle_boxes(layout, exclude=(entry.id,))
    hit, distance = collide(body, others)
    if hit:
        matrix_hits = [box.tag for box in others if collide(body, [box])[0]]
        raise PlacementCollision(
            f"human intersects {', '.join(matrix_hits)}", offending=matrix_hits, distance=round(distance, 4)
        )
    logger.debug(f"Placed human on {entry.id} at root {root.position} yaw {yaw:.3f}")
    return PlacementResult(root, anchor, entry.id, posed)


# Robot placement

CAMERA_MOUNT = (0.0, 0.0, 1.2)


@dataclass
class RobotPlacement:
    base_pose: np.ndarray  # (x, y, yaw) after randomization
    nominal_base: np.ndarray  # (x, y, yaw) straight from the placement program
    q_init: np.ndarray
    camera_in_base: np.ndarray
    camera_world: np.ndarray
    randomization_applied: dict
    resamples: int = 0


def nominal_base_pose(base: BasePose) -> np.ndarray:
    """(x, y, yaw) for a base pose whose arm, extending along base -y, faces the focus point."""
    position = np.asarray(base.position, dtype=float)
    focus = np.asarray(base.focus, dtype=float)
    direction = focus[:2] - position[:2]
    yaw = math.atan2(direction[1], direction[0]) + math.pi / 2.0
    yaw = math.atan2(math.sin(yaw), math.cos(yaw))
    return np.array([position[0], position[1], yaw])


def _jitter(rng: SplitMix64, half_width: float, count: int) -> np.ndarray:
    return np.array([rng.uniform(-half_width, half_width) for _ in range(count)])


@log_execution_time()
def place_robot(
    layout: SceneLayout,
    placement: PlacementResult,
    program: MotionProgram,
    model: RobotModel,
    randomization_seed: int,
    ranges: RandomizationRanges = RandomizationRanges(),
) -> RobotPlacement:
    """
    Evaluate the placement program against the seated human, mount the camera
    looking at the program's focus point and draw randomized base, camera and
    arm configurations until one clears the furniture, walls and human.
    """
    base = eval_program(program, GroundingContext(posed=placement.posed), randomization_seed)
    nominal = nominal_base_pose(base)
    nominal_pose = pose_xyz_yaw((nominal[0], nominal[1], 0.0), nominal[2])
    mount = nominal_pose[:3, :3] @ np.asarray(CAMERA_MOUNT) + nominal_pose[:3, 3]
    camera_nominal = invert_transform(nominal_pose) @ look_at_transform(mount, base.focus)

    obstacles = obstacle_boxes(layout) + placement.posed.collision_shapes(head_as_capsule=True)
    rng = SplitMix64(derive_seed(randomization_seed, "robot_placement"))
    arm = model.arm_dofs
    span = model.upper[arm] - model.lower[arm]
    for attempt in range(ranges.max_resamples):
        base_offset = _jitter(rng, ranges.base_position, 2)
        yaw_offset = rng.uniform(-math.radians(ranges.base_yaw_deg), math.radians(ranges.base_yaw_deg))
        camera_offset = _jitter(rng, ranges.camera_position, 3)
        camera_angles = _jitter(rng, math.radians(ranges.camera_orientation_deg), 3)
        arm_offset = np.array([rng.uniform(-1.0, 1.0) for _ in arm]) * ranges.arm_joint_fraction * span

        q = model.home.copy()
        if not model.base_locked:
            q[:2] = nominal[:2] + base_offset
            q[2] = nominal[2] + yaw_offset
        q[arm] = np.clip(model.home[arm] + arm_offset, model.lower[arm], model.upper[arm])

        hit, distance = collide(model.collision_shapes(q), obstacles)
        if hit:
            logger.debug(f"Robot placement sample {attempt} collides (distance {distance:.3f})")
            continue

        camera_in_base = camera_nominal.copy()
        camera_in_base[:3, 3] += camera_offset
        camera_in_base[:3, :3] = camera_in_base[:3, :3] @ Rotation.from_euler("xyz", camera_angles).as_matrix()
        base_pose = q[:3].copy()
        camera_world = pose_xyz_yaw((base_pose[0], base_pose[1], 0.0), base_pose[2]) @ camera_in_base
        applied = {
            "base_offset": [float(v) for v in base_offset],
            "base_yaw_offset": float(yaw_offset),
            "camera_offset": [float(v) for v in camera_offset],
            "camera_angles": [float(v) for v in camera_angles],
            "arm_offset": [float(v) for v in q[arm] - model.home[arm]],
        }
        logger.info(f"Placed robot at ({base_pose[0]:.2f}, {base_pose[1]:.2f}, {base_pose[2]:.2f}) after {attempt} resamples")
        return RobotPlacement(base_pose, nominal, q, camera_in_base, camera_world, applied, attempt)

    raise RobotPlacementFailed(
        f"no collision-free robot placement after {ranges.max_resamples} samples",
        nominal=[round(float(v), 3) for v in nominal],
    )
