"""
Joint-space RRT, straight-line Cartesian planning and compilation of
waypoint trajectories into one timed, annotated joint path.

Joint distances are measured in normalized units where 0.01 m of a
prismatic joint counts the same as 0.02 rad of a revolute one.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Sequence

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .collision import COLLISION_TOLERANCE, distance_matrix
from .errors import (
    ForbiddenContact,
    FurnitureCollision,
    IKNoConverge,
    InvalidStart,
    PlannerMisuse,
    RRTFailure,
)
from .geometry import pose_from_position_quat
from .logger import get_logger, log_execution_time
from .robot import ANGULAR_MAX_STEP, RobotModel, solve_ik, with_base_window
from .schemas import Trajectory
from .seeding import derive_seed

logger = get_logger(__name__)

CARTESIAN_STEP = 0.002
CARTESIAN_ANGLE_STEP = 0.01
CONTACT_PENETRATION = 0.005
CLEARANCE_MARGIN = 1e-3
CLEARANCE_CUTOFF = 0.5
MIN_STEP_TIME = 1e-3
SAMPLING_WINDOW = 1.0


# Paths and worlds

@dataclass
class JointPath:
    configurations: np.ndarray  # (T, dof)
    timestamps: np.ndarray  # (T,), strictly increasing
    waypoint_index: np.ndarray  # (T,) int
    contact: np.ndarray  # (T,) bool
    planner: list = field(default_factory=list)  # (T,) "start", "rrt" or "cartesian"

    def __len__(self) -> int:
        return len(self.configurations)

    @classmethod
    def single(cls, q: np.ndarray, time: float = 0.0, waypoint: int = 0, contact: bool = False, planner: str = "start") -> "JointPath":
        return cls(
            np.asarray(q, dtype=float)[None].copy(),
            np.array([time]),
            np.array([waypoint]),
            np.array([contact]),
            [planner],
        )

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])

    def annotate(self, waypoint: int, contact: bool, planner: str) -> "JointPath":
        count = len(self)
        return JointPath(
            self.configurations,
            self.timestamps,
            np.full(count, waypoint),
            np.full(count, contact),
            [planner] * count,
        )

    def extend(self, other: "JointPath") -> "JointPath":
        """Append ``other`` minus its first configuration, which must equal our last."""
        offset = self.timestamps[-1] - other.timestamps[0]
        return JointPath(
            np.concatenate([self.configurations, other.configurations[1:]]),
            np.concatenate([self.timestamps, other.timestamps[1:] + offset]),
            np.concatenate([self.waypoint_index, other.waypoint_index[1:]]),
            np.concatenate([self.contact, other.contact[1:]]),
            self.planner + other.planner[1:],
        )

    def to_csv(self, dof_names: Sequence[str]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["timestamp", *dof_names, "waypoint_index", "contact"])
        for t, q, index, contact in zip(self.timestamps, self.configurations, self.waypoint_index, self.contact):
            writer.writerow([f"{t:.6f}", *(f"{v:.9f}" for v in q), int(index), int(contact)])
        return buffer.getvalue()


@dataclass(frozen=True, eq=False)
class PlanningWorld:
    """Obstacles seen by the planners: furniture and walls as boxes, the human as tagged shapes."""

    furniture: tuple = ()
    human: tuple = ()
    allowed_parts: FrozenSet[str] = frozenset()
    inflate: Dict[str, float] = field(default_factory=dict)

    @property
    def obstacles(self) -> list:
        return list(self.furniture) + list(self.human)


@dataclass(frozen=True)
class StepClearance:
    furniture: float  # any robot link to furniture or walls
    link_human: float  # non-tool links to the human
    tool_allowed: float  # tool to the allowed parts
    tool_other: float  # tool to every other part


def step_clearance(model: RobotModel, q, world: PlanningWorld, cutoff: float = CLEARANCE_CUTOFF) -> StepClearance:
    shapes = model.collision_shapes(q, world.inflate)
    tool = np.array([shape.tag == model.tool_link for shape in shapes])
    furniture = human_links = tool_allowed = tool_other = math.inf
    if world.furniture:
        furniture = float(distance_matrix(shapes, world.furniture, cutoff).min())
    if world.human:
        matrix = distance_matrix(shapes, world.human, cutoff)
        allowed = np.array([shape.tag in world.allowed_parts for shape in world.human])
        if (~tool).any():
            human_links = float(matrix[~tool].min())
        if tool.any() and allowed.any():
            tool_allowed = float(matrix[np.ix_(tool, allowed)].min())
        if tool.any() and (~allowed).any():
            tool_other = float(matrix[np.ix_(tool, ~allowed)].min())
    return StepClearance(furniture, human_links, tool_allowed, tool_other)


def clearance(model: RobotModel, q, world: PlanningWorld, cutoff: float = CLEARANCE_CUTOFF) -> float:
    """Smallest distance from any robot capsule to any obstacle, the whole human included."""
    obstacles = world.obstacles
    if not obstacles:
        return math.inf
    return float(distance_matrix(model.collision_shapes(q, world.inflate), obstacles, cutoff).min())


def joint_weights(model: RobotModel) -> np.ndarray:
    return ANGULAR_MAX_STEP / model.max_step


def densify(model: RobotModel, configurations: Sequence[np.ndarray]) -> np.ndarray:
    """Insert linear sub-steps so adjacent configurations respect the per-joint max step."""
    dense = [np.asarray(configurations[0], dtype=float)]
    for q in configurations[1:]:
        q = np.asarray(q, dtype=float)
        steps = int(math.ceil(float(np.max(np.abs(q - dense[-1]) / model.max_step)) - 1e-9))
        if steps == 0:
            continue
        start = dense[-1]
        for k in range(1, steps + 1):
            dense.append(start + (q - start) * (k / steps))
    return np.array(dense)


def path_timestamps(
    model: RobotModel, configurations: np.ndarray, speed: float, mode: str = "tool_speed", start: float = 0.0
) -> np.ndarray:
    """Constant tool speed timing; ``joint_speed_cap`` also caps every joint at ``speed`` (rad/s or m/s)."""
    tool = np.array([model.tool_pose(q)[:3, 3] for q in configurations])
    dt = np.linalg.norm(np.diff(tool, axis=0), axis=1) / speed
    if mode == "joint_speed_cap":
        joint_dt = np.max(np.abs(np.diff(configurations, axis=0)), axis=1) / speed
        dt = np.maximum(dt, joint_dt)
    dt = np.maximum(dt, MIN_STEP_TIME)
    return start + np.concatenate([[0.0], np.cumsum(dt)])


# RRT

@dataclass(frozen=True)
class RRTParams:
    step: float = 0.1
    goal_bias: float = 0.1
    max_iters: int = 20000
    resolution: float = 0.02
    shortcuts: int = 100
    smooth: bool = True


class _EdgeChecker:
    """Conservative advancement along straight joint-space edges."""

    def __init__(self, model: RobotModel, world: PlanningWorld, resolution: float):
        self.model = model
        self.world = world
        self.weights = joint_weights(model)
        self.resolution = resolution
        self.checks = 0

    def valid(self, q) -> bool:
        self.checks += 1
        return clearance(self.model, q, self.world) >= CLEARANCE_MARGIN

    def edge_valid(self, a: np.ndarray, b: np.ndarray) -> bool:
        delta = b - a
        length = float(np.linalg.norm(delta * self.weights))
        if length == 0.0:
            return self.valid(a)
        rate = self.model.motion_bound(delta)
        t = 0.0
        while True:
            self.checks += 1
            distance = clearance(self.model, a + delta * t, self.world)
            if distance < CLEARANCE_MARGIN:
                return False
            if t >= 1.0:
                return True
            advance = (distance - CLEARANCE_MARGIN) / rate if rate > 0 else math.inf
            t = min(1.0, t + min(advance, self.resolution / length))


def _sampling_bounds(model: RobotModel, q_start: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lower = np.where(np.isfinite(model.lower), model.lower, q_start - SAMPLING_WINDOW)
    upper = np.where(np.isfinite(model.upper), model.upper, q_start + SAMPLING_WINDOW)
    return lower, upper


def _shortcut(path: list, checker: _EdgeChecker, rng: np.random.Generator, attempts: int) -> list:
    for _ in range(attempts):
        if len(path) < 3:
            break
        i, j = sorted(rng.choice(len(path), size=2, replace=False))
        if j - i < 2:
            continue
        if checker.edge_valid(path[i], path[j]):
            path = path[: i + 1] + path[j:]
    return path


@log_execution_time()
def rrt_plan(
    model: RobotModel,
    q_start,
    q_goal,
    world: PlanningWorld,
    params: RRTParams = RRTParams(),
    seed: int = 0,
    speed: float = 0.1,
    speed_mode: str = "tool_speed",
) -> JointPath:
    """Seeded joint-space RRT from ``q_start`` to ``q_goal`` avoiding furniture and the whole human."""
    q_start = np.asarray(q_start, dtype=float)
    q_goal = np.asarray(q_goal, dtype=float)
    checker = _EdgeChecker(model, world, params.resolution)
    if not checker.valid(q_start):
        raise InvalidStart("start configuration is in collision", clearance=round(clearance(model, q_start, world), 4))
    if not checker.valid(q_goal):
        raise RRTFailure("goal configuration is in collision", clearance=round(clearance(model, q_goal, world), 4))

    rng = np.random.default_rng(seed)
    weights = checker.weights
    if checker.edge_valid(q_start, q_goal):
        path = [q_start, q_goal]
    else:
        lower, upper = _sampling_bounds(model, q_start)
        nodes = np.empty((params.max_iters + 1, len(q_start)))
        parents = np.empty(params.max_iters + 1, dtype=int)
        nodes[0], parents[0] = q_start, -1
        count = 1
        reached = None
        for _ in range(params.max_iters):
            sample = q_goal if rng.random() < params.goal_bias else rng.uniform(lower, upper)
            distances = np.linalg.norm((nodes[:count] - sample) * weights, axis=1)
            nearest = int(np.argmin(distances))
            direction = sample - nodes[nearest]
            if distances[nearest] > params.step:
                direction *= params.step / distances[nearest]
            candidate = nodes[nearest] + direction
            if not checker.edge_valid(nodes[nearest], candidate):
                continue
            nodes[count], parents[count] = candidate, nearest
            count += 1
            if np.linalg.norm((q_goal - candidate) * weights) <= params.step and checker.edge_valid(candidate, q_goal):
                reached = count - 1
                break
        if reached is None:
            raise RRTFailure("RRT iteration budget exhausted", iterations=params.max_iters, nodes=count)
        path = [q_goal]
        index = reached
        while index >= 0:
            path.append(nodes[index].copy())
            index = parents[index]
        path.reverse()
        if params.smooth:
            path = _shortcut(path, checker, rng, params.shortcuts)

    configurations = densify(model, path)
    logger.debug(f"RRT path with {len(path)} vertices, {len(configurations)} steps, {checker.checks} clearance checks")
    count = len(configurations)
    return JointPath(
        configurations,
        path_timestamps(model, configurations, speed, speed_mode),
        np.zeros(count, dtype=int),
        np.zeros(count, dtype=bool),
        ["rrt"] * count,
    )


# Cartesian

def _check_step(model: RobotModel, q: np.ndarray, world: PlanningWorld, step: int) -> StepClearance:
    gap = step_clearance(model, q, world)
    if gap.furniture < -COLLISION_TOLERANCE:
        raise FurnitureCollision("robot collides with furniture", step=step, distance=round(gap.furniture, 4))
    if gap.link_human < -COLLISION_TOLERANCE:
        raise ForbiddenContact("a non-tool link touches the human", step=step, distance=round(gap.link_human, 4))
    if gap.tool_other < -COLLISION_TOLERANCE:
        raise ForbiddenContact("tool touches a part outside the allowed set", step=step, distance=round(gap.tool_other, 4))
    if gap.tool_allowed < -CONTACT_PENETRATION:
        raise ForbiddenContact("tool penetrates the allowed part beyond 5 mm", step=step, distance=round(gap.tool_allowed, 4))
    return gap


def interpolate_poses(pose_start: np.ndarray, pose_goal: np.ndarray) -> list[np.ndarray]:
    """Straight-line positions and slerped orientations at 2 mm / 0.01 rad resolution, both ends included."""
    offset = pose_goal[:3, 3] - pose_start[:3, 3]
    rotations = Rotation.from_matrix(np.stack([pose_start[:3, :3], pose_goal[:3, :3]]))
    angle = float((rotations[1] * rotations[0].inv()).magnitude())
    steps = int(max(math.ceil(np.linalg.norm(offset) / CARTESIAN_STEP), math.ceil(angle / CARTESIAN_ANGLE_STEP)))
    if steps == 0:
        return [pose_start]
    fractions = np.linspace(0.0, 1.0, steps + 1)
    orientations = Slerp([0.0, 1.0], rotations)(fractions).as_matrix()
    poses = []
    for fraction, rotation in zip(fractions, orientations):
        pose = np.eye(4)
        pose[:3, :3] = rotation
        pose[:3, 3] = pose_start[:3, 3] + offset * fraction
        poses.append(pose)
    return poses


@log_execution_time()
def cartesian_plan(
    model: RobotModel,
    pose_start: np.ndarray,
    pose_goal: np.ndarray,
    q_seed,
    speed: float,
    world: PlanningWorld = PlanningWorld(),
    strict: bool = True,
    speed_mode: str = "tool_speed",
) -> JointPath:
    """
    Follow the straight tool line from ``pose_start`` to ``pose_goal``, solving
    IK at every step from the previous solution. The tool may touch the
    world's allowed parts up to 5 mm deep; any other human contact or any
    furniture contact aborts unless ``strict`` is off.
    """
    q = np.asarray(q_seed, dtype=float)
    poses = interpolate_poses(np.asarray(pose_start, dtype=float), np.asarray(pose_goal, dtype=float))
    solutions = [q]
    for index, pose in enumerate(poses[1:], start=1):
        try:
            q = solve_ik(model, pose, q).q
        except IKNoConverge as exc:
            raise IKNoConverge(exc.message, step=index, **exc.details) from exc
        solutions.append(q)

    configurations = densify(model, solutions)
    if strict:
        for index, q in enumerate(configurations):
            _check_step(model, q, world, index)
    count = len(configurations)
    return JointPath(
        configurations,
        path_timestamps(model, configurations, speed, speed_mode),
        np.zeros(count, dtype=int),
        np.zeros(count, dtype=bool),
        ["cartesian"] * count,
    )


# Compilation

def check_planner_use(traj: Trajectory) -> None:
    for index, waypoint in enumerate(traj.waypoints):
        if waypoint.contact and waypoint.planner == "rrt":
            raise PlannerMisuse(f"waypoint {index} plans human contact with RRT", waypoint=index)


def waypoint_pose(waypoint) -> np.ndarray:
    return pose_from_position_quat(waypoint.position, waypoint.orientation)


def ik_feasibility(model: RobotModel, traj: Trajectory, q_init) -> list[np.ndarray]:
    """Solve IK for every waypoint in order, each seeded by the previous solution."""
    model = with_base_window(model, np.asarray(q_init, dtype=float))
    q = np.asarray(q_init, dtype=float)
    solutions = []
    for index, waypoint in enumerate(traj.waypoints):
        try:
            q = solve_ik(model, waypoint_pose(waypoint), q).q
        except IKNoConverge as exc:
            raise IKNoConverge(f"waypoint {index} is kinematically infeasible", waypoint=index, **exc.details) from exc
        solutions.append(q)
    return solutions


@log_execution_time()
def compile_trajectory(
    model: RobotModel,
    traj: Trajectory,
    world: PlanningWorld,
    q_init,
    params: RRTParams = RRTParams(),
    strict: bool = True,
    speed_mode: str = "tool_speed",
) -> JointPath:
    """Plan every waypoint with its chosen planner and join the segments into one annotated path."""
    check_planner_use(traj)
    q_init = np.asarray(q_init, dtype=float)
    model = with_base_window(model, q_init)
    path = JointPath.single(q_init)
    for index, waypoint in enumerate(traj.waypoints):
        q = path.configurations[-1]
        target = waypoint_pose(waypoint)
        try:
            if waypoint.planner == "rrt":
                q_goal = solve_ik(model, target, q).q
                segment = rrt_plan(
                    model, q, q_goal, world, params, derive_seed(traj.seed, f"rrt:{index}"), waypoint.speed, speed_mode
                )
            else:
                segment = cartesian_plan(
                    model, model.tool_pose(q), target, q, waypoint.speed, world, strict, speed_mode
                )
        except (IKNoConverge, RRTFailure, InvalidStart, ForbiddenContact, FurnitureCollision) as exc:
            exc.details.setdefault("waypoint", index)
            raise
        path = path.extend(segment.annotate(index, waypoint.contact, waypoint.planner))
    logger.info(f"Compiled {len(traj.waypoints)} waypoints into {len(path)} steps over {path.duration:.2f} s")
    return path


def contact_log(model: RobotModel, path: JointPath, world: PlanningWorld) -> list[StepClearance]:
    return [step_clearance(model, q, world) for q in path.configurations]
