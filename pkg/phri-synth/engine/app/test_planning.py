"""
Tests for motion planning:
- Seeded joint-space RRT
- Straight-line Cartesian planning with contact limits
- Trajectory compilation and annotation
"""

import math

import numpy as np
import pytest

from app.collision import Capsule, sphere
from app.errors import ForbiddenContact, InvalidStart, PlannerMisuse, RRTFailure
from app.geometry import make_transform
from app.planning import (
    CARTESIAN_STEP,
    CONTACT_PENETRATION,
    JointPath,
    PlanningWorld,
    RRTParams,
    cartesian_plan,
    clearance,
    compile_trajectory,
    densify,
    interpolate_poses,
    path_timestamps,
    rrt_plan,
    step_clearance,
)
from app.schemas import Trajectory, Waypoint

DOWN = (1.0, 0.0, 0.0, 0.0)
FOREARM_TOP = 0.62


def _q2(a: float, b: float) -> np.ndarray:
    return np.array([0.0, 0.0, 0.0, a, b])


def _forearm_world(allowed: bool = True) -> PlanningWorld:
    """A horizontal forearm-like capsule 14 cm under the stretch-like tool at home."""
    forearm = Capsule(np.array([-0.2, -0.30, FOREARM_TOP - 0.03]), np.array([0.2, -0.30, FOREARM_TOP - 0.03]), 0.03, tag="left_forearm")
    return PlanningWorld(human=(forearm,), allowed_parts=frozenset({"left_forearm"} if allowed else ()))


def _tool_down(stretch, z: float) -> np.ndarray:
    pose = stretch.tool_pose(stretch.home).copy()
    pose[2, 3] = z
    return pose


def test_rrt_straight_edge_when_free(planar_2r):
    path = rrt_plan(planar_2r, _q2(0.0, 0.0), _q2(math.pi / 2, 0.0), PlanningWorld())
    assert len(path) == 80
    assert path.planner == ["rrt"] * 80
    assert np.all(np.diff(path.timestamps) > 0)
    assert np.allclose(path.configurations[-1], _q2(math.pi / 2, 0.0))


def test_rrt_detours_around_an_obstacle(planar_2r):
    world = PlanningWorld(furniture=(sphere((1.2, 1.2, 0.0), 0.2, tag="pillar"),))
    start, goal = _q2(0.0, 0.0), _q2(math.pi / 2, 0.0)
    path = rrt_plan(planar_2r, start, goal, world, seed=7)
    assert np.allclose(path.configurations[0], start)
    assert np.allclose(path.configurations[-1], goal)
    assert all(clearance(planar_2r, q, world) > 0.0 for q in path.configurations)
    steps = np.abs(np.diff(path.configurations, axis=0))
    assert np.all(steps <= planar_2r.max_step + 1e-12)


def test_rrt_is_deterministic_per_seed(planar_2r):
    world = PlanningWorld(furniture=(sphere((1.2, 1.2, 0.0), 0.2),))
    first = rrt_plan(planar_2r, _q2(0.0, 0.0), _q2(math.pi / 2, 0.0), world, seed=3)
    second = rrt_plan(planar_2r, _q2(0.0, 0.0), _q2(math.pi / 2, 0.0), world, seed=3)
    assert np.array_equal(first.configurations, second.configurations)
    assert np.array_equal(first.timestamps, second.timestamps)


def test_rrt_rejects_colliding_endpoints(planar_2r):
    blocked_start = PlanningWorld(furniture=(sphere((1.0, 0.0, 0.0), 0.1),))
    with pytest.raises(InvalidStart):
        rrt_plan(planar_2r, _q2(0.0, 0.0), _q2(math.pi / 2, 0.0), blocked_start)
    blocked_goal = PlanningWorld(furniture=(sphere((0.0, 1.5, 0.0), 0.1),))
    with pytest.raises(RRTFailure):
        rrt_plan(planar_2r, _q2(0.0, 0.0), _q2(math.pi / 2, 0.0), blocked_goal)


def test_rrt_budget_exhaustion(planar_2r):
    # Pillars on the arc the tool sweeps, so the direct edge is blocked.
    pillars = tuple(sphere((2.0 * math.cos(a), 2.0 * math.sin(a), 0.0), 0.25) for a in np.linspace(0.9, 1.3, 3))
    world = PlanningWorld(furniture=pillars)
    with pytest.raises(RRTFailure):
        rrt_plan(planar_2r, _q2(0.0, 0.0), _q2(math.pi / 2, 0.0), world, RRTParams(max_iters=5))


def test_interpolated_poses_respect_resolution():
    start = make_transform(translation=(0.0, 0.0, 0.0))
    goal = make_transform(translation=(0.1, 0.0, 0.0))
    poses = interpolate_poses(start, goal)
    assert np.allclose(poses[0], start) and np.allclose(poses[-1], goal)
    gaps = [np.linalg.norm(b[:3, 3] - a[:3, 3]) for a, b in zip(poses, poses[1:])]
    assert max(gaps) <= CARTESIAN_STEP + 1e-12


def test_cartesian_follows_the_straight_line(stretch):
    start = stretch.tool_pose(stretch.home)
    goal = start @ make_transform(translation=(0.0, 0.0, 0.08))
    path = cartesian_plan(stretch, start, goal, stretch.home, speed=0.1)
    tool = np.array([stretch.tool_pose(q)[:3, 3] for q in path.configurations])
    line = goal[:3, 3] - start[:3, 3]
    offsets = tool - start[:3, 3]
    along = offsets @ line / np.dot(line, line)
    off_line = np.linalg.norm(offsets - np.outer(along, line), axis=1)
    assert off_line.max() < 2e-3
    assert np.linalg.norm(tool[-1] - goal[:3, 3]) <= 1e-3
    assert path.duration == pytest.approx(0.08 / 0.1, rel=0.05)


def test_cartesian_contact_within_allowed_depth(stretch):
    world = _forearm_world()
    start = stretch.tool_pose(stretch.home)
    path = cartesian_plan(stretch, start, _tool_down(stretch, FOREARM_TOP - 0.002), stretch.home, 0.05, world)
    deepest = min(step_clearance(stretch, q, world).tool_allowed for q in path.configurations)
    assert -CONTACT_PENETRATION <= deepest < 0.0


def test_cartesian_contact_outside_allowed_parts(stretch):
    start = stretch.tool_pose(stretch.home)
    with pytest.raises(ForbiddenContact):
        cartesian_plan(stretch, start, _tool_down(stretch, FOREARM_TOP - 0.002), stretch.home, 0.05, _forearm_world(False))


def test_cartesian_too_deep_contact(stretch):
    start = stretch.tool_pose(stretch.home)
    with pytest.raises(ForbiddenContact):
        cartesian_plan(stretch, start, _tool_down(stretch, FOREARM_TOP - 0.02), stretch.home, 0.05, _forearm_world())


def test_non_strict_cartesian_skips_checks(stretch):
    start = stretch.tool_pose(stretch.home)
    path = cartesian_plan(
        stretch, start, _tool_down(stretch, FOREARM_TOP - 0.02), stretch.home, 0.05, _forearm_world(False), strict=False
    )
    assert step_clearance(stretch, path.configurations[-1], _forearm_world(False)).tool_other < 0.0


def _waypoint(position, contact, planner, speed=0.1):
    return Waypoint(position=position, orientation=DOWN, speed=speed, contact=contact, planner=planner)


def test_compile_annotates_each_segment(stretch):
    traj = Trajectory(
        waypoints=[
            _waypoint((0.05, -0.30, 0.72), False, "rrt"),
            _waypoint((0.05, -0.30, FOREARM_TOP - 0.002), True, "cartesian", speed=0.05),
        ],
        target_point=(0.05, -0.30, FOREARM_TOP),
        seed=11,
    )
    world = _forearm_world()
    path = compile_trajectory(stretch, traj, world, stretch.home)
    assert path.waypoint_index[0] == 0 and path.planner[0] == "start"
    assert np.all(np.diff(path.waypoint_index) >= 0)
    assert set(path.planner[1:]) == {"rrt", "cartesian"}
    contact = path.contact.astype(bool)
    assert np.array_equal(contact, path.waypoint_index == 1)
    assert np.all(np.diff(path.timestamps) > 0)
    final = stretch.tool_pose(path.configurations[-1])[:3, 3]
    assert np.linalg.norm(final - traj.waypoints[-1].position) <= 1.5e-3
    again = compile_trajectory(stretch, traj, world, stretch.home)
    assert np.array_equal(again.configurations, path.configurations)


def test_contact_with_rrt_is_planner_misuse(stretch):
    traj = Trajectory(waypoints=[_waypoint((0.05, -0.30, 0.70), True, "rrt")], target_point=(0.0, 0.0, 0.0))
    with pytest.raises(PlannerMisuse) as info:
        compile_trajectory(stretch, traj, PlanningWorld(), stretch.home)
    assert info.value.details["waypoint"] == 0


def test_densify_and_csv(stretch):
    q0 = stretch.home
    q1 = stretch.home.copy()
    q1[3] += 0.05
    dense = densify(stretch, [q0, q1])
    assert len(dense) == 6
    path = JointPath(dense, np.arange(6) * 0.1, np.zeros(6, dtype=int), np.zeros(6, dtype=bool), ["rrt"] * 6)
    rows = path.to_csv(stretch.dof_names).strip().splitlines()
    assert rows[0].split(",") == ["timestamp", *stretch.dof_names, "waypoint_index", "contact"]
    assert len(rows) == 7
    assert JointPath.single(q0).extend(JointPath.single(q1)).configurations.shape == (1, stretch.dof)


def test_speed_modes(planar_2r):
    configurations = np.array([_q2(0.0, 0.0), _q2(0.0, 0.1)])
    chord = 2.0 * math.sin(0.05)
    assert np.allclose(path_timestamps(planar_2r, configurations, 1.0), [0.0, chord])
    capped = path_timestamps(planar_2r, configurations, 1.0, mode="joint_speed_cap", start=2.0)
    assert np.allclose(capped, [2.0, 2.1])
