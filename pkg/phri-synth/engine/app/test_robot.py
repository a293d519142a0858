import json
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from app.errors import IKNoConverge, IOFailure, UnrecoverableConfig
from app.geometry import make_transform
from app.robot import (
    BASE_DOFS,
    IK_TOL_POS,
    IK_TOL_ROT,
    BaseConfig,
    IKConfig,
    load_robot,
    lock_base,
    pose_error,
    robot_fk,
    solve_ik,
    with_base_window,
)

# Hand-composed from the stretch-like origins: lift 0.9, arm 0.1 out along -y, tool flipped about x.
STRETCH_HOME_TOOL = make_transform(np.diag([1.0, -1.0, -1.0]), (0.0, -0.30, 0.76))


def _planar_q(a: float, b: float) -> np.ndarray:
    return np.array([0.0, 0.0, 0.0, a, b])


def test_stretch_home_tool_pose(stretch):
    assert stretch.dof_names == ("base_x", "base_y", "base_yaw", "lift", "arm", "wrist_yaw", "wrist_pitch", "wrist_roll")
    assert np.allclose(stretch.tool_pose(stretch.home), STRETCH_HOME_TOOL, atol=1e-12)


def test_planar_2r_forward_kinematics(planar_2r):
    for a, b in ((0.0, 0.0), (0.3, 0.9), (-1.2, 2.0)):
        tool = planar_2r.tool_pose(_planar_q(a, b))
        expected = [math.cos(a) + math.cos(a + b), math.sin(a) + math.sin(a + b), 0.0]
        assert np.allclose(tool[:3, 3], expected, atol=1e-12)
        assert Rotation.from_matrix(tool[:3, :3]).as_rotvec()[2] == pytest.approx(math.atan2(math.sin(a + b), math.cos(a + b)))


def test_planar_2r_ik_matches_closed_form(planar_2r):
    target = make_transform(translation=(1.2, 0.7, 0.0))
    solution = solve_ik(planar_2r, target, _planar_q(0.2, 0.8), position_only=True)
    x, y = 1.2, 0.7
    elbow = math.acos((x * x + y * y - 2.0) / 2.0)
    shoulder = math.atan2(y, x) - math.atan2(math.sin(elbow), 1.0 + math.cos(elbow))
    assert solution.position_error <= 1e-3
    assert abs(solution.q[4]) == pytest.approx(elbow, abs=5e-3)
    if solution.q[4] > 0:
        assert solution.q[3] == pytest.approx(shoulder, abs=5e-3)
    assert np.allclose(solution.q[:BASE_DOFS], 0.0)


def test_unreachable_target_does_not_converge(planar_2r):
    target = make_transform(translation=(3.0, 0.0, 0.0))
    with pytest.raises(IKNoConverge) as info:
        solve_ik(planar_2r, target, _planar_q(0.1, 0.1), position_only=True, max_iters=50)
    assert info.value.details["position_error"] >= 0.99


def test_ik_converges_on_reachable_targets(planar_2r):
    rng = np.random.default_rng(2024)
    converged = 0
    for _ in range(1000):
        a, b = rng.uniform(-0.8 * math.pi, 0.8 * math.pi, 2)
        target = planar_2r.tool_pose(_planar_q(a, b))
        start = _planar_q(a, b) + np.concatenate([np.zeros(BASE_DOFS), rng.uniform(-0.5, 0.5, 2)])
        try:
            solution = solve_ik(planar_2r, target, start)
        except IKNoConverge:
            continue
        converged += 1
        e_pos, e_rot = pose_error(planar_2r.tool_pose(solution.q), target)
        assert np.linalg.norm(e_pos) <= IK_TOL_POS
        assert np.linalg.norm(e_rot) <= IK_TOL_ROT
    assert converged >= 950


def test_stretch_ik_converges_near_home(stretch):
    rng = np.random.default_rng(7)
    spread = np.array([0.05, 0.05, 0.1, 0.1, 0.1, 0.4, 0.4, 0.4])
    converged = 0
    for _ in range(100):
        goal, _ = stretch.clamp(stretch.home + rng.uniform(-spread, spread))
        target = stretch.tool_pose(goal)
        try:
            solution = solve_ik(stretch, target, stretch.home)
        except IKNoConverge:
            continue
        converged += 1
        assert solution.position_error <= IK_TOL_POS
        assert solution.rotation_error <= IK_TOL_ROT
    assert converged >= 95


def test_ik_settings_default_to_the_plain_update(planar_2r, stretch):
    assert planar_2r.ik == IKConfig()
    assert planar_2r.ik.damping == pytest.approx(0.05)
    assert planar_2r.ik.max_position_error is None and planar_2r.ik.max_rotation_error is None
    assert BaseConfig().ik_weight == 1.0
    assert stretch.ik.max_position_error == pytest.approx(0.2)
    assert stretch.ik.max_rotation_error == pytest.approx(0.5)


def test_jacobian_matches_finite_differences(stretch, rng):
    q = stretch.home + rng.uniform(-0.2, 0.2, stretch.dof)
    q, _ = stretch.clamp(q)
    jac = stretch.jacobian(q)
    h = 1e-6
    base = stretch.tool_pose(q)
    for index in range(stretch.dof):
        dq = np.zeros(stretch.dof)
        dq[index] = h
        moved = stretch.tool_pose(q + dq)
        linear = (moved[:3, 3] - base[:3, 3]) / h
        angular = Rotation.from_matrix(moved[:3, :3] @ base[:3, :3].T).as_rotvec() / h
        assert np.allclose(jac[:3, index], linear, atol=1e-5), stretch.dof_names[index]
        assert np.allclose(jac[3:, index], angular, atol=1e-5), stretch.dof_names[index]


def test_stretch_ik_reaches_nearby_pose(stretch):
    goal = stretch.home.copy()
    goal[[3, 4, 5, 6]] += (0.1, 0.15, 0.3, -0.4)
    target = stretch.tool_pose(goal)
    solution = solve_ik(stretch, target, stretch.home)
    assert solution.position_error <= 1e-3
    assert solution.rotation_error <= 0.01
    assert np.all(solution.q >= stretch.lower) and np.all(solution.q <= stretch.upper)


def test_ik_respects_a_locked_base(stretch):
    locked = lock_base(stretch, (0.5, -0.2, 0.3))
    start = stretch.home.copy()
    start[:3] = (0.5, -0.2, 0.3)
    target = locked.tool_pose(start) @ make_transform(translation=(0.0, 0.0, 0.05))
    solution = solve_ik(locked, target, start)
    assert np.allclose(solution.q[:3], (0.5, -0.2, 0.3))


def test_base_window_bounds_the_base(stretch):
    windowed = with_base_window(stretch, (1.0, 2.0, 0.0), radius=0.3, yaw_window=0.5)
    assert np.allclose(windowed.lower[:3], (0.7, 1.7, -0.5))
    assert np.allclose(windowed.upper[:3], (1.3, 2.3, 0.5))
    assert np.array_equal(windowed.lower[3:], stretch.lower[3:])


def test_fk_clamps_out_of_range_configurations(stretch):
    q = stretch.home.copy()
    q[3] = 5.0
    clamped = stretch.home.copy()
    clamped[3] = stretch.upper[3]
    assert np.allclose(robot_fk(stretch, q).tool, stretch.tool_pose(clamped))


def test_motion_bound_covers_every_capsule_point(stretch, rng):
    for _ in range(20):
        q = np.clip(stretch.home + rng.uniform(-0.3, 0.3, stretch.dof), stretch.lower, stretch.upper)
        dq = rng.uniform(-0.02, 0.02, stretch.dof)
        before = stretch.collision_shapes(q)
        after = stretch.collision_shapes(q + dq)
        moved = max(
            max(np.linalg.norm(a.start - b.start), np.linalg.norm(a.end - b.end)) for a, b in zip(before, after)
        )
        tool_moved = np.linalg.norm(stretch.tool_pose(q + dq)[:3, 3] - stretch.tool_pose(q)[:3, 3])
        assert max(moved, tool_moved) <= stretch.motion_bound(dq) + 1e-9


def test_collision_shapes_inflate_per_link(stretch):
    plain = stretch.collision_shapes(stretch.home)
    inflated = stretch.collision_shapes(stretch.home, inflate={"wrist_roll": 0.01})
    for a, b in zip(plain, inflated):
        assert b.radius == pytest.approx(a.radius + (0.01 if a.tag == "wrist_roll" else 0.0))


def test_config_hash_is_content_digest(stretch):
    assert len(stretch.config_hash) == 64


def test_missing_robot_config(tmp_path):
    with pytest.raises(IOFailure):
        load_robot(str(tmp_path / "missing.robot"))


def test_robot_config_needs_one_tool_link(tmp_path):
    config = {
        "name": "toolless",
        "base": {"ik_weight": 0.0, "locked": True},
        "links": [
            {"name": "base", "joint": "planar_base"},
            {"name": "shoulder", "joint": "revolute", "axis": [0.0, 0.0, 1.0], "limits": [-1.0, 1.0]},
        ],
        "tool_frame": {"xyz": [1.0, 0.0, 0.0]},
    }
    path = tmp_path / "toolless.robot"
    path.write_text(json.dumps(config), encoding="utf-8")
    with pytest.raises(UnrecoverableConfig):
        load_robot(str(path))
