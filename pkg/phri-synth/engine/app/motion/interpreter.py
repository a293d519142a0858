"""
Deterministic evaluation of checked motion programs against a grounding context.

Random draws come from one SplitMix64 stream per evaluation, consumed in
statement order, so equal (program, context, seed) give equal results.
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial.transform import Rotation

from ..body import PosedHuman, joint_position
from ..errors import EmptyCloud, RuntimeTypeError
from ..schemas import BasePose, Trajectory, Waypoint
from ..seeding import SplitMix64
from .checker import ensure_checked
from .nodes import BaseStmt, BinOp, Call, Let, MotionProgram, Name, Neg, Number, String, TargetStmt, WaypointStmt

EPS = 1e-12


@dataclass(frozen=True)
class GroundingContext:
    """What a program may observe: the posed human, its observed cloud and the camera."""

    posed: Optional[PosedHuman] = None
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    camera_pose: Optional[np.ndarray] = None

    def nearest_index(self, query: np.ndarray) -> int:
        if len(self.points) == 0:
            raise EmptyCloud("surface query on an empty point cloud")
        # argmin returns the first minimum, so ties resolve to the lowest index
        return int(np.argmin(np.sum((self.points - query) ** 2, axis=1)))


def _vec(value, what: str) -> np.ndarray:
    if not isinstance(value, np.ndarray):
        raise RuntimeTypeError(f"{what} must be a vec3")
    return value


def _scalar(value, what: str) -> float:
    if not isinstance(value, float):
        raise RuntimeTypeError(f"{what} must be a scalar")
    return value


def _unit(vector: np.ndarray, what: str) -> np.ndarray:
    length = float(np.linalg.norm(vector))
    if length < EPS:
        raise RuntimeTypeError(f"{what} has zero length")
    return vector / length


def look_at(direction: np.ndarray, up: np.ndarray) -> Rotation:
    """Frame whose z axis points along ``direction`` with y as close to ``up`` as possible."""
    z = _unit(direction, "look_at direction")
    x = np.cross(up, z)
    if np.linalg.norm(x) < 1e-9:
        raise RuntimeTypeError("look_at direction is parallel to up")
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return Rotation.from_matrix(np.column_stack([x, y, z]))


def quaternion_xyzw(rotation: Rotation) -> tuple[float, float, float, float]:
    quat = rotation.as_quat()
    if quat[3] < 0:
        quat = -quat
    quat = quat / np.linalg.norm(quat)
    return tuple(float(q) for q in quat)


class Interpreter:
    def __init__(self, ctx: GroundingContext, seed: int):
        self.ctx = ctx
        self.rng = SplitMix64(seed)
        self.env: dict = {}

    def eval(self, node):
        if isinstance(node, Number):
            return float(node.value)
        if isinstance(node, String):
            return node.value
        if isinstance(node, Name):
            return self.env[node.name]
        if isinstance(node, Neg):
            value = self.eval(node.operand)
            if isinstance(value, Rotation):
                raise RuntimeTypeError("cannot negate a quaternion")
            return -value
        if isinstance(node, BinOp):
            return self.binary(node.op, self.eval(node.left), self.eval(node.right))
        if isinstance(node, Call):
            return self.call(node)
        raise RuntimeTypeError(f"cannot evaluate {type(node).__name__}")

    def binary(self, op: str, left, right):
        if isinstance(left, Rotation) or isinstance(right, Rotation):
            if op == "*" and isinstance(left, Rotation) and isinstance(right, Rotation):
                return left * right
            raise RuntimeTypeError(f"unsupported quaternion operation {op}")
        if op == "+":
            return left + right
        if op == "-":
            return left - right
        if op == "*":
            if isinstance(left, np.ndarray) and isinstance(right, np.ndarray):
                raise RuntimeTypeError("vec3 * vec3 is not defined, use dot or cross")
            return left * right
        right = _scalar(right, "divisor")
        if abs(right) < EPS:
            raise RuntimeTypeError("division by zero")
        return left / right

    def call(self, node: Call):
        func = node.func
        args = [self.eval(arg) for arg in node.args]
        if func == "vec3":
            return np.array([_scalar(a, "vec3 component") for a in args], dtype=float)
        if func == "joint":
            if self.ctx.posed is None:
                raise RuntimeTypeError("joint() needs a posed human in the context")
            return np.array(joint_position(self.ctx.posed, args[0]), dtype=float)
        if func == "surface":
            return self.ctx.points[self.ctx.nearest_index(_vec(args[0], "surface argument"))].astype(float)
        if func == "normal_at":
            return self.ctx.normals[self.ctx.nearest_index(_vec(args[0], "normal_at argument"))].astype(float)
        if func == "camera_pos":
            if self.ctx.camera_pose is None:
                raise RuntimeTypeError("camera_pos() needs a camera pose in the context")
            return np.array(self.ctx.camera_pose[:3, 3], dtype=float)
        if func == "lerp":
            a, b = _vec(args[0], "lerp start"), _vec(args[1], "lerp end")
            return a + (b - a) * _scalar(args[2], "lerp fraction")
        if func == "unit":
            return _unit(_vec(args[0], "unit argument"), "unit argument")
        if func == "norm":
            return float(np.linalg.norm(_vec(args[0], "norm argument")))
        if func == "cross":
            return np.cross(_vec(args[0], "cross operand"), _vec(args[1], "cross operand"))
        if func == "dot":
            return float(np.dot(_vec(args[0], "dot operand"), _vec(args[1], "dot operand")))
        if func == "rand":
            return self.rng.uniform(_scalar(args[0], "rand low"), _scalar(args[1], "rand high"))
        if func == "look_at":
            return look_at(_vec(args[0], "look_at direction"), _vec(args[1], "look_at up"))
        if func == "axis_angle":
            axis = _unit(_vec(args[0], "axis_angle axis"), "axis_angle axis")
            return Rotation.from_rotvec(axis * _scalar(args[1], "axis_angle angle"))
        raise RuntimeTypeError(f"unknown function {func}")

    def point(self, node, what: str) -> tuple[float, float, float]:
        value = _vec(self.eval(node), what)
        if not np.all(np.isfinite(value)):
            raise RuntimeTypeError(f"{what} is not finite")
        return tuple(float(v) for v in value)


def eval_program(program: MotionProgram, ctx: GroundingContext, seed: int) -> Union[Trajectory, BasePose]:
    """Evaluate ``program`` to a :class:`Trajectory` or, for placement programs, a :class:`BasePose`."""
    ensure_checked(program)
    interpreter = Interpreter(ctx, seed)
    waypoints: list[Waypoint] = []
    target = None
    base = None
    for stmt in program.statements:
        if isinstance(stmt, Let):
            interpreter.env[stmt.name] = interpreter.eval(stmt.value)
        elif isinstance(stmt, WaypointStmt):
            orientation = interpreter.eval(stmt.orientation)
            if not isinstance(orientation, Rotation):
                raise RuntimeTypeError("waypoint orientation must be a quaternion")
            speed = _scalar(interpreter.eval(stmt.speed), "waypoint speed")
            if not speed > 0:
                raise RuntimeTypeError("waypoint speed must be positive", speed=speed)
            waypoints.append(
                Waypoint(
                    position=interpreter.point(stmt.position, "waypoint position"),
                    orientation=quaternion_xyzw(orientation),
                    speed=speed,
                    contact=stmt.contact,
                    planner=stmt.planner,
                )
            )
        elif isinstance(stmt, TargetStmt):
            target = interpreter.point(stmt.point, "target point")
        elif isinstance(stmt, BaseStmt):
            base = BasePose(
                position=interpreter.point(stmt.position, "base position"),
                focus=interpreter.point(stmt.focus, "base focus"),
            )

    if program.kind == "placement":
        return base
    return Trajectory(waypoints=waypoints, target_point=target, seed=seed)
