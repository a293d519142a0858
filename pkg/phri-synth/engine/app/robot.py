"""
Config-defined robot: a planar base carrying a serial chain of prismatic,
revolute and fixed joints. Joint vectors start with the base (x, y, yaw)
followed by one entry per articulated link in file order.
"""

import hashlib
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy.spatial.transform import Rotation

from .collision import Capsule
from .errors import IKNoConverge, IOFailure, UnrecoverableConfig
from .geometry import make_transform, rpy_matrix
from .logger import get_logger

logger = get_logger(__name__)

BASE_DOFS = 3
LINEAR_MAX_STEP = 0.01
ANGULAR_MAX_STEP = 0.02

IK_DAMPING = 0.05
IK_TOL_POS = 1e-3
IK_TOL_ROT = 0.01
IK_MAX_ITERS = 200


# Config file schema

class OriginConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    xyz: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    rpy: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def matrix(self) -> np.ndarray:
        return make_transform(rpy_matrix(self.rpy), np.asarray(self.xyz, dtype=float))


class CapsuleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    start: Tuple[float, float, float]
    end: Tuple[float, float, float]
    radius: float = Field(..., gt=0)


class LinkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    joint: Literal["planar_base", "prismatic", "revolute", "fixed"]
    axis: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    limits: Optional[Tuple[float, float]] = None
    origin: OriginConfig = OriginConfig()
    capsules: List[CapsuleConfig] = []
    is_tool: bool = False
    home: float = 0.0

    @model_validator(mode="after")
    def check_limits(self) -> "LinkConfig":
        if self.joint in ("prismatic", "revolute"):
            if self.limits is None or not self.limits[0] < self.limits[1]:
                raise ValueError(f"{self.name}: articulated joints need limits with lower < upper")
            if not self.limits[0] <= self.home <= self.limits[1]:
                raise ValueError(f"{self.name}: home value outside limits")
        return self


class BaseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ik_weight: float = Field(1.0, ge=0)
    locked: bool = False


class IKConfig(BaseModel):
    """Solver settings; the defaults give the plain damped least-squares update."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    damping: float = Field(IK_DAMPING, gt=0)
    max_position_error: Optional[float] = Field(None, gt=0)
    max_rotation_error: Optional[float] = Field(None, gt=0)


class RobotConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    base: BaseConfig = BaseConfig()
    ik: IKConfig = IKConfig()
    links: List[LinkConfig] = Field(..., min_length=1)
    tool_frame: OriginConfig = OriginConfig()

    @field_validator("links")
    @classmethod
    def one_base_one_tool(cls, links: List[LinkConfig]) -> List[LinkConfig]:
        if links[0].joint != "planar_base" or sum(link.joint == "planar_base" for link in links) != 1:
            raise ValueError("exactly one planar_base, as the first link")
        if sum(link.is_tool for link in links) != 1:
            raise ValueError("exactly one link must be flagged is_tool")
        return links


# Kinematic model

@dataclass(frozen=True, eq=False)
class Link:
    name: str
    joint: str
    axis: np.ndarray
    origin: np.ndarray
    capsules: tuple
    is_tool: bool
    dof: Optional[int]  # index into the joint vector, None for fixed links


@dataclass(frozen=True)
class RobotState:
    tool: np.ndarray
    links: Dict[str, np.ndarray]


@dataclass(frozen=True, eq=False)
class RobotModel:
    name: str
    links: tuple
    tool_frame: np.ndarray
    home: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    ik_weights: np.ndarray
    dof_names: tuple
    angular: np.ndarray  # per-dof flag, True for rotations
    base_locked: bool
    config_hash: str = ""
    ik: IKConfig = IKConfig()
    levers: np.ndarray = field(default=None)

    @property
    def dof(self) -> int:
        return len(self.dof_names)

    @property
    def tool_link(self) -> str:
        return next(link.name for link in self.links if link.is_tool)

    @property
    def arm_dofs(self) -> np.ndarray:
        return np.arange(BASE_DOFS, self.dof)

    @property
    def max_step(self) -> np.ndarray:
        return np.where(self.angular, ANGULAR_MAX_STEP, LINEAR_MAX_STEP)

    def clamp(self, q) -> tuple[np.ndarray, bool]:
        q = np.asarray(q, dtype=float)
        clamped = np.clip(q, self.lower, self.upper)
        return clamped, bool(np.any(clamped != q))

    # Forward kinematics

    def _joint_motion(self, link: Link, q: np.ndarray) -> np.ndarray:
        if link.joint == "planar_base":
            c, s = math.cos(q[2]), math.sin(q[2])
            return make_transform(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), (q[0], q[1], 0.0))
        if link.joint == "prismatic":
            return make_transform(translation=link.axis * q[link.dof])
        if link.joint == "revolute":
            return make_transform(Rotation.from_rotvec(link.axis * q[link.dof]).as_matrix())
        return np.eye(4)

    def _walk(self, q: np.ndarray):
        """Yield (link, frame before the joint motion, link frame)."""
        parent = np.eye(4)
        for link in self.links:
            mount = parent @ link.origin
            frame = mount @ self._joint_motion(link, q)
            yield link, mount, frame
            parent = frame

    def fk(self, q) -> RobotState:
        q = np.asarray(q, dtype=float)
        frames = {}
        for link, _, frame in self._walk(q):
            frames[link.name] = frame
        tool = frames[self.tool_link] @ self.tool_frame
        return RobotState(tool, frames)

    def tool_pose(self, q) -> np.ndarray:
        return self.fk(q).tool

    def jacobian(self, q) -> np.ndarray:
        """Geometric Jacobian (6 x dof): linear rows at the tool point, then angular rows, world frame."""
        q = np.asarray(q, dtype=float)
        walk = list(self._walk(q))
        tool_link_frame = next(frame for link, _, frame in walk if link.is_tool)
        point = (tool_link_frame @ self.tool_frame)[:3, 3]
        jac = np.zeros((6, self.dof))
        for link, mount, frame in walk:
            rotation = mount[:3, :3]
            if link.joint == "planar_base":
                jac[:3, 0] = rotation[:, 0]
                jac[:3, 1] = rotation[:, 1]
                z = rotation[:, 2]
                jac[:3, 2] = np.cross(z, point - frame[:3, 3])
                jac[3:, 2] = z
            elif link.joint == "prismatic":
                jac[:3, link.dof] = rotation @ link.axis
            elif link.joint == "revolute":
                axis = rotation @ link.axis
                jac[:3, link.dof] = np.cross(axis, point - mount[:3, 3])
                jac[3:, link.dof] = axis
        return jac

    def collision_shapes(self, q, inflate: Optional[Dict[str, float]] = None) -> list[Capsule]:
        """World-frame capsules tagged with their link name; ``inflate`` adds radius per link."""
        inflate = inflate or {}
        shapes = []
        for link, _, frame in self._walk(np.asarray(q, dtype=float)):
            for start, end, radius in link.capsules:
                shapes.append(
                    Capsule(
                        frame[:3, :3] @ start + frame[:3, 3],
                        frame[:3, :3] @ end + frame[:3, 3],
                        radius + inflate.get(link.name, 0.0),
                        tag=link.name,
                    )
                )
        return shapes

    def motion_bound(self, dq) -> float:
        """Upper bound on how far any point of the robot moves for a joint change ``dq``."""
        return float(np.abs(np.asarray(dq, dtype=float)) @ self.levers)


def _lever_arms(links: Sequence[Link], upper: np.ndarray, tool_frame: np.ndarray, dof: int) -> np.ndarray:
    """Conservative distance from each joint to the furthest robot point it can move."""
    reach = []
    for link in links:
        extent = np.linalg.norm(link.origin[:3, 3])
        if link.joint == "prismatic":
            extent += float(np.abs(upper[link.dof]))
        body = max((np.linalg.norm(p) + r for s, e, r in link.capsules for p in (s, e)), default=0.0)
        if link.is_tool:
            body = max(body, float(np.linalg.norm(tool_frame[:3, 3])))
        reach.append((extent, body))
    levers = np.ones(dof)
    for index, link in enumerate(links):
        downstream = sum(extent for extent, _ in reach[index + 1 :]) + max(body for _, body in reach[index:])
        if link.joint == "planar_base":
            levers[2] = downstream
        elif link.joint == "revolute":
            levers[link.dof] = downstream
    return levers


def build_robot(config: RobotConfig, config_hash: str = "") -> RobotModel:
    links = []
    names = ["base_x", "base_y", "base_yaw"]
    lower = [-np.inf, -np.inf, -np.inf]
    upper = [np.inf, np.inf, np.inf]
    home = [0.0, 0.0, 0.0]
    angular = [False, False, True]
    base_weight = 0.0 if config.base.locked else config.base.ik_weight
    weights = [base_weight] * BASE_DOFS
    for link_config in config.links:
        dof = None
        if link_config.joint in ("prismatic", "revolute"):
            dof = len(names)
            names.append(link_config.name)
            lower.append(link_config.limits[0])
            upper.append(link_config.limits[1])
            home.append(link_config.home)
            angular.append(link_config.joint == "revolute")
            weights.append(1.0)
        axis = np.asarray(link_config.axis, dtype=float)
        capsules = tuple(
            (np.asarray(c.start, dtype=float), np.asarray(c.end, dtype=float), c.radius) for c in link_config.capsules
        )
        links.append(
            Link(link_config.name, link_config.joint, axis / np.linalg.norm(axis), link_config.origin.matrix(), capsules, link_config.is_tool, dof)
        )

    upper_array = np.array(upper)
    lower_array = np.array(lower)
    if config.base.locked:
        lower_array[:BASE_DOFS] = 0.0
        upper_array[:BASE_DOFS] = 0.0
    tool_frame = config.tool_frame.matrix()
    model = RobotModel(
        name=config.name,
        links=tuple(links),
        tool_frame=tool_frame,
        home=np.array(home),
        lower=lower_array,
        upper=upper_array,
        ik_weights=np.array(weights),
        dof_names=tuple(names),
        angular=np.array(angular),
        base_locked=config.base.locked,
        config_hash=config_hash,
        ik=config.ik,
    )
    object.__setattr__(model, "levers", _lever_arms(links, upper_array, tool_frame, len(names)))
    return model


@lru_cache(maxsize=8)
def load_robot(path: str) -> RobotModel:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IOFailure(f"cannot read robot config: {e}", path=path) from e
    try:
        config = RobotConfig.model_validate_json(raw)
    except ValidationError as e:
        raise UnrecoverableConfig(f"invalid robot config {path}: {e.errors()[0]['msg']}", path=path) from e
    return build_robot(config, hashlib.sha256(raw).hexdigest())


def with_base_window(model: RobotModel, center, radius: float = 0.3, yaw_window: float = 0.5) -> RobotModel:
    """Copy of the model whose base may only move within a box around ``center`` (x, y, yaw)."""
    if model.base_locked:
        return model
    center = np.asarray(center, dtype=float)
    lower = model.lower.copy()
    upper = model.upper.copy()
    lower[:BASE_DOFS] = center[:BASE_DOFS] - (radius, radius, yaw_window)
    upper[:BASE_DOFS] = center[:BASE_DOFS] + (radius, radius, yaw_window)
    return replace(model, lower=lower, upper=upper)


def lock_base(model: RobotModel, base) -> RobotModel:
    lower = model.lower.copy()
    upper = model.upper.copy()
    lower[:BASE_DOFS] = upper[:BASE_DOFS] = np.asarray(base, dtype=float)[:BASE_DOFS]
    weights = model.ik_weights.copy()
    weights[:BASE_DOFS] = 0.0
    return replace(model, lower=lower, upper=upper, ik_weights=weights, base_locked=True)


# Inverse kinematics

@dataclass(frozen=True)
class IKSolution:
    q: np.ndarray
    iterations: int
    position_error: float
    rotation_error: float


def pose_error(current: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    position = target[:3, 3] - current[:3, 3]
    rotation = Rotation.from_matrix(target[:3, :3] @ current[:3, :3].T).as_rotvec()
    return position, rotation


def _clamp_norm(vector: np.ndarray, limit: Optional[float]) -> np.ndarray:
    norm = np.linalg.norm(vector)
    return vector if limit is None or norm <= limit else vector * (limit / norm)


def solve_ik(
    model: RobotModel,
    target_pose: np.ndarray,
    q_init,
    tol_pos: float = IK_TOL_POS,
    tol_rot: float = IK_TOL_ROT,
    max_iters: int = IK_MAX_ITERS,
    damping: Optional[float] = None,
    position_only: bool = False,
) -> IKSolution:
    """
    Damped least squares, q += W Jt (J W Jt + damping^2 I)^-1 e, clamping to joint limits after every step.

    W holds the per-joint weights (1 for the arm, the configured base weight); with unit
    weights and no error caps in the robot config this is the plain Jt (J Jt + damping^2 I)^-1 e.
    """
    damping = model.ik.damping if damping is None else damping
    q, _ = model.clamp(q_init)
    weights = np.diag(model.ik_weights)
    rows = 3 if position_only else 6
    position_error = rotation_error = float("inf")
    for iteration in range(max_iters + 1):
        e_pos, e_rot = pose_error(model.tool_pose(q), target_pose)
        position_error = float(np.linalg.norm(e_pos))
        rotation_error = 0.0 if position_only else float(np.linalg.norm(e_rot))
        if position_error <= tol_pos and rotation_error <= tol_rot:
            return IKSolution(q, iteration, position_error, rotation_error)
        if iteration == max_iters:
            break
        e_pos = _clamp_norm(e_pos, model.ik.max_position_error)
        e_rot = _clamp_norm(e_rot, model.ik.max_rotation_error)
        error = np.concatenate([e_pos, e_rot])[:rows]
        jac = model.jacobian(q)[:rows]
        jw = jac @ weights
        step = weights @ jac.T @ np.linalg.solve(jw @ jac.T + damping**2 * np.eye(rows), error)
        q, _ = model.clamp(q + step)
    raise IKNoConverge(
        "inverse kinematics did not converge",
        position_error=round(position_error, 6),
        rotation_error=round(rotation_error, 6),
        iterations=max_iters,
    )


def ik_dls(model: RobotModel, target_pose: np.ndarray, q_init, **kwargs) -> np.ndarray:
    return solve_ik(model, target_pose, q_init, **kwargs).q


def robot_fk(model: RobotModel, q) -> RobotState:
    q, clamped = model.clamp(q)
    if clamped:
        logger.warning("Robot configuration outside joint limits was clamped")
    return model.fk(q)
