"""
Procedural articulated human.

The body is ten rigid segments (capsules, plus an ellipsoid head) hung on
nine ball joints, 27 rotational degrees of freedom in total. Shape
coefficients ``beta`` scale a fixed template; pose components ``theta`` are
axis-angle triples in joint order. The root frame sits at the pelvis with
the person facing +x, their left along +y and z up.
"""

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .collision import Capsule, MeshShape
from .errors import IOFailure, UnknownJoint, UnsupportedPosture
from .geometry import TriangleMesh, capsule_mesh, ellipsoid_mesh, export_mesh_ply, make_transform, pose_xyz_yaw
from .logger import get_logger
from .schemas import PART_LABELS, BodyParams, RootPose, ScenarioSpec
from .settings import ASSETS_DIR

logger = get_logger(__name__)

JOINT_ORDER = (
    "neck",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
)
ENDPOINTS = ("pelvis", "left_wrist", "right_wrist", "left_ankle", "right_ankle", "head_top")
QUERY_JOINTS = JOINT_ORDER + ENDPOINTS

BEND_JOINTS = ("left_elbow", "right_elbow", "left_knee", "right_knee")
BEND_LIMIT = 2.6
ARTICULATED_DOF = 27

# Elbow frames are turned half a revolution about z so that a positive
# bend about local y flexes the forearm forward, like the knees flex back.
ELBOW_FRAME = np.diag([-1.0, -1.0, 1.0])

TEMPLATE = {
    "torso_length": 0.55,
    "torso_radius": 0.14,
    "shoulder_height": 0.50,
    "shoulder_offset": 0.19,
    "hip_offset": 0.09,
    "hip_height": -0.07,
    "upper_arm_length": 0.28,
    "upper_arm_radius": 0.045,
    "forearm_length": 0.26,
    "forearm_radius": 0.040,
    "thigh_length": 0.42,
    "thigh_radius": 0.070,
    "lower_leg_length": 0.40,
    "lower_leg_radius": 0.050,
    "head_semi_axes": (0.10, 0.08, 0.12),
    "head_center": 0.12,
    "head_top": 0.24,
}

# (beta index, multiplier slope)
HEIGHT_SCALE = (0, 0.075)
LIMB_SCALE = (1, 0.05)
GIRTH_SCALE = (2, 0.08)
TORSO_SCALE = (3, 0.06)
SHOULDER_SCALE = (4, 0.05)

SHAPE_KEYWORDS = {
    "tall": (0, 1.5),
    "short": (0, -1.5),
    "petite": (0, -1.0),
    "long-limbed": (1, 1.5),
    "lanky": (1, 1.2),
    "heavy": (2, 1.5),
    "stocky": (2, 1.0),
    "slim": (2, -1.2),
    "thin": (2, -1.2),
    "long torso": (3, 1.2),
    "broad": (4, 1.2),
    "narrow": (4, -1.2),
}
POSTURE_PRESETS = {"sitting": "seated", "standing": "standing"}
SUPPORTING_JOINTS = ("left_hip", "right_hip", "left_knee", "right_knee")
POSE_NOISE = 0.05


@dataclass(frozen=True, eq=False)
class JointSpec:
    name: str
    parent_segment: str
    child_segment: str
    offset: np.ndarray
    frame: np.ndarray
    limits: np.ndarray  # (3, 2) lower/upper per axis-angle component


@dataclass(frozen=True, eq=False)
class Segment:
    label: str
    parent_joint: Optional[str]
    mesh: TriangleMesh
    capsule: Optional[tuple] = None  # (start, end, radius) in the segment frame
    envelope: Optional[tuple] = None  # bounding capsule for non-capsule segments


@dataclass(frozen=True, eq=False)
class HumanModel:
    beta: tuple
    segments: Dict[str, Segment]
    joints: Dict[str, JointSpec]
    endpoints: Dict[str, tuple]  # name -> (segment label, local point)
    template_joint_positions: Dict[str, np.ndarray] = field(default_factory=dict)
    part_labels: tuple = PART_LABELS

    @property
    def dof(self) -> int:
        return 3 * len(self.joints)


@dataclass(frozen=True, eq=False)
class PosedHuman:
    source: HumanModel
    theta: np.ndarray
    root_pose: RootPose
    world_segment_transforms: Dict[str, np.ndarray]
    world_joint_positions: Dict[str, np.ndarray]
    clamped: bool = False
    _meshes: dict = field(default_factory=dict, repr=False)

    def world_mesh(self, label: str) -> TriangleMesh:
        if label not in self._meshes:
            self._meshes[label] = self.source.segments[label].mesh.transformed(self.world_segment_transforms[label])
        return self._meshes[label]

    def world_meshes(self) -> list[tuple[str, TriangleMesh]]:
        return [(label, self.world_mesh(label)) for label in PART_LABELS]

    def collision_shapes(self, labels: Optional[Sequence[str]] = None, head_as_capsule: bool = False) -> list:
        """Capsules per segment; the head is its exact mesh unless a bounding capsule is asked for."""
        shapes = []
        for label in labels or PART_LABELS:
            segment = self.source.segments[label]
            transform = self.world_segment_transforms[label]
            capsule = segment.capsule or (segment.envelope if head_as_capsule else None)
            if capsule is None:
                shapes.append(MeshShape(self.world_mesh(label), tag=label))
                continue
            start, end, radius = capsule
            shapes.append(
                Capsule(transform[:3, :3] @ start + transform[:3, 3], transform[:3, :3] @ end + transform[:3, 3], radius, tag=label)
            )
        return shapes


def _scale(beta: np.ndarray, spec: tuple) -> float:
    index, slope = spec
    return 1.0 + slope * float(beta[index])


def _bend_limits() -> np.ndarray:
    return np.array([[0.0, 0.0], [0.0, BEND_LIMIT], [0.0, 0.0]])


def _free_limits() -> np.ndarray:
    return np.array([[-math.pi, math.pi]] * 3)


def build_human(beta: Sequence[float]) -> HumanModel:
    """Scale the template body by the documented shape maps; beta[5:] has no effect."""
    beta = np.clip(np.asarray(beta, dtype=float), -2.0, 2.0)
    if beta.shape != (10,):
        raise ValueError("beta must have 10 coefficients")
    h = _scale(beta, HEIGHT_SCALE)
    limb = _scale(beta, LIMB_SCALE)
    girth = _scale(beta, GIRTH_SCALE)
    torso = _scale(beta, TORSO_SCALE)
    shoulder = _scale(beta, SHOULDER_SCALE)

    torso_length = TEMPLATE["torso_length"] * h * torso
    dims = {
        "upper_arm": (TEMPLATE["upper_arm_length"] * h * limb, TEMPLATE["upper_arm_radius"] * h * girth),
        "forearm": (TEMPLATE["forearm_length"] * h * limb, TEMPLATE["forearm_radius"] * h * girth),
        "thigh": (TEMPLATE["thigh_length"] * h * limb, TEMPLATE["thigh_radius"] * h * girth),
        "lower_leg": (TEMPLATE["lower_leg_length"] * h * limb, TEMPLATE["lower_leg_radius"] * h * girth),
    }
    shoulder_z = TEMPLATE["shoulder_height"] * h * torso
    shoulder_y = TEMPLATE["shoulder_offset"] * h * shoulder
    hip_y = TEMPLATE["hip_offset"] * h
    hip_z = TEMPLATE["hip_height"] * h
    head_axes = tuple(a * h for a in TEMPLATE["head_semi_axes"])
    head_center = np.array([0.0, 0.0, TEMPLATE["head_center"] * h])

    segments: Dict[str, Segment] = {}
    joints: Dict[str, JointSpec] = {}

    def add_capsule(label: str, parent_joint: Optional[str], start, end, radius: float):
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        segments[label] = Segment(label, parent_joint, capsule_mesh(start, end, radius), (start, end, radius))

    add_capsule("torso", None, (0.0, 0.0, 0.0), (0.0, 0.0, torso_length), TEMPLATE["torso_radius"] * h * girth)
    head_radius = max(head_axes[0], head_axes[1])
    head_half = np.array([0.0, 0.0, max(head_axes[2] - head_radius, 0.0)])
    segments["head"] = Segment(
        "head", "neck", ellipsoid_mesh(head_axes, head_center), envelope=(head_center - head_half, head_center + head_half, head_radius)
    )
    joints["neck"] = JointSpec("neck", "torso", "head", np.array([0.0, 0.0, torso_length]), np.eye(3), _free_limits())

    for side, sign in (("left", 1.0), ("right", -1.0)):
        upper_length, upper_radius = dims["upper_arm"]
        fore_length, fore_radius = dims["forearm"]
        thigh_length, thigh_radius = dims["thigh"]
        lower_length, lower_radius = dims["lower_leg"]

        joints[f"{side}_shoulder"] = JointSpec(
            f"{side}_shoulder", "torso", f"{side}_upper_arm", np.array([0.0, sign * shoulder_y, shoulder_z]), np.eye(3), _free_limits()
        )
        add_capsule(f"{side}_upper_arm", f"{side}_shoulder", (0.0, 0.0, 0.0), (0.0, 0.0, -upper_length), upper_radius)
        joints[f"{side}_elbow"] = JointSpec(
            f"{side}_elbow", f"{side}_upper_arm", f"{side}_forearm", np.array([0.0, 0.0, -upper_length]), ELBOW_FRAME.copy(), _bend_limits()
        )
        add_capsule(f"{side}_forearm", f"{side}_elbow", (0.0, 0.0, 0.0), (0.0, 0.0, -fore_length), fore_radius)

        joints[f"{side}_hip"] = JointSpec(
            f"{side}_hip", "torso", f"{side}_thigh", np.array([0.0, sign * hip_y, hip_z]), np.eye(3), _free_limits()
        )
        add_capsule(f"{side}_thigh", f"{side}_hip", (0.0, 0.0, 0.0), (0.0, 0.0, -thigh_length), thigh_radius)
        joints[f"{side}_knee"] = JointSpec(
            f"{side}_knee", f"{side}_thigh", f"{side}_lower_leg", np.array([0.0, 0.0, -thigh_length]), np.eye(3), _bend_limits()
        )
        add_capsule(f"{side}_lower_leg", f"{side}_knee", (0.0, 0.0, 0.0), (0.0, 0.0, -lower_length), lower_radius)

    endpoints = {
        "pelvis": ("torso", np.zeros(3)),
        "left_wrist": ("left_forearm", np.array([0.0, 0.0, -dims["forearm"][0]])),
        "right_wrist": ("right_forearm", np.array([0.0, 0.0, -dims["forearm"][0]])),
        "left_ankle": ("left_lower_leg", np.array([0.0, 0.0, -dims["lower_leg"][0]])),
        "right_ankle": ("right_lower_leg", np.array([0.0, 0.0, -dims["lower_leg"][0]])),
        "head_top": ("head", np.array([0.0, 0.0, TEMPLATE["head_top"] * h])),
    }

    ordered_joints = {name: joints[name] for name in JOINT_ORDER}
    ordered_segments = {label: segments[label] for label in PART_LABELS}
    if 3 * len(ordered_joints) != ARTICULATED_DOF:
        raise AssertionError("human model must have 27 articulated degrees of freedom")

    model = HumanModel(tuple(float(b) for b in beta), ordered_segments, ordered_joints, endpoints)
    _, positions = forward_kinematics(model, np.zeros(ARTICULATED_DOF), np.eye(4))
    model.template_joint_positions.update(positions)
    return model


def clamp_theta(model: HumanModel, theta: Sequence[float]) -> tuple[np.ndarray, bool]:
    theta = np.asarray(theta, dtype=float).reshape(len(model.joints), 3)
    lower = np.stack([model.joints[name].limits[:, 0] for name in model.joints])
    upper = np.stack([model.joints[name].limits[:, 1] for name in model.joints])
    clamped = np.clip(theta, lower, upper)
    return clamped.reshape(-1), bool(np.any(clamped != theta))


def forward_kinematics(model: HumanModel, theta: np.ndarray, root: np.ndarray) -> tuple[dict, dict]:
    """World transforms of every segment and world positions of every queryable joint."""
    theta = np.asarray(theta, dtype=float).reshape(len(model.joints), 3)
    transforms = {"torso": root}
    positions = {}
    for index, (name, joint) in enumerate(model.joints.items()):
        parent = transforms[joint.parent_segment]
        local = make_transform(joint.frame, joint.offset) @ make_transform(Rotation.from_rotvec(theta[index]).as_matrix())
        transforms[joint.child_segment] = parent @ local
        positions[name] = transforms[joint.child_segment][:3, 3].copy()
    for name, (segment, point) in model.endpoints.items():
        transform = transforms[segment]
        positions[name] = transform[:3, :3] @ point + transform[:3, 3]
    return transforms, positions


def pose_human(model: HumanModel, theta: Sequence[float], root_pose: RootPose = RootPose()) -> PosedHuman:
    theta, clamped = clamp_theta(model, theta)
    if clamped:
        logger.warning("Pose components outside joint limits were clamped")
    root = pose_xyz_yaw(root_pose.position, root_pose.yaw)
    transforms, positions = forward_kinematics(model, theta, root)
    return PosedHuman(model, theta, root_pose, transforms, positions, clamped)


def joint_position(posed: PosedHuman, joint_name: str) -> np.ndarray:
    if joint_name not in posed.world_joint_positions:
        raise UnknownJoint(f"unknown joint: {joint_name}", joint=joint_name)
    return posed.world_joint_positions[joint_name].copy()


def _fmt(values) -> str:
    return " ".join(format(float(v), ".10g") for v in values)


def _segment_link(root: ET.Element, label: str) -> None:
    link = ET.SubElement(root, "link", name=label)
    inertial = ET.SubElement(link, "inertial")
    ET.SubElement(inertial, "mass", value="1")
    ET.SubElement(inertial, "inertia", ixx="1", ixy="0", ixz="0", iyy="1", iyz="0", izz="1")
    for tag in ("visual", "collision"):
        element = ET.SubElement(link, tag)
        geometry = ET.SubElement(element, "geometry")
        ET.SubElement(geometry, "mesh", filename=f"meshes/{label}.ply")


def urdf_document(model: HumanModel) -> bytes:
    """Each ball joint becomes x, y, z revolute joints chained through massless links."""
    root = ET.Element("robot", name="human")
    _segment_link(root, "torso")
    for name, joint in model.joints.items():
        x_link, y_link = f"{name}_x_link", f"{name}_y_link"
        ET.SubElement(root, "link", name=x_link)
        ET.SubElement(root, "link", name=y_link)
        _segment_link(root, joint.child_segment)
        chain = (
            ("x", joint.parent_segment, x_link, joint.offset, Rotation.from_matrix(joint.frame).as_euler("xyz"), "1 0 0", joint.limits[0]),
            ("y", x_link, y_link, np.zeros(3), np.zeros(3), "0 1 0", joint.limits[1]),
            ("z", y_link, joint.child_segment, np.zeros(3), np.zeros(3), "0 0 1", joint.limits[2]),
        )
        for axis_name, parent, child, xyz, rpy, axis, limits in chain:
            element = ET.SubElement(root, "joint", name=f"{name}_{axis_name}", type="revolute")
            ET.SubElement(element, "parent", link=parent)
            ET.SubElement(element, "child", link=child)
            ET.SubElement(element, "origin", xyz=_fmt(xyz), rpy=_fmt(rpy))
            ET.SubElement(element, "axis", xyz=axis)
            ET.SubElement(element, "limit", lower=_fmt([limits[0]]), upper=_fmt([limits[1]]), effort="0", velocity="0")
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"


def export_urdf(model: HumanModel, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_bytes(urdf_document(model))
    except OSError as e:
        raise IOFailure(f"cannot write URDF: {e}", path=str(path)) from e
    return path


def export_segment_meshes(model: HumanModel, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for label, segment in model.segments.items():
        target = directory / f"{label}.ply"
        export_mesh_ply(segment.mesh, target)
        written.append(target)
    return written


@lru_cache(maxsize=1)
def load_pose_presets(path: str = str(ASSETS_DIR / "poses.json")) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def theta_from_preset(name: str) -> np.ndarray:
    preset = load_pose_presets()[name]
    theta = np.zeros((len(JOINT_ORDER), 3))
    for index, joint in enumerate(JOINT_ORDER):
        theta[index] = preset.get(joint, (0.0, 0.0, 0.0))
    return theta.reshape(-1)


def seated_theta() -> np.ndarray:
    return theta_from_preset("seated")


def human_params_from_spec(spec: ScenarioSpec, seed: int) -> BodyParams:
    """Map the human description to shape coefficients and the posture to a perturbed preset."""
    if spec.posture not in POSTURE_PRESETS:
        raise UnsupportedPosture(f"no pose preset for posture {spec.posture}", posture=spec.posture)
    rng = np.random.default_rng(seed)
    beta = np.zeros(10)
    beta[:5] = rng.normal(0.0, 0.4, 5)
    description = spec.human_description.lower()
    for keyword, (index, value) in SHAPE_KEYWORDS.items():
        if keyword in description:
            beta[index] += value
    beta = np.clip(beta, -2.0, 2.0)

    theta = theta_from_preset(POSTURE_PRESETS[spec.posture]).reshape(len(JOINT_ORDER), 3)
    noise = rng.uniform(-POSE_NOISE, POSE_NOISE, theta.shape)
    for index, joint in enumerate(JOINT_ORDER):
        if joint in SUPPORTING_JOINTS:
            continue
        if joint in BEND_JOINTS:
            theta[index, 1] += noise[index, 1]
        else:
            theta[index] += noise[index]
    return BodyParams(beta=tuple(beta.tolist()), theta=tuple(theta.reshape(-1).tolist()))
