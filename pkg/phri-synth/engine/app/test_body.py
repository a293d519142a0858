import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from app.body import (
    ARTICULATED_DOF,
    BEND_LIMIT,
    JOINT_ORDER,
    QUERY_JOINTS,
    SUPPORTING_JOINTS,
    TEMPLATE,
    build_human,
    export_segment_meshes,
    human_params_from_spec,
    joint_position,
    pose_human,
    theta_from_preset,
    urdf_document,
)
from app.collision import Capsule, MeshShape
from app.errors import UnknownJoint, UnsupportedPosture
from app.fixtures import SEATED_SPEC
from app.geometry import load_mesh_file
from app.schemas import PART_LABELS, RootPose


def _theta(**components) -> np.ndarray:
    theta = np.zeros((len(JOINT_ORDER), 3))
    for joint, value in components.items():
        theta[JOINT_ORDER.index(joint)] = value
    return theta.reshape(-1)


def test_model_has_27_dof_and_all_parts(template_human):
    assert template_human.dof == ARTICULATED_DOF == 27
    assert tuple(template_human.segments) == PART_LABELS


def test_template_wrist_hangs_below_shoulder(template_human):
    posed = pose_human(template_human, np.zeros(27))
    expected = np.array(
        [
            0.0,
            TEMPLATE["shoulder_offset"],
            TEMPLATE["shoulder_height"] - TEMPLATE["upper_arm_length"] - TEMPLATE["forearm_length"],
        ]
    )
    assert np.allclose(joint_position(posed, "left_wrist"), expected)
    assert np.allclose(joint_position(posed, "right_wrist"), expected * [1, -1, 1])


def test_elbow_bend_flexes_forearm_forward(template_human):
    posed = pose_human(template_human, _theta(left_elbow=(0.0, math.pi / 2, 0.0)))
    elbow = joint_position(posed, "left_elbow")
    wrist = joint_position(posed, "left_wrist")
    assert np.allclose(wrist - elbow, [TEMPLATE["forearm_length"], 0.0, 0.0], atol=1e-12)


def test_forward_kinematics_matches_hand_composed_chain(template_human):
    shoulder = np.array([0.3, -0.2, 0.5])
    bend = 0.8
    posed = pose_human(template_human, _theta(left_shoulder=shoulder, left_elbow=(0.0, bend, 0.0)))

    def rotvec(v):
        v = np.asarray(v, dtype=float)
        angle = np.linalg.norm(v)
        k = v / angle
        skew = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        return np.eye(3) + math.sin(angle) * skew + (1 - math.cos(angle)) * skew @ skew

    shoulder_position = np.array([0.0, TEMPLATE["shoulder_offset"], TEMPLATE["shoulder_height"]])
    upper = rotvec(shoulder)
    elbow = shoulder_position + upper @ [0.0, 0.0, -TEMPLATE["upper_arm_length"]]
    fore = upper @ np.diag([-1.0, -1.0, 1.0]) @ rotvec((0.0, bend, 0.0))
    wrist = elbow + fore @ [0.0, 0.0, -TEMPLATE["forearm_length"]]
    assert np.allclose(joint_position(posed, "left_elbow"), elbow, atol=1e-12)
    assert np.allclose(joint_position(posed, "left_wrist"), wrist, atol=1e-12)


def test_root_pose_moves_and_turns_the_body(template_human):
    base = pose_human(template_human, np.zeros(27))
    moved = pose_human(template_human, np.zeros(27), RootPose(position=(1.0, 2.0, 0.5), yaw=math.pi / 2))
    for joint in QUERY_JOINTS:
        x, y, z = joint_position(base, joint)
        assert np.allclose(joint_position(moved, joint), [1.0 - y, 2.0 + x, 0.5 + z], atol=1e-12)


def test_bend_joints_are_clamped(template_human):
    posed = pose_human(template_human, _theta(left_elbow=(0.4, 3.0, 0.0), right_knee=(0.0, -0.5, 0.0)))
    theta = posed.theta.reshape(len(JOINT_ORDER), 3)
    assert posed.clamped
    assert np.allclose(theta[JOINT_ORDER.index("left_elbow")], [0.0, BEND_LIMIT, 0.0])
    assert np.allclose(theta[JOINT_ORDER.index("right_knee")], [0.0, 0.0, 0.0])


def test_unknown_joint(template_human):
    posed = pose_human(template_human, np.zeros(27))
    with pytest.raises(UnknownJoint):
        joint_position(posed, "left_tail")


def test_beta_shape_and_range():
    with pytest.raises(ValueError):
        build_human(np.zeros(9))
    tall = build_human([1.0] + [0.0] * 9)
    base = build_human(np.zeros(10))
    ratio = tall.template_joint_positions["head_top"][2] / base.template_joint_positions["head_top"][2]
    assert ratio == pytest.approx(1.075)
    clipped = build_human([5.0] + [0.0] * 9)
    assert clipped.beta[0] == 2.0


def test_trailing_beta_has_no_effect(template_human):
    other = build_human([0.0] * 5 + [1.5] * 5)
    for joint in QUERY_JOINTS:
        assert np.allclose(other.template_joint_positions[joint], template_human.template_joint_positions[joint])


def test_segment_meshes_are_closed(template_human):
    for label, segment in template_human.segments.items():
        assert segment.mesh.boundary_edge_count() == 0, label
    start, end, radius = template_human.segments["left_forearm"].capsule
    length = np.linalg.norm(end - start)
    exact = math.pi * radius**2 * length + 4.0 / 3.0 * math.pi * radius**3
    volume = abs(template_human.segments["left_forearm"].mesh.signed_volume())
    assert 0.85 * exact < volume <= exact


def test_collision_shapes(seated_human):
    shapes = seated_human.collision_shapes()
    assert [shape.tag for shape in shapes] == list(PART_LABELS)
    assert isinstance(shapes[PART_LABELS.index("head")], MeshShape)
    assert all(isinstance(shape, Capsule) for shape in seated_human.collision_shapes(head_as_capsule=True))
    forearm = seated_human.collision_shapes(["left_forearm"])[0]
    assert np.allclose(forearm.start, joint_position(seated_human, "left_elbow"))
    assert np.allclose(forearm.end, joint_position(seated_human, "left_wrist"))


def test_urdf_has_three_revolutes_per_ball_joint(template_human):
    root = ET.fromstring(urdf_document(template_human))
    joints = root.findall("joint")
    assert len(joints) == 27
    assert all(joint.get("type") == "revolute" for joint in joints)
    links = {link.get("name") for link in root.findall("link")}
    assert set(PART_LABELS) <= links
    assert len(links) == len(PART_LABELS) + 2 * len(JOINT_ORDER)
    meshes = {mesh.get("filename") for mesh in root.iter("mesh")}
    assert meshes == {f"meshes/{label}.ply" for label in PART_LABELS}


def test_exported_meshes_reload(template_human, tmp_path):
    written = export_segment_meshes(template_human, tmp_path / "meshes")
    assert len(written) == len(PART_LABELS)
    reloaded = load_mesh_file(written[0])
    assert np.allclose(reloaded.vertices, template_human.segments[PART_LABELS[0]].mesh.vertices, atol=1e-6)


def test_params_from_spec_are_seeded():
    first = human_params_from_spec(SEATED_SPEC, 4)
    assert human_params_from_spec(SEATED_SPEC, 4) == first
    assert human_params_from_spec(SEATED_SPEC, 5) != first
    assert len(first.beta) == 10 and len(first.theta) == 27


def test_supporting_joints_keep_the_preset():
    preset = theta_from_preset("seated").reshape(len(JOINT_ORDER), 3)
    theta = np.asarray(human_params_from_spec(SEATED_SPEC, 9).theta).reshape(len(JOINT_ORDER), 3)
    for joint in SUPPORTING_JOINTS:
        index = JOINT_ORDER.index(joint)
        assert np.array_equal(theta[index], preset[index])


def test_shape_keywords_shift_beta():
    tall = SEATED_SPEC.model_copy(update={"human_description": "A tall adult sitting on a chair."})
    assert human_params_from_spec(tall, 2).beta[0] > human_params_from_spec(SEATED_SPEC, 2).beta[0]


def test_lying_posture_is_unsupported():
    lying = SEATED_SPEC.model_copy(update={"posture": "lying"})
    with pytest.raises(UnsupportedPosture):
        human_params_from_spec(lying, 0)
