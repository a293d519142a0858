"""
The bundled seated world: one chair in a 4 x 4 m living room, the template
body in the seated preset and the stretch-like robot parked beside the left
forearm. Tests, ``motion eval`` and ``validate`` run against it.
"""

from functools import lru_cache
from typing import Optional

from .body import seated_theta
from .collect import EpisodeWorld, build_world
from .motion import GroundingContext, bundled_program
from .robot import RobotModel, load_robot
from .schemas import (
    BodyParams,
    BoxGeometry,
    FurnitureEntry,
    FurniturePose,
    RandomizationRanges,
    Room,
    ScenarioSpec,
    SceneLayout,
)
from .settings import settings

SEATED_SPEC = ScenarioSpec(
    human_description="An adult of average build resting in an armless chair",
    environment_description="A small living room with a single chair",
    task_description="Scratch an itchy spot on the left forearm",
    posture="sitting",
    room_type="living_room",
    required_furniture=["chair"],
    relevant_body_parts=["left_forearm"],
)
BATHE_SPEC = SEATED_SPEC.model_copy(update={"task_description": "Wash the left forearm from elbow to wrist"})

NO_RANDOMIZATION = RandomizationRanges(
    base_position=0.0, base_yaw_deg=0.0, camera_position=0.0, camera_orientation_deg=0.0, arm_joint_fraction=0.0
)


def seated_layout() -> SceneLayout:
    chair = FurnitureEntry(
        id="chair_0",
        category="chair",
        geometry=BoxGeometry(extents=(0.5, 0.5, 0.45)),
        pose=FurniturePose(position=(1.5, 1.5, 0.225), yaw=0.0),
    )
    return SceneLayout(room=Room(width=4.0, depth=4.0), furniture=[chair])


def seated_params() -> BodyParams:
    return BodyParams(theta=tuple(seated_theta().tolist()))


def fixture_robot(path: Optional[str] = None) -> RobotModel:
    return load_robot(path or settings.ROBOT_CONFIG)


@lru_cache(maxsize=8)
def seated_world(randomization_seed: int = 0, randomized: bool = False) -> EpisodeWorld:
    """The seated world; without ``randomized`` the robot sits exactly where the placement program puts it."""
    layout = seated_layout()
    return build_world(
        layout,
        layout.furniture[0],
        seated_params(),
        bundled_program("placement"),
        fixture_robot(),
        randomization_seed,
        SEATED_SPEC.relevant_body_parts,
        SEATED_SPEC.posture,
        RandomizationRanges() if randomized else NO_RANDOMIZATION,
    )


@lru_cache(maxsize=8)
def seated_context(randomization_seed: int = 0, randomized: bool = False) -> GroundingContext:
    world = seated_world(randomization_seed, randomized)
    return world.grounding(world.q_init)
