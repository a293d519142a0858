import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .settings import settings

PART_LABELS = (
    "head",
    "torso",
    "left_upper_arm",
    "right_upper_arm",
    "left_forearm",
    "right_forearm",
    "left_thigh",
    "right_thigh",
    "left_lower_leg",
    "right_lower_leg",
)

Posture = Literal["sitting", "standing", "lying"]
Vec3 = Tuple[float, float, float]
Quat = Tuple[float, float, float, float]


# Scenario specification

class ScenarioSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    human_description: str
    environment_description: str
    task_description: str
    posture: Posture
    room_type: str
    required_furniture: List[str]
    relevant_body_parts: List[str] = Field(..., min_length=1)
    seed: int = Field(0, ge=0, lt=2**64)

    @field_validator("relevant_body_parts")
    @classmethod
    def parts_are_known(cls, parts: List[str]) -> List[str]:
        unknown = [part for part in parts if part not in PART_LABELS]
        if unknown:
            raise ValueError(f"unknown body part labels: {unknown}")
        return parts


class ProviderConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["http", "fixture", "procedural"] = "procedural"
    endpoint_url: str = settings.LLM_ENDPOINT
    model_name: str = settings.LLM_MODEL
    api_key_env_var: str = "OPENAI_API_KEY"
    fixture_path: str = settings.FIXTURES_DIR
    max_retries: int = Field(settings.PROVIDER_MAX_RETRIES, ge=0)
    timeout: float = Field(settings.PROVIDER_TIMEOUT, gt=0)
    backoff_base: float = Field(settings.PROVIDER_BACKOFF_BASE, ge=0)
    backoff_factor: float = Field(settings.PROVIDER_BACKOFF_FACTOR, ge=1)

    @model_validator(mode="after")
    def check_kind_requirements(self) -> "ProviderConfig":
        if self.kind == "http" and not self.endpoint_url:
            raise ValueError("http provider requires endpoint_url")
        if self.kind == "fixture" and not Path(self.fixture_path).exists():
            raise ValueError(f"fixture_path does not exist: {self.fixture_path}")
        return self


# Human body

class RootPose(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: Vec3 = (0.0, 0.0, 0.0)
    yaw: float = 0.0


class BodyParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    beta: Tuple[float, ...] = Field(default=(0.0,) * 10)
    theta: Tuple[float, ...] = Field(default=(0.0,) * 27)
    root_pose: RootPose = RootPose()

    @field_validator("beta")
    @classmethod
    def clamp_beta(cls, beta: Tuple[float, ...]) -> Tuple[float, ...]:
        if len(beta) != 10:
            raise ValueError("beta must have 10 coefficients")
        return tuple(min(2.0, max(-2.0, float(b))) for b in beta)

    @field_validator("theta")
    @classmethod
    def clamp_theta(cls, theta: Tuple[float, ...]) -> Tuple[float, ...]:
        if len(theta) != 27:
            raise ValueError("theta must have 27 components")
        return tuple(min(math.pi, max(-math.pi, float(t))) for t in theta)


# Scene layout

class Room(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: float = Field(..., gt=0)
    depth: float = Field(..., gt=0)
    height: float = Field(2.7, gt=0)
    type: str = "living_room"


class BoxGeometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["box"] = "box"
    extents: Vec3

    @field_validator("extents")
    @classmethod
    def extents_positive(cls, extents: Vec3) -> Vec3:
        if min(extents) <= 0:
            raise ValueError("box extents must be strictly positive")
        return extents


class MeshGeometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["mesh"] = "mesh"
    path: str


class FurniturePose(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: Vec3
    yaw: float = 0.0


class FurnitureEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    category: str
    geometry: Union[BoxGeometry, MeshGeometry] = Field(..., discriminator="kind")
    pose: FurniturePose
    forward_axis: Vec3 = (1.0, 0.0, 0.0)

    @field_validator("forward_axis")
    @classmethod
    def forward_axis_unit(cls, axis: Vec3) -> Vec3:
        if abs(math.sqrt(sum(a * a for a in axis)) - 1.0) > 1e-9:
            raise ValueError("forward_axis must have unit norm")
        return axis


class SceneLayout(BaseModel):
    model_config = ConfigDict(frozen=True)

    room: Room
    furniture: List[FurnitureEntry] = []
    provenance: Literal["provider", "procedural", "completion-augmented"] = "procedural"

    @field_validator("furniture")
    @classmethod
    def unique_ids(cls, furniture: List[FurnitureEntry]) -> List[FurnitureEntry]:
        ids = [entry.id for entry in furniture]
        if len(ids) != len(set(ids)):
            raise ValueError("furniture ids must be unique")
        return furniture


# Motion programs

class Waypoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: Vec3
    orientation: Quat
    speed: float = Field(..., gt=0)
    contact: bool
    planner: Literal["rrt", "cartesian"]

    @field_validator("orientation")
    @classmethod
    def orientation_unit(cls, quat: Quat) -> Quat:
        if abs(math.sqrt(sum(q * q for q in quat)) - 1.0) > 1e-9:
            raise ValueError("orientation must be a unit quaternion")
        return quat


class Trajectory(BaseModel):
    model_config = ConfigDict(frozen=True)

    waypoints: List[Waypoint] = Field(..., min_length=1)
    target_point: Vec3
    seed: int = Field(0, ge=0, lt=2**64)

    @field_validator("target_point")
    @classmethod
    def target_finite(cls, point: Vec3) -> Vec3:
        if not all(math.isfinite(p) for p in point):
            raise ValueError("target_point must be finite")
        return point


class BasePose(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: Vec3
    focus: Vec3


# Observation and randomization

class CameraIntrinsics(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    width: int = 320
    height: int = 240
    fov_deg: float = 60.0
    fx: Optional[float] = None
    fy: Optional[float] = None
    cx: Optional[float] = None
    cy: Optional[float] = None
    near: float = 0.2
    far: float = 5.0

    @model_validator(mode="before")
    @classmethod
    def fill_pinhole(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        width = data.get("width", 320)
        height = data.get("height", 240)
        focal = (width / 2.0) / math.tan(math.radians(data.get("fov_deg", 60.0)) / 2.0)
        data.setdefault("fx", focal)
        data.setdefault("fy", data["fx"])
        data.setdefault("cx", width / 2.0)
        data.setdefault("cy", height / 2.0)
        return data


class RandomizationRanges(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    base_position: float = 0.10
    base_yaw_deg: float = 10.0
    camera_position: float = 0.02
    camera_orientation_deg: float = 3.0
    arm_joint_fraction: float = 0.10
    max_resamples: int = 20


# Dataset

class ManifestCounts(BaseModel):
    attempted: int = 0
    accepted: int = 0
    rejected: Dict[str, int] = {}


class ManifestEpisode(BaseModel):
    id: str
    path: str
    attempt: int
    seed: str
    digests: Dict[str, str]


class DatasetManifest(BaseModel):
    format_version: int
    task: str
    counts: ManifestCounts
    episodes: List[ManifestEpisode] = []
    seeds: Dict[str, int] = {}

    @model_validator(mode="after")
    def counts_reconcile(self) -> "DatasetManifest":
        if self.counts.accepted + sum(self.counts.rejected.values()) != self.counts.attempted:
            raise ValueError("accepted + rejected must equal attempted")
        return self


# Evaluation

class ValidationReport(BaseModel):
    verdict: Literal["pass", "fail"]
    failed: List[str] = []
    contact_fraction: float = 1.0
    offending: Dict[str, List[int]] = {}

    @model_validator(mode="after")
    def verdict_matches(self) -> "ValidationReport":
        if (self.verdict == "pass") != (not self.failed):
            raise ValueError("verdict must be pass exactly when no criterion failed")
        return self


class TrialResult(BaseModel):
    trial: int
    episode: str
    accepted: bool
    distance: Optional[float] = None
    success: Optional[bool] = None
    coverage: Optional[float] = None
    frames: int = 0
    terminated: str = "completed"


class EvaluationSummary(BaseModel):
    task: Literal["scratch", "bathe"]
    agent: str
    trials: List[TrialResult]
    mean_success: Optional[float] = None
    mean_distance: Optional[float] = None
    mean_coverage: Optional[float] = None
    max_duration_s: float = 60.0


# Command line configuration

class GlobalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    provider: ProviderConfig = ProviderConfig()
    robot_config: str = settings.ROBOT_CONFIG
    camera: CameraIntrinsics = CameraIntrinsics()
    randomization: RandomizationRanges = RandomizationRanges()
    frame_rate: float = Field(settings.FRAME_RATE, gt=0)
    output_dir: Optional[str] = None
    master_seed: int = Field(settings.MASTER_SEED, ge=0, lt=2**64)
    workers: int = Field(settings.WORKERS, ge=1)
    scene_pool_size: int = Field(settings.SCENE_POOL_SIZE, ge=1)
    human_pool_size: int = Field(settings.HUMAN_POOL_SIZE, ge=1)
    speed_mode: Literal["tool_speed", "joint_speed_cap"] = "tool_speed"

    @field_validator("robot_config")
    @classmethod
    def robot_config_exists(cls, path: str) -> str:
        if not Path(path).exists():
            raise ValueError(f"robot config not found: {path}")
        return path
