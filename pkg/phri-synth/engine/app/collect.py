"""
Demonstration collection: build a world for each attempt, plan the motion
program through it, render per-frame observations and persist accepted
episodes. Rejected attempts are returned as values and logged to
``rejections/``.
"""

import hashlib
import logging
import math
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from .body import HumanModel, build_human, human_params_from_spec
from .dataset import (
    FLAGS_DTYPE,
    FORMAT_VERSION,
    EpisodeMeta,
    EpisodeRecord,
    atomic_write,
    check_episode,
    delta_action,
    pose_vector,
    read_episode,
    write_episode,
    write_manifest,
)
from .errors import (
    PLANNER_ERRORS,
    CorruptFile,
    EmptyCloud,
    IKNoConverge,
    InsufficientPoints,
    IOFailure,
    LayoutInfeasible,
    NoAffordance,
    NoFreeSpace,
    PhriError,
    PlacementCollision,
    RobotPlacementFailed,
    RuntimeTypeError,
    UnrecoverableConfig,
    UnsupportedPosture,
)
from .geometry import pose_xyz_yaw
from .logger import get_logger, log_episode, log_exception, log_execution_time
from .motion import GroundingContext, MotionProgram, bundled_program, eval_program, format_program
from .planning import (
    JointPath,
    PlanningWorld,
    RRTParams,
    compile_trajectory,
    ik_feasibility,
    waypoint_pose,
)
from .robot import RobotModel, load_robot
from .scene import (
    PlacementResult,
    RobotPlacement,
    compute_seat_anchor,
    obstacle_boxes,
    place_human,
    place_robot,
    placement_pool,
    sample_layout,
)
from .schemas import (
    BodyParams,
    CameraIntrinsics,
    DatasetManifest,
    FurnitureEntry,
    GlobalConfig,
    ManifestCounts,
    ManifestEpisode,
    ProviderConfig,
    RandomizationRanges,
    ScenarioSpec,
    SceneLayout,
    Trajectory,
)
from .seeding import derive_seed, episode_seed, frame_seed
from .sim import CLOUD_SIZE, RenderWorld, downsample, fuse_policy_input, gripper_points, observe, static_world

logger = get_logger(__name__)

RejectionReason = Literal["kinematic_infeasibility", "insufficient_points", "placement_failure"]
PLACEMENT_ERRORS = (
    LayoutInfeasible,
    NoAffordance,
    NoFreeSpace,
    PlacementCollision,
    RobotPlacementFailed,
    UnsupportedPosture,
)
BATHE_WORDS = ("bath", "wash", "wipe", "clean")
IDENTITY_ACTION = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])


class EpisodeRejection(BaseModel):
    episode: str
    attempt: int = 0
    reason: RejectionReason
    stage: str
    index: Optional[int] = None
    detail: str = ""


@dataclass(frozen=True)
class EpisodeOptions:
    intrinsics: CameraIntrinsics = CameraIntrinsics()
    randomization: RandomizationRanges = RandomizationRanges()
    frame_rate: float = 10.0
    speed_mode: str = "tool_speed"
    downsample_method: str = "uniform"
    rrt: RRTParams = RRTParams()

    @classmethod
    def from_config(cls, config: GlobalConfig, downsample_method: str = "uniform") -> "EpisodeOptions":
        return cls(
            intrinsics=config.camera,
            randomization=config.randomization,
            frame_rate=config.frame_rate,
            speed_mode=config.speed_mode,
            downsample_method=downsample_method,
        )


def reference_task(spec: ScenarioSpec) -> str:
    """``bathe`` for washing-style task descriptions, ``scratch`` otherwise."""
    description = spec.task_description.lower()
    return "bathe" if any(word in description for word in BATHE_WORDS) else "scratch"


def program_hash(program: MotionProgram) -> str:
    return hashlib.sha256(format_program(program).encode("utf-8")).hexdigest()


def coverage_points(ctx: GroundingContext) -> np.ndarray:
    """The five observed-surface points, elbow to wrist, that a bathing sweep must reach."""
    traj = eval_program(bundled_program("coverage"), ctx, 0)
    return np.array([waypoint.position for waypoint in traj.waypoints])


# Worlds

@dataclass(eq=False)
class EpisodeWorld:
    """Everything fixed for one attempt before the arm moves."""

    layout: SceneLayout
    support: FurnitureEntry
    human: HumanModel
    params: BodyParams
    placement: PlacementResult
    robot: RobotPlacement
    model: RobotModel
    static: RenderWorld
    allowed_parts: tuple
    planning: PlanningWorld = field(init=False)

    def __post_init__(self):
        self.planning = PlanningWorld(
            furniture=tuple(obstacle_boxes(self.layout)),
            human=tuple(self.placement.posed.collision_shapes()),
            allowed_parts=frozenset(self.allowed_parts),
        )

    @property
    def q_init(self) -> np.ndarray:
        return self.robot.q_init

    def camera_pose(self, q) -> np.ndarray:
        """The camera rides on the base, so its world pose follows the base joints."""
        return pose_xyz_yaw((q[0], q[1], 0.0), q[2]) @ self.robot.camera_in_base

    def observe(self, q, intrinsics: CameraIntrinsics = CameraIntrinsics()):
        return observe(self.static, self.model, q, self.camera_pose(q), self.allowed_parts, intrinsics)

    def grounding(self, q, intrinsics: CameraIntrinsics = CameraIntrinsics()) -> GroundingContext:
        cloud = self.observe(q, intrinsics).cloud
        return GroundingContext(self.placement.posed, cloud.points, cloud.normals, self.camera_pose(q))


def support_anchor(layout: SceneLayout, entry: FurnitureEntry, posture: str) -> np.ndarray:
    if entry.id == "floor":
        return np.array([layout.room.width / 2.0, layout.room.depth / 2.0, 0.0])
    return compute_seat_anchor(entry, posture)


@log_execution_time()
def build_world(
    layout: SceneLayout,
    entry: FurnitureEntry,
    params: BodyParams,
    placement_program: MotionProgram,
    model: RobotModel,
    randomization_seed: int,
    allowed_parts: Sequence[str],
    posture: str = "sitting",
    ranges: RandomizationRanges = RandomizationRanges(),
) -> EpisodeWorld:
    human = cached_human(tuple(params.beta))
    placement = place_human(layout, entry, human, params.theta, support_anchor(layout, entry, posture))
    robot = place_robot(layout, placement, placement_program, model, randomization_seed, ranges)
    placement.robot = robot
    placement.randomization_applied = robot.randomization_applied
    return EpisodeWorld(
        layout=layout,
        support=entry,
        human=human,
        params=params,
        placement=placement,
        robot=robot,
        model=model,
        static=static_world(layout, placement.posed),
        allowed_parts=tuple(allowed_parts),
    )


@lru_cache(maxsize=32)
def cached_human(beta: tuple) -> HumanModel:
    return build_human(beta)


# Frame sampling

@dataclass(frozen=True)
class FrameSamples:
    configurations: np.ndarray  # (F, dof)
    step_index: np.ndarray  # (F,) path step at or after each frame time
    times: np.ndarray


def sample_frames(path: JointPath, frame_rate: float) -> FrameSamples:
    """Frames every ``1 / frame_rate`` seconds plus one on the final configuration."""
    start, end = float(path.timestamps[0]), float(path.timestamps[-1])
    count = int(math.floor((end - start) * frame_rate + 1e-9)) + 1
    times = start + np.arange(count) / frame_rate
    if end - times[-1] > 1e-9:
        times = np.append(times, end)
    index = np.clip(np.searchsorted(path.timestamps, times, side="left"), 0, len(path) - 1)
    previous = np.maximum(index - 1, 0)
    span = path.timestamps[index] - path.timestamps[previous]
    alpha = np.where(span > 0, (times - path.timestamps[previous]) / np.where(span > 0, span, 1.0), 1.0)
    alpha = np.clip(alpha, 0.0, 1.0)
    configurations = path.configurations[previous] + alpha[:, None] * (
        path.configurations[index] - path.configurations[previous]
    )
    return FrameSamples(configurations, index, times)


# Episodes

def _rejection(hex_id: str, attempt: int, reason: str, stage: str, index: Optional[int], detail: str) -> EpisodeRejection:
    return EpisodeRejection(episode=hex_id, attempt=attempt, reason=reason, stage=stage, index=index, detail=detail)


def _planner_stage(exc: PhriError, traj: Trajectory) -> str:
    index = exc.details.get("waypoint")
    if index is None or index >= len(traj.waypoints):
        return "compile"
    return traj.waypoints[index].planner


@log_execution_time(level=logging.INFO)
def collect_episode(
    spec: ScenarioSpec,
    layout: SceneLayout,
    entry: FurnitureEntry,
    params: BodyParams,
    program: MotionProgram,
    model: RobotModel,
    seed: int,
    attempt: int = 0,
    options: EpisodeOptions = EpisodeOptions(),
    placement_program: Optional[MotionProgram] = None,
    task: Optional[str] = None,
    scene_id: str = "",
    human_id: str = "",
) -> Union[EpisodeRecord, EpisodeRejection]:
    """
    Run one attempt end to end. Placement failures, an IK screen failure and
    a frame with fewer than 1500 observed points come back as an
    :class:`EpisodeRejection`; any other error propagates.
    """
    hex_id = f"{seed:016x}"
    placement_program = placement_program or bundled_program("placement")
    randomization_seed = derive_seed(seed, "randomization")
    program_seed = derive_seed(seed, "program")

    try:
        world = build_world(
            layout,
            entry,
            params,
            placement_program,
            model,
            randomization_seed,
            spec.relevant_body_parts,
            spec.posture,
            options.randomization,
        )
    except (*PLACEMENT_ERRORS, EmptyCloud, RuntimeTypeError) as exc:
        return _rejection(hex_id, attempt, "placement_failure", "placement", None, exc.message)

    q_init = world.q_init
    initial = world.observe(q_init, options.intrinsics)
    if len(initial.cloud) < CLOUD_SIZE:
        return _rejection(
            hex_id, attempt, "insufficient_points", "observation", 0, f"{len(initial.cloud)} points observed"
        )
    ctx = GroundingContext(world.placement.posed, initial.cloud.points, initial.cloud.normals, world.camera_pose(q_init))
    try:
        traj = eval_program(program, ctx, program_seed)
    except (EmptyCloud, RuntimeTypeError) as exc:
        return _rejection(hex_id, attempt, "kinematic_infeasibility", "program", None, exc.message)

    try:
        ik_feasibility(model, traj, q_init)
    except IKNoConverge as exc:
        return _rejection(
            hex_id, attempt, "kinematic_infeasibility", "ik_screen", exc.details.get("waypoint"), exc.message
        )
    try:
        path = compile_trajectory(
            model, traj, world.planning, q_init, options.rrt, strict=True, speed_mode=options.speed_mode
        )
    except PLANNER_ERRORS as exc:
        return _rejection(
            hex_id, attempt, "kinematic_infeasibility", _planner_stage(exc, traj), exc.details.get("waypoint"), exc.message
        )

    task_name = task or reference_task(spec)
    samples = sample_frames(path, options.frame_rate)
    frames = len(samples.times)
    target = np.asarray(traj.target_point, dtype=float)
    tool_poses = np.array([model.tool_pose(q) for q in samples.configurations])
    obs = np.empty((frames, CLOUD_SIZE + 5, 6))
    for t, q in enumerate(samples.configurations):
        observation = initial if t == 0 and np.array_equal(q, q_init) else world.observe(q, options.intrinsics)
        try:
            cloud = downsample(observation.cloud, CLOUD_SIZE, frame_seed(seed, t), options.downsample_method)
        except InsufficientPoints as exc:
            return _rejection(hex_id, attempt, "insufficient_points", "observation", t, exc.message)
        obs[t] = fuse_policy_input(cloud.points, gripper_points(tool_poses[t]), target)

    phase = path.waypoint_index[samples.step_index]
    subgoal_points = np.array([gripper_points(waypoint_pose(w)) for w in traj.waypoints])
    actions = np.array([delta_action(tool_poses[t], tool_poses[t + 1]) for t in range(frames - 1)] + [IDENTITY_ACTION])
    flags = np.zeros(frames, dtype=FLAGS_DTYPE)
    flags["contact"] = path.contact[samples.step_index]
    flags["phase"] = phase

    meta = EpisodeMeta(
        episode=hex_id,
        task=task_name,
        attempt=attempt,
        seed_chain={
            "episode": hex_id,
            "randomization": f"{randomization_seed:016x}",
            "program": f"{program_seed:016x}",
        },
        scene_id=scene_id,
        human_id=human_id,
        program_hash=program_hash(program),
        robot_config_hash=model.config_hash,
        frames=frames,
        frame_rate=options.frame_rate,
        target_point=traj.target_point,
        initial_tool_pose=pose_vector(tool_poses[0]),
        coverage_points=[tuple(p) for p in coverage_points(ctx).tolist()] if task_name == "bathe" else None,
    )
    record = EpisodeRecord(meta, obs.astype("<f4"), subgoal_points[phase].astype("<f4"), actions.astype("<f4"), flags)
    problems = check_episode(record, tool_poses)
    if problems:
        raise CorruptFile(f"episode {hex_id} violates {', '.join(problems)}", episode=hex_id)
    return record


# Datasets

@lru_cache(maxsize=16)
def scene_variant(spec_json: str, provider_json: str, master_seed: int, index: int) -> tuple[SceneLayout, tuple]:
    """Layout of the ``index``-th scene and its pool of accessible supports."""
    spec = ScenarioSpec.model_validate_json(spec_json)
    provider = ProviderConfig.model_validate_json(provider_json)
    seed = derive_seed(master_seed, f"scene:{index}")
    layout = sample_layout(spec, seed, provider)
    layout, pool = placement_pool(layout, spec, provider, seed)
    return layout, tuple(pool)


@lru_cache(maxsize=64)
def human_variant(spec_json: str, master_seed: int, index: int) -> BodyParams:
    spec = ScenarioSpec.model_validate_json(spec_json)
    return human_params_from_spec(spec, derive_seed(master_seed, f"human:{index}"))


def variant_indices(attempt: int, scene_pool: int, human_pool: int) -> tuple[int, int]:
    return attempt % scene_pool, (attempt // scene_pool) % human_pool


@dataclass(frozen=True)
class CollectionJob:
    spec: ScenarioSpec
    program: MotionProgram
    placement_program: MotionProgram
    config: GlobalConfig
    task: str
    out_dir: str
    downsample_method: str = "uniform"


Outcome = Union[ManifestEpisode, EpisodeRejection]


def episode_dir(out_dir: Path, hex_id: str) -> Path:
    return out_dir / f"ep_{hex_id}"


def rejection_file(out_dir: Path, hex_id: str) -> Path:
    return out_dir / "rejections" / f"{hex_id}.json"


def _manifest_entry(meta: EpisodeMeta) -> ManifestEpisode:
    return ManifestEpisode(
        id=meta.episode, path=f"ep_{meta.episode}", attempt=meta.attempt, seed=meta.episode, digests=meta.digests
    )


def existing_outcome(out_dir: Path, hex_id: str) -> Optional[Outcome]:
    """Outcome left by an earlier run, or None when the attempt must be (re)computed."""
    rejected = rejection_file(out_dir, hex_id)
    if rejected.exists():
        try:
            return EpisodeRejection.model_validate_json(rejected.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            rejected.unlink(missing_ok=True)
    directory = episode_dir(out_dir, hex_id)
    if directory.exists():
        try:
            return _manifest_entry(read_episode(directory).meta)
        except PhriError as exc:
            logger.warning(f"Discarding incomplete episode {hex_id}: {exc.message}")
            shutil.rmtree(directory, ignore_errors=True)
    return None


def attempt_episode(job: CollectionJob, attempt: int) -> Union[EpisodeRecord, EpisodeRejection]:
    """Run attempt ``attempt`` of a job in memory, choosing its scene, support and body variants."""
    config = job.config
    seed = episode_seed(config.master_seed, attempt)
    scene_index, human_index = variant_indices(attempt, config.scene_pool_size, config.human_pool_size)
    spec_json = job.spec.model_dump_json()
    try:
        layout, pool = scene_variant(spec_json, config.provider.model_dump_json(), config.master_seed, scene_index)
        if not pool:
            raise NoAffordance(f"no accessible support for {job.spec.posture}", posture=job.spec.posture)
    except PLACEMENT_ERRORS as exc:
        return _rejection(f"{seed:016x}", attempt, "placement_failure", "scene", None, exc.message)
    return collect_episode(
        job.spec,
        layout,
        pool[seed % len(pool)],
        human_variant(spec_json, config.master_seed, human_index),
        job.program,
        load_robot(config.robot_config),
        seed,
        attempt,
        EpisodeOptions.from_config(config, job.downsample_method),
        job.placement_program,
        job.task,
        scene_id=f"scene_{scene_index:03d}",
        human_id=f"human_{human_index:03d}",
    )


def run_attempt(job: CollectionJob, attempt: int) -> Outcome:
    """Collect and persist one attempt; resumable runs reuse what is already on disk."""
    out_dir = Path(job.out_dir)
    config = job.config
    seed = episode_seed(config.master_seed, attempt)
    hex_id = f"{seed:016x}"
    previous = existing_outcome(out_dir, hex_id)
    if previous is not None:
        logger.debug(f"Reusing attempt {attempt} ({hex_id})")
        return previous

    start = time.perf_counter()
    result = attempt_episode(job, attempt)
    duration_ms = (time.perf_counter() - start) * 1000
    if isinstance(result, EpisodeRejection):
        atomic_write(rejection_file(out_dir, hex_id), (result.model_dump_json(indent=2) + "\n").encode("utf-8"))
        log_episode(hex_id, result.stage, result.reason, duration_ms, result.detail or "Episode rejected")
        logger.info(f"Attempt {attempt} ({hex_id}) rejected: {result.reason} at {result.stage}")
        return result
    meta = write_episode(result, episode_dir(out_dir, hex_id))
    log_episode(hex_id, "write", "accepted", duration_ms, f"{meta.frames} frames")
    logger.info(f"Attempt {attempt} ({hex_id}) accepted with {meta.frames} frames")
    return _manifest_entry(meta)


def _remove_outcome(out_dir: Path, outcome: Outcome) -> None:
    if isinstance(outcome, EpisodeRejection):
        rejection_file(out_dir, outcome.episode).unlink(missing_ok=True)
    else:
        shutil.rmtree(out_dir / outcome.path, ignore_errors=True)


def _sweep_stale(out_dir: Path, keep: set[str]) -> None:
    for directory in out_dir.glob("ep_*"):
        if directory.name[3:] not in keep:
            shutil.rmtree(directory, ignore_errors=True)
    for path in (out_dir / "rejections").glob("*.json"):
        if path.stem not in keep:
            path.unlink(missing_ok=True)


@log_execution_time(level=logging.INFO)
def collect_dataset(
    spec: ScenarioSpec,
    n_accepted: int,
    out_dir: str | Path,
    config: Optional[GlobalConfig] = None,
    workers: Optional[int] = None,
    resume: bool = False,
    program: Optional[MotionProgram] = None,
    placement_program: Optional[MotionProgram] = None,
    task: Optional[str] = None,
    downsample_method: str = "uniform",
    max_attempts: Optional[int] = None,
) -> DatasetManifest:
    """
    Attempt episodes in seed order until ``n_accepted`` are accepted.

    Workers run whole attempts in batches; outcomes are folded in attempt
    order, so the dataset does not depend on the worker count. Attempts past
    the last needed acceptance are discarded and the manifest is written last.
    """
    config = config or GlobalConfig()
    workers = workers or config.workers
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not resume:
        raise UnrecoverableConfig(f"output directory {out_dir} is not empty, resume to continue it", path=str(out_dir))
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IOFailure(f"cannot create output directory: {e}", path=str(out_dir)) from e

    task = task or reference_task(spec)
    job = CollectionJob(
        spec=spec,
        program=program or bundled_program(task),
        placement_program=placement_program or bundled_program("placement"),
        config=config,
        task=task,
        out_dir=str(out_dir),
        downsample_method=downsample_method,
    )
    max_attempts = max_attempts or max(20, 20 * n_accepted)

    outcomes: list[Outcome] = []
    accepted = 0
    attempt = 0
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while accepted < n_accepted:
            if attempt >= max_attempts:
                raise UnrecoverableConfig(
                    f"only {accepted} of {n_accepted} episodes accepted after {attempt} attempts",
                    accepted=accepted,
                    attempted=attempt,
                )
            batch = list(range(attempt, min(attempt + workers, max_attempts)))
            if executor is None:
                results = [run_attempt(job, index) for index in batch]
            else:
                results = list(executor.map(run_attempt, [job] * len(batch), batch))
            for result in results:
                if accepted >= n_accepted:
                    _remove_outcome(out_dir, result)
                    continue
                outcomes.append(result)
                accepted += isinstance(result, ManifestEpisode)
            attempt = batch[-1] + 1
    except Exception as exc:
        log_exception(logger, exc, "Collection stopped")
        raise
    finally:
        if executor is not None:
            executor.shutdown()

    _sweep_stale(out_dir, {outcome.id if isinstance(outcome, ManifestEpisode) else outcome.episode for outcome in outcomes})
    rejected: dict[str, int] = {}
    for outcome in outcomes:
        if isinstance(outcome, EpisodeRejection):
            rejected[outcome.reason] = rejected.get(outcome.reason, 0) + 1
    manifest = DatasetManifest(
        format_version=FORMAT_VERSION,
        task=spec.task_description,
        counts=ManifestCounts(attempted=len(outcomes), accepted=accepted, rejected=dict(sorted(rejected.items()))),
        episodes=sorted((o for o in outcomes if isinstance(o, ManifestEpisode)), key=lambda e: e.attempt),
        seeds={
            "master_seed": config.master_seed,
            "scene_pool_size": config.scene_pool_size,
            "human_pool_size": config.human_pool_size,
        },
    )
    write_manifest(manifest, out_dir)
    logger.info(f"Collected {accepted} episodes in {len(outcomes)} attempts into {out_dir}")
    return manifest
