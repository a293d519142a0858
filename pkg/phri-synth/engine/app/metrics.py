"""
Task metrics, the trajectory validator and the rollout evaluation harness.

Rollouts are kinematic: an agent sees the episode's policy input and
answers with a tool-frame delta action that is composed onto the current
tool pose. An agent signals completion by returning ``None``.
"""

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence, Union

import numpy as np

from .collect import CollectionJob, EpisodeRejection, attempt_episode, reference_task
from .collision import COLLISION_TOLERANCE
from .dataset import EpisodeRecord, apply_action, pose_from_vector, read_episode, read_manifest
from .errors import PhriError
from .logger import get_logger, log_exception, log_execution_time
from .motion import MotionProgram, bundled_program, eval_program
from .planning import CONTACT_PENETRATION, JointPath, PlanningWorld, StepClearance, compile_trajectory, contact_log
from .schemas import EvaluationSummary, GlobalConfig, ScenarioSpec, TrialResult, Trajectory, ValidationReport
from .seeding import derive_seed

logger = get_logger(__name__)

D_THRESH = 0.010
COVERAGE_POINT_COUNT = 5
CONTACT_DISTANCE = CONTACT_PENETRATION
MIN_CONTACT_FRACTION = 0.90
MAX_DURATION_S = 60.0


# Metrics

@dataclass(frozen=True, eq=False)
class RolloutTrace:
    tool_positions: np.ndarray  # (T, 3)
    target: np.ndarray
    contact: Optional[np.ndarray] = None
    coverage_points: Optional[np.ndarray] = None

    def __post_init__(self):
        positions = np.asarray(self.tool_positions, dtype=float).reshape(-1, 3)
        if len(positions) < 1:
            raise ValueError("a rollout trace needs at least one frame")
        object.__setattr__(self, "tool_positions", positions)
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        if self.coverage_points is not None:
            points = np.asarray(self.coverage_points, dtype=float)
            if points.shape != (COVERAGE_POINT_COUNT, 3):
                raise ValueError(f"expected {COVERAGE_POINT_COUNT} coverage points, got shape {points.shape}")
            object.__setattr__(self, "coverage_points", points)


def min_distance(positions: np.ndarray, point) -> float:
    return float(np.min(np.linalg.norm(positions - np.asarray(point, dtype=float), axis=1)))


def scratch_success(trace: RolloutTrace, d_thresh: float = D_THRESH) -> tuple[float, bool]:
    """Closest approach of the tool to the target and whether it falls strictly below ``d_thresh``."""
    d = min_distance(trace.tool_positions, trace.target)
    return d, d < d_thresh


def bathe_coverage(trace: RolloutTrace, d_thresh: float = D_THRESH) -> float:
    """Percentage of coverage points the tool passed strictly closer than ``d_thresh``."""
    if trace.coverage_points is None:
        raise ValueError("bathe coverage needs coverage points")
    reached = [min_distance(trace.tool_positions, point) < d_thresh for point in trace.coverage_points]
    return 100.0 * sum(reached) / len(reached)


# Validation

def validate_trajectory(traj: Trajectory, executed: JointPath, log: Sequence[StepClearance]) -> ValidationReport:
    """Check planner use, contact maintenance over the contact phase and incidental link contact."""
    failed: list[str] = []
    offending: dict[str, list[int]] = {}

    misuse = [i for i, w in enumerate(traj.waypoints) if w.contact and w.planner == "rrt"]
    if misuse:
        failed.append("planner_misuse")
        offending["planner_misuse"] = misuse

    contact_steps = np.flatnonzero(executed.contact)
    distances = np.array([entry.tool_allowed for entry in log])
    fraction = 1.0
    if contact_steps.size:
        touching = distances[contact_steps] <= CONTACT_DISTANCE
        fraction = float(np.mean(touching))
        if fraction < MIN_CONTACT_FRACTION:
            failed.append("insufficient_contact")
            offending["insufficient_contact"] = [int(i) for i in contact_steps[~touching]]

    links = np.array([entry.link_human for entry in log])
    brushing = np.flatnonzero(links < -COLLISION_TOLERANCE)
    if brushing.size:
        failed.append("incidental_contact")
        offending["incidental_contact"] = [int(i) for i in brushing]

    return ValidationReport(
        verdict="fail" if failed else "pass", failed=failed, contact_fraction=fraction, offending=offending
    )


@log_execution_time()
def validate_program(program: MotionProgram, world, seed: int, inflate: Optional[dict] = None) -> ValidationReport:
    """
    Evaluate ``program`` in an episode world, execute it without contact
    enforcement and validate the result. Planner misuse is reported from the
    program alone, without executing it.
    """
    ctx = world.grounding(world.q_init)
    traj = eval_program(program, ctx, seed)
    misuse = [i for i, w in enumerate(traj.waypoints) if w.contact and w.planner == "rrt"]
    if misuse:
        return ValidationReport(verdict="fail", failed=["planner_misuse"], offending={"planner_misuse": misuse})
    planning = world.planning
    if inflate:
        planning = PlanningWorld(planning.furniture, planning.human, planning.allowed_parts, dict(inflate))
    path = compile_trajectory(world.model, traj, planning, world.q_init, strict=False)
    return validate_trajectory(traj, path, contact_log(world.model, path, planning))


# Agents and rollouts

class Agent(Protocol):
    name: str

    def reset(self, observation: np.ndarray) -> None: ...

    def act(self, observation: np.ndarray) -> Optional[np.ndarray]: ...


class OracleAgent:
    """Replays the delta actions recorded for the episode's planned waypoints."""

    name = "oracle"

    def __init__(self, actions: np.ndarray):
        self.actions = np.asarray(actions, dtype=float)
        self.step = 0

    def reset(self, observation: np.ndarray) -> None:
        self.step = 0

    def act(self, observation: np.ndarray) -> Optional[np.ndarray]:
        if self.step >= len(self.actions) - 1:
            return None
        action = self.actions[self.step]
        self.step += 1
        return action


class NullAgent:
    """Never moves and never declares completion."""

    name = "null"

    def reset(self, observation: np.ndarray) -> None:
        pass

    def act(self, observation: np.ndarray) -> Optional[np.ndarray]:
        return np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])


AGENTS: dict[str, Callable[[EpisodeRecord], Agent]] = {
    "oracle": lambda record: OracleAgent(record.actions),
    "null": lambda record: NullAgent(),
}


def rollout(record: EpisodeRecord, agent: Agent, max_duration_s: float = MAX_DURATION_S) -> tuple[RolloutTrace, str]:
    """Run ``agent`` from the episode's first tool pose; returns the trace and how it ended."""
    max_steps = int(round(max_duration_s * record.meta.frame_rate))
    pose = pose_from_vector(record.meta.initial_tool_pose)
    positions = [pose[:3, 3].copy()]
    agent.reset(record.obs[0])
    terminated = "max_duration"
    for step in range(max_steps):
        action = agent.act(record.obs[min(step, len(record.obs) - 1)])
        if action is None:
            terminated = "completed"
            break
        pose = apply_action(pose, action)
        positions.append(pose[:3, 3].copy())
    trace = RolloutTrace(
        tool_positions=np.array(positions),
        target=np.asarray(record.meta.target_point),
        coverage_points=None if record.meta.coverage_points is None else np.asarray(record.meta.coverage_points),
    )
    return trace, terminated


def score_trial(trial: int, record: EpisodeRecord, agent: Agent, task: str, max_duration_s: float) -> TrialResult:
    trace, terminated = rollout(record, agent, max_duration_s)
    distance, success = scratch_success(trace)
    coverage = bathe_coverage(trace) if task == "bathe" and trace.coverage_points is not None else None
    return TrialResult(
        trial=trial,
        episode=record.meta.episode,
        accepted=True,
        distance=distance,
        success=success,
        coverage=coverage,
        frames=len(trace.tool_positions),
        terminated=terminated,
    )


def summarize(task: str, agent: str, trials: list[TrialResult], max_duration_s: float) -> EvaluationSummary:
    distances = [t.distance for t in trials if t.distance is not None]
    coverage = [t.coverage if t.coverage is not None else 0.0 for t in trials]
    return EvaluationSummary(
        task=task,
        agent=agent,
        trials=trials,
        mean_success=100.0 * sum(bool(t.success) for t in trials) / len(trials) if trials else None,
        mean_distance=float(np.mean(distances)) if distances else None,
        mean_coverage=float(np.mean(coverage)) if task == "bathe" and trials else None,
        max_duration_s=max_duration_s,
    )


def _failed_trial(trial: int, episode: str, task: str, terminated: str) -> TrialResult:
    return TrialResult(
        trial=trial,
        episode=episode,
        accepted=False,
        success=False,
        coverage=0.0 if task == "bathe" else None,
        terminated=terminated,
    )


@log_execution_time(level=logging.INFO)
def evaluate_rollouts(
    task: str,
    n_trials: int,
    agent: str = "oracle",
    dataset: Optional[Union[str, Path]] = None,
    spec: Optional[ScenarioSpec] = None,
    config: Optional[GlobalConfig] = None,
    program: Optional[MotionProgram] = None,
    max_duration_s: float = MAX_DURATION_S,
) -> EvaluationSummary:
    """
    Roll ``agent`` out over the first ``n_trials`` episodes of a dataset, or
    over ``n_trials`` live seeded worlds built from ``spec`` when no dataset
    is given. Live worlds that fail to produce an episode count as failures.
    """
    make_agent = AGENTS[agent]
    trials: list[TrialResult] = []
    if dataset is not None:
        manifest = read_manifest(dataset)
        for index, entry in enumerate(manifest.episodes[:n_trials]):
            record = read_episode(Path(dataset) / entry.path)
            trials.append(score_trial(index, record, make_agent(record), task, max_duration_s))
        return summarize(task, agent, trials, max_duration_s)

    if spec is None:
        raise ValueError("live evaluation needs a scenario spec")
    config = config or GlobalConfig()
    job = CollectionJob(
        spec=spec,
        program=program or bundled_program(task),
        placement_program=bundled_program("placement"),
        config=config,
        task=task or reference_task(spec),
        out_dir="",
    )
    for index in range(n_trials):
        try:
            outcome = attempt_episode(job, index)
        except PhriError as exc:
            log_exception(logger, exc, f"Trial {index} failed")
            trials.append(_failed_trial(index, "", task, exc.code))
            continue
        if isinstance(outcome, EpisodeRejection):
            trials.append(_failed_trial(index, outcome.episode, task, outcome.reason))
            continue
        trials.append(score_trial(index, outcome, make_agent(outcome), task, max_duration_s))
    return summarize(task, agent, trials, max_duration_s)


def summary_csv(summary: EvaluationSummary) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["trial", "episode", "accepted", "distance", "success", "coverage", "frames", "terminated"])
    for trial in summary.trials:
        writer.writerow(
            [
                trial.trial,
                trial.episode,
                int(trial.accepted),
                "" if trial.distance is None else f"{trial.distance:.6f}",
                "" if trial.success is None else int(trial.success),
                "" if trial.coverage is None else f"{trial.coverage:.1f}",
                trial.frames,
                trial.terminated,
            ]
        )
    return buffer.getvalue()


def trial_seed(master_seed: int, trial: int) -> int:
    return derive_seed(master_seed, f"trial:{trial}")
