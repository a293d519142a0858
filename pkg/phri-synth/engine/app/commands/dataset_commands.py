"""``collect``, ``eval``, ``render`` and ``stats``."""

import argparse
from pathlib import Path

import numpy as np

from ..collect import collect_dataset, reference_task
from ..dataset import dataset_stats, read_episode
from ..deps import emit, get_config, get_program, get_spec, output_path
from ..errors import UsageError
from ..metrics import evaluate_rollouts, summary_csv
from ..sim import CLOUD_SIZE, KIND_HUMAN, LabeledPointCloud, write_ply


def collect(args: argparse.Namespace) -> int:
    config = get_config(args)
    spec = get_spec(args)
    if args.n < 0:
        raise UsageError("--n must not be negative")
    manifest = collect_dataset(
        spec,
        args.n,
        args.out,
        config=config,
        workers=args.workers,
        resume=args.resume,
        program=get_program(args) if args.program else None,
        task=args.task or reference_task(spec),
        downsample_method=args.downsample,
    )
    emit({"out": args.out, "counts": manifest.counts.model_dump(), "episodes": [e.path for e in manifest.episodes]})
    return 0


def evaluate(args: argparse.Namespace) -> int:
    config = get_config(args)
    if bool(args.dataset) == bool(args.spec):
        raise UsageError("pass exactly one of --dataset or --spec")
    summary = evaluate_rollouts(
        args.task,
        args.trials,
        agent=args.agent,
        dataset=args.dataset,
        spec=get_spec(args) if args.spec else None,
        config=config,
        max_duration_s=args.max_duration,
    )
    if args.csv:
        output_path(args.csv, "--csv").write_text(summary_csv(summary), encoding="utf-8")
    emit(summary)
    return 0


def render(args: argparse.Namespace) -> int:
    """Write the policy-input cloud of one stored frame as a point cloud file."""
    record = read_episode(args.episode)
    if not 0 <= args.frame < record.meta.frames:
        raise UsageError(f"--frame must be in [0, {record.meta.frames})")
    points = record.obs[args.frame, :CLOUD_SIZE, :3].astype(float)
    cloud = LabeledPointCloud(
        points,
        np.full(CLOUD_SIZE, KIND_HUMAN, dtype=np.uint8),
        np.full(CLOUD_SIZE, -1, dtype=np.int16),
        np.zeros((CLOUD_SIZE, 3)),
    )
    out = write_ply(cloud, output_path(args.out, "--out"))
    emit({"out": str(out), "episode": record.meta.episode, "frame": args.frame, "points": CLOUD_SIZE})
    return 0


def stats(args: argparse.Namespace) -> int:
    report = dataset_stats(Path(args.dataset))
    emit(report)
    return 0 if report["digests_ok"] and report["reconciled"] else 1


def register(subparsers) -> None:
    gather = subparsers.add_parser("collect", help="Collect a demonstration dataset")
    gather.add_argument("--spec", required=True, help="Scenario JSON")
    gather.add_argument("--n", type=int, required=True, help="Number of accepted episodes to collect")
    gather.add_argument("--workers", type=int, help="Worker processes")
    gather.add_argument("--out", required=True, help="Dataset directory")
    gather.add_argument("--resume", action="store_true", help="Continue a partially collected dataset")
    gather.add_argument("--program", help="Motion program; defaults to the bundled program for the task")
    gather.add_argument("--task", choices=("scratch", "bathe"), help="Task; inferred from the scenario when omitted")
    gather.add_argument("--downsample", choices=("uniform", "fps"), default="uniform", help="Cloud downsampling")
    gather.add_argument("--seed", type=int, help="Master seed")
    gather.add_argument("--config", help="GlobalConfig JSON")
    gather.set_defaults(func=collect)

    rollouts = subparsers.add_parser("eval", help="Evaluate an agent by rollouts")
    rollouts.add_argument("--dataset", help="Dataset directory to replay")
    rollouts.add_argument("--spec", help="Scenario JSON for live seeded worlds")
    rollouts.add_argument("--task", choices=("scratch", "bathe"), required=True, help="Task metric")
    rollouts.add_argument("--trials", type=int, default=20, help="Number of trials")
    rollouts.add_argument("--agent", choices=("oracle", "null"), default="oracle", help="Agent to roll out")
    rollouts.add_argument("--max-duration", type=float, default=60.0, help="Rollout horizon in seconds")
    rollouts.add_argument("--csv", help="Also write per-trial rows as CSV")
    rollouts.add_argument("--seed", type=int, help="Master seed")
    rollouts.add_argument("--config", help="GlobalConfig JSON")
    rollouts.set_defaults(func=evaluate)

    draw = subparsers.add_parser("render", help="Export one frame's cloud as PLY")
    draw.add_argument("--episode", required=True, help="Episode directory")
    draw.add_argument("--frame", type=int, required=True, help="Frame index")
    draw.add_argument("--out", required=True, help="PLY file to write")
    draw.set_defaults(func=render)

    summary = subparsers.add_parser("stats", help="Dataset counts and digest verification")
    summary.add_argument("--dataset", required=True, help="Dataset directory")
    summary.set_defaults(func=stats)
