"""``motion check``, ``motion eval`` and ``validate``."""

import argparse

from ..deps import emit, get_config, get_program
from ..errors import PhriError
from ..fixtures import seated_context, seated_world
from ..logger import get_logger
from ..metrics import trial_seed, validate_program
from ..motion import check_program, eval_program
from ..schemas import ValidationReport

logger = get_logger(__name__)


def motion_check(args: argparse.Namespace) -> int:
    report = check_program(get_program(args))
    emit(report)
    return 0 if report.ok else 1


def motion_eval(args: argparse.Namespace) -> int:
    program = get_program(args)
    ctx = seated_context(args.world_seed, args.randomized)
    emit(eval_program(program, ctx, args.seed))
    return 0


def validate(args: argparse.Namespace) -> int:
    """Validate a program over seeded, randomized placements of the seated world."""
    config = get_config(args)
    program = get_program(args)
    reports = []
    for trial in range(args.trials):
        seed = trial_seed(config.master_seed, trial)
        try:
            report = validate_program(program, seated_world(seed, True), seed)
        except PhriError as exc:
            logger.warning(f"Trial {trial} could not be executed: {exc.message}")
            report = ValidationReport(verdict="fail", failed=[exc.code])
        reports.append(report)

    failures: dict[str, int] = {}
    for report in reports:
        for criterion in report.failed:
            failures[criterion] = failures.get(criterion, 0) + 1
    passed = sum(report.verdict == "pass" for report in reports)
    emit(
        {
            "program": args.program,
            "trials": len(reports),
            "passed": passed,
            "failed": failures,
            "reports": [report.model_dump(mode="json") for report in reports],
        }
    )
    return 0 if passed == len(reports) else 1


def register(subparsers) -> None:
    motion = subparsers.add_parser("motion", help="Motion programs")
    motion_sub = motion.add_subparsers(dest="action", required=True)
    check = motion_sub.add_parser("check", help="Statically check a motion program")
    check.add_argument("--program", required=True, help="Motion program (.mp)")
    check.set_defaults(func=motion_check)

    evaluate = motion_sub.add_parser("eval", help="Evaluate a motion program in the seated world")
    evaluate.add_argument("--program", required=True, help="Motion program (.mp)")
    evaluate.add_argument("--seed", type=int, default=0, help="Seed of the program's random draws")
    evaluate.add_argument("--world-seed", type=int, default=0, help="Randomization seed of the robot placement")
    evaluate.add_argument("--randomized", action="store_true", help="Apply domain randomization to the placement")
    evaluate.set_defaults(func=motion_eval)

    check_trials = subparsers.add_parser("validate", help="Validate a program over seeded trials")
    check_trials.add_argument("--program", required=True, help="Motion program (.mp)")
    check_trials.add_argument("--trials", type=int, default=20, help="Number of seeded trials")
    check_trials.add_argument("--seed", type=int, help="Master seed")
    check_trials.add_argument("--config", help="GlobalConfig JSON")
    check_trials.set_defaults(func=validate)
