import argparse
import sys
from typing import Optional, Sequence

from .commands import COMMAND_MODULES
from .deps import emit
from .errors import PhriError, UsageError
from .logger import get_logger, log_exception

# Initialize logger
logger = get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phri-synth",
        description="Synthetic demonstrations for physical human-robot interaction tasks.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    # Commands
    for module in COMMAND_MODULES:
        module.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command. Exit codes: 0 success, 1 rejected or failed outcome, 2 usage error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"phri-synth: error: {exc.message}\n")
        return 2
    except PhriError as exc:
        log_exception(logger, exc, f"{args.command} failed")
        emit({"error": exc.to_dict()})
        return 1


if __name__ == "__main__":
    sys.exit(main())
