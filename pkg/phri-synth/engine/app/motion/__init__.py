"""Motion programs: parse, check and evaluate ``.mp`` sources."""

from functools import lru_cache
from pathlib import Path

from ..errors import IOFailure
from ..settings import ASSETS_DIR
from .checker import CheckReport, check_program, ensure_checked
from .interpreter import GroundingContext, eval_program
from .nodes import MotionProgram
from .parser import format_program, parse_program

PROGRAMS_DIR = ASSETS_DIR / "programs"
REFERENCE_PROGRAMS = ("scratch", "bathe", "placement")


def load_program(path: str | Path) -> MotionProgram:
    try:
        source = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read motion program: {exc}", path=str(path)) from exc
    return parse_program(source)


@lru_cache(maxsize=None)
def bundled_program(name: str) -> MotionProgram:
    return load_program(PROGRAMS_DIR / f"{name}.mp")


def reference_programs() -> dict[str, MotionProgram]:
    """The bundled scratch and bathe trajectories and the base placement program."""
    return {name: bundled_program(name) for name in REFERENCE_PROGRAMS}


__all__ = [
    "CheckReport",
    "GroundingContext",
    "MotionProgram",
    "PROGRAMS_DIR",
    "bundled_program",
    "check_program",
    "ensure_checked",
    "eval_program",
    "format_program",
    "load_program",
    "parse_program",
    "reference_programs",
]
