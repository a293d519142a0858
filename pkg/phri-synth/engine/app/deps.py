"""Shared pieces every command handler depends on: configuration, inputs and stdout."""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ValidationError

from .errors import IOFailure, UnrecoverableConfig, UsageError
from .motion import MotionProgram, load_program
from .providers import load_scenario
from .schemas import GlobalConfig, ScenarioSpec


def get_config(args: argparse.Namespace) -> GlobalConfig:
    """GlobalConfig from ``--config`` (if any) with command-line overrides applied."""
    data: dict = {}
    path = getattr(args, "config", None)
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise IOFailure(f"cannot read config: {e}", path=path) from e
        except json.JSONDecodeError as e:
            raise UnrecoverableConfig(f"config is not valid JSON: {e.msg}", path=path) from e
    for flag, field in (("seed", "master_seed"), ("workers", "workers"), ("out", "output_dir")):
        value = getattr(args, flag, None)
        if value is not None and field in GlobalConfig.model_fields:
            data[field] = str(value) if field == "output_dir" else value
    try:
        return GlobalConfig.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        location = ".".join(str(part) for part in error["loc"])
        raise UnrecoverableConfig(f"invalid config at {location or 'root'}: {error['msg']}", field=location) from e


def get_spec(args: argparse.Namespace) -> ScenarioSpec:
    if not getattr(args, "spec", None):
        raise UsageError("--spec is required")
    return load_scenario(args.spec)


def get_program(args: argparse.Namespace) -> MotionProgram:
    return load_program(args.program)


def emit(payload: Any, stream=None) -> None:
    """Write one machine-readable JSON document to stdout."""
    stream = stream or sys.stdout
    if isinstance(payload, BaseModel):
        text = payload.model_dump_json(indent=2)
    else:
        text = json.dumps(payload, indent=2, sort_keys=True, default=str)
    stream.write(text + "\n")
    stream.flush()


def output_path(value: Optional[str], what: str) -> Path:
    if not value:
        raise UsageError(f"{what} is required")
    path = Path(value)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IOFailure(f"cannot create {path.parent}: {e}", path=str(path)) from e
    return path
