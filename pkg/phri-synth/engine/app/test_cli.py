"""
Tests for the phri-synth command line: help, exit codes and JSON output.
"""

import json

import pytest

from app.cli import main
from app.errors import IOFailure, ProgramSyntaxError
from app.motion import PROGRAMS_DIR
from app.providers import load_scenario
from app.scene import parse_layout

SCRATCH = str(PROGRAMS_DIR / "scratch.mp")


def _run(capsys, *argv) -> tuple[int, str]:
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_help_lists_every_command(capsys):
    code, out = _run(capsys, "--help")
    assert code == 0
    for command in ("scenario", "scene", "human", "motion", "validate", "collect", "eval", "render", "stats"):
        assert command in out


def test_collect_help_lists_its_flags(capsys):
    code, out = _run(capsys, "collect", "--help")
    assert code == 0
    for flag in ("--spec", "--n", "--workers", "--out", "--resume", "--program", "--downsample"):
        assert flag in out


def test_usage_errors_exit_with_two(capsys):
    assert main([]) == 2
    assert main(["collect", "--spec"]) == 2
    assert main(["eval", "--task", "scratch"]) == 2
    assert "exactly one of --dataset or --spec" in capsys.readouterr().err


def test_motion_check(capsys, tmp_path):
    code, out = _run(capsys, "motion", "check", "--program", SCRATCH)
    assert code == 0
    assert json.loads(out)["ok"] is True

    ungrounded = tmp_path / "ungrounded.mp"
    ungrounded.write_text("waypoint(vec3(0, 0, 1), look_at(vec3(1, 0, 0), vec3(0, 0, 1)), 0.1, false, rrt);\ntarget(vec3(0, 0, 0));\n")
    code, out = _run(capsys, "motion", "check", "--program", str(ungrounded))
    assert code == 1
    assert json.loads(out)["issues"][0]["code"] == "ungrounded_position"


def test_syntax_errors_are_reported_as_json(capsys, tmp_path):
    broken = tmp_path / "broken.mp"
    broken.write_text("let a = ;\n")
    code, out = _run(capsys, "motion", "check", "--program", str(broken))
    assert code == 1
    error = json.loads(out)["error"]
    assert error["code"] == ProgramSyntaxError.code
    assert error["details"] == {"line": 1, "column": 9}


def test_motion_eval_is_deterministic(capsys):
    code, first = _run(capsys, "motion", "eval", "--program", SCRATCH, "--seed", "3")
    assert code == 0
    _, second = _run(capsys, "motion", "eval", "--program", SCRATCH, "--seed", "3")
    assert first == second
    traj = json.loads(first)
    assert len(traj["waypoints"]) == 5
    assert traj["seed"] == 3


def test_validate_rejects_rrt_contact(capsys):
    code, out = _run(capsys, "validate", "--program", str(PROGRAMS_DIR / "bad_rrt_contact.mp"), "--trials", "2")
    assert code == 1
    report = json.loads(out)
    assert report["trials"] == 2 and report["passed"] == 0


def test_scenario_and_scene_commands(capsys, tmp_path):
    spec_path = tmp_path / "spec.json"
    code, _ = _run(capsys, "scenario", "gen", "--prompt", "scratch someone's arm", "--out", str(spec_path), "--provider", "procedural")
    assert code == 0
    spec = load_scenario(str(spec_path))
    assert spec.relevant_body_parts

    layout_path = tmp_path / "layout.json"
    occupancy = tmp_path / "occupancy.png"
    code, out = _run(capsys, "scene", "build", "--spec", str(spec_path), "--out", str(layout_path), "--occupancy", str(occupancy))
    assert code == 0
    assert json.loads(out)["provenance"] in ("procedural", "completion-augmented")
    assert parse_layout(layout_path.read_text()).furniture
    assert occupancy.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_stats_on_a_missing_dataset(capsys, tmp_path):
    code, out = _run(capsys, "stats", "--dataset", str(tmp_path / "nothing"))
    assert code == 1
    assert json.loads(out)["error"]["code"] == IOFailure.code


@pytest.mark.parametrize("argv", [["motion"], ["scene", "build", "--out", "x.json"]])
def test_incomplete_subcommands(argv):
    assert main(argv) == 2
