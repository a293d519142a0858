"""``scenario gen``, ``scene build`` and ``human gen``."""

import argparse
import json

from ..body import build_human, export_segment_meshes, export_urdf, human_params_from_spec
from ..deps import emit, get_config, get_spec, output_path
from ..errors import IOFailure
from ..providers import generate_scenario, serialize_scenario
from ..scene import layout_to_json, occupancy_png, placement_pool, sample_layout
from ..seeding import derive_seed


def scenario_gen(args: argparse.Namespace) -> int:
    config = get_config(args)
    provider = config.provider
    if args.provider:
        provider = provider.model_copy(update={"kind": args.provider})
    spec = generate_scenario(args.prompt, provider, config.master_seed)
    out = output_path(args.out, "--out")
    out.write_text(serialize_scenario(spec), encoding="utf-8")
    emit(spec)
    return 0


def scene_build(args: argparse.Namespace) -> int:
    config = get_config(args)
    spec = get_spec(args)
    seed = derive_seed(config.master_seed, "scene:0")
    layout = sample_layout(spec, seed, config.provider)
    layout, pool = placement_pool(layout, spec, config.provider, seed)
    out = output_path(args.out, "--out")
    out.write_text(layout_to_json(layout), encoding="utf-8")
    if args.occupancy:
        output_path(args.occupancy, "--occupancy").write_bytes(occupancy_png(layout))
    emit(
        {
            "out": str(out),
            "provenance": layout.provenance,
            "furniture": [entry.id for entry in layout.furniture],
            "supports": [entry.id for entry in pool],
        }
    )
    return 0


def human_gen(args: argparse.Namespace) -> int:
    config = get_config(args)
    spec = get_spec(args)
    params = human_params_from_spec(spec, derive_seed(config.master_seed, "human:0"))
    human = build_human(params.beta)
    out = output_path(args.out, "--out") / "human.urdf"
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IOFailure(f"cannot create {out.parent}: {e}", path=str(out.parent)) from e
    urdf = export_urdf(human, out)
    meshes = export_segment_meshes(human, out.parent / "meshes")
    (out.parent / "params.json").write_text(json.dumps(params.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
    emit({"urdf": str(urdf), "meshes": [str(path) for path in meshes], "params": str(out.parent / "params.json")})
    return 0


def register(subparsers) -> None:
    scenario = subparsers.add_parser("scenario", help="Scenario specifications")
    scenario_sub = scenario.add_subparsers(dest="action", required=True)
    gen = scenario_sub.add_parser("gen", help="Generate a scenario specification from a task prompt")
    gen.add_argument("--prompt", required=True, help="Free-text task prompt")
    gen.add_argument("--out", required=True, help="Where to write the scenario JSON")
    gen.add_argument("--provider", choices=("http", "fixture", "procedural"), help="Override the provider kind")
    gen.add_argument("--seed", type=int, help="Master seed")
    gen.set_defaults(func=scenario_gen)

    scene = subparsers.add_parser("scene", help="Scene layouts")
    scene_sub = scene.add_subparsers(dest="action", required=True)
    build = scene_sub.add_parser("build", help="Sample and complete a layout for a scenario")
    build.add_argument("--spec", required=True, help="Scenario JSON")
    build.add_argument("--out", required=True, help="Where to write the layout JSON")
    build.add_argument("--occupancy", help="Also write the top-down occupancy PNG here")
    build.add_argument("--seed", type=int, help="Master seed")
    build.set_defaults(func=scene_build)

    human = subparsers.add_parser("human", help="Human body models")
    human_sub = human.add_subparsers(dest="action", required=True)
    hgen = human_sub.add_parser("gen", help="Export the scenario's body as URDF plus segment meshes")
    hgen.add_argument("--spec", required=True, help="Scenario JSON")
    hgen.add_argument("--out", required=True, help="Output directory")
    hgen.add_argument("--seed", type=int, help="Master seed")
    hgen.set_defaults(func=human_gen)
