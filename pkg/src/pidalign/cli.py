"""Command-line entry points for every pipeline stage.

Subcommands: build-scene, build-functional, match, check, serve. All
configuration can come from a --config JSON file with individual flags
winning over it. Exit codes: 0 success, 1 validation error (bad input
data or schema), 2 runtime error.

The PIDALIGN_LOG environment variable sets log verbosity (DEBUG, INFO,
WARNING, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import socket
import sys
from pathlib import Path

from .errors import MaxRoundsExceededError, NonFiniteError, PidalignError
from .functional import (
    Vocabulary,
    build_functional_graph,
    load_raw_pid,
    remove_equipment,
)
from .graph import graph_from_json, graph_to_json
from .matching import (
    ALL_BASES,
    MatchConfig,
    extract_mapping,
    mapping_from_json,
    mapping_to_json,
    match_graphs,
    save_coupling,
)
from .consistency import get_inconsistencies, report_to_json
from .scene import EquipmentAttach, SceneConfig, build_scene_graph, load_scene

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _effective(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge precedence: flag > config file > built-in default."""
    config = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            config = json.load(fh)
        unknown = set(config) - set(defaults)
        if unknown:
            raise PidalignError(f"unknown config keys: {sorted(unknown)}")
    merged = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        merged[key] = flag if flag is not None else config.get(key, default)
    return merged


def _print_config(cfg: dict) -> int:
    print(json.dumps(cfg, indent=2, sort_keys=True))
    return EXIT_OK


def _read_graph(path: str):
    with open(path) as fh:
        return graph_from_json(fh.read())


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_build_scene(args) -> int:
    defaults = {
        "link_threshold": 0.04,
        "equipment_attach": EquipmentAttach.ALL_WITHIN_THRESHOLD.value,
        "subsample_limit": 2048,
        "seed": 0,
    }
    cfg = _effective(args, defaults)
    if args.print_config:
        return _print_config(cfg)
    pipes, equipment = load_scene(args.scene)
    warnings = []
    g = build_scene_graph(
        pipes,
        equipment,
        SceneConfig(
            link_threshold=cfg["link_threshold"],
            equipment_attach=EquipmentAttach(cfg["equipment_attach"]),
            subsample_limit=cfg["subsample_limit"],
            seed=cfg["seed"],
        ),
        warnings_out=warnings,
    )
    for w in warnings:
        print(json.dumps(w.to_dict()), file=sys.stderr)
    Path(args.output).write_text(graph_to_json(g))
    return EXIT_OK


def cmd_build_functional(args) -> int:
    if args.print_config:
        return _print_config(
            {
                "vocab": args.vocab,
                "keep_hidden": args.keep_hidden or [],
                "remove_equipment": args.remove_equipment or [],
            }
        )
    raw = load_raw_pid(args.pid)
    if args.remove_equipment:
        raw = remove_equipment(raw, args.remove_equipment)
    vocab = Vocabulary.from_file(args.vocab) if args.vocab else None
    g = build_functional_graph(raw, keep_hidden=args.keep_hidden or (), vocab=vocab)
    Path(args.output).write_text(graph_to_json(g))
    return EXIT_OK


MATCH_DEFAULTS = {
    "bases": list(ALL_BASES),
    "epsilon": 0.05,
    "outer_iters": 50,
    "sinkhorn_iters": 100,
    "weight_lr": 0.1,
    "attr_weight": 1.0,
    "seed": 0,
    "tol": 1e-7,
}


def _match_config(args) -> dict:
    return _effective(args, MATCH_DEFAULTS)


def cmd_match(args) -> int:
    cfg = _match_config(args)
    if args.print_config:
        return _print_config(cfg)
    S = _read_graph(args.source)
    F = _read_graph(args.target)
    vocab = Vocabulary.from_file(args.vocab) if args.vocab else None
    mc = MatchConfig(**{**cfg, "bases": tuple(cfg["bases"])})
    coupling = match_graphs(S, F, mc, vocab=vocab)
    mapping = extract_mapping(coupling, S, F)
    items = get_inconsistencies(mapping, S, F)

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mapping.json").write_text(mapping_to_json(mapping))
    save_coupling(coupling, out / "coupling.bin")
    (out / "report.json").write_text(report_to_json(items, round_no=1))
    print(
        f"matched {len(S)} source nodes onto {len(F)} target nodes; "
        f"{len(items)} inconsistency item(s)"
    )
    return EXIT_OK


def cmd_check(args) -> int:
    S = _read_graph(args.source)
    F = _read_graph(args.target)
    with open(args.mapping) as fh:
        mapping = mapping_from_json(fh.read())
    items = get_inconsistencies(mapping, S, F)
    Path(args.output).write_text(report_to_json(items))
    print(f"{len(items)} inconsistency item(s)")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    root = Path(args.project_dir)
    if not root.is_dir():
        print(f"error: project directory {root} does not exist", file=sys.stderr)
        return EXIT_VALIDATION
    if not os.access(root, os.W_OK):
        print(f"error: project directory {root} is not writable", file=sys.stderr)
        return EXIT_VALIDATION
    # fail fast with the documented exit code instead of uvicorn's own
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        probe.close()
    uvicorn.run(create_app(root), host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pidalign",
        description="Align 3D industrial scene graphs with P&ID functional graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON file with defaults; flags win")
        p.add_argument(
            "--print-config",
            action="store_true",
            help="print the effective configuration and exit",
        )

    p = sub.add_parser("build-scene", help="scene primitives JSON -> scene graph JSON")
    p.add_argument("scene", help="scene document (pipes + equipment)")
    p.add_argument("-o", "--output", default="scene-graph.json")
    p.add_argument("--link-threshold", type=float, dest="link_threshold")
    p.add_argument(
        "--equipment-attach",
        choices=[m.value for m in EquipmentAttach],
        dest="equipment_attach",
    )
    p.add_argument("--subsample-limit", type=int, dest="subsample_limit")
    p.add_argument("--seed", type=int)
    add_common(p)
    p.set_defaults(func=cmd_build_scene)

    p = sub.add_parser(
        "build-functional", help="digitized P&ID JSON -> functional graph JSON"
    )
    p.add_argument("pid", help="P&ID document (nodes + edges)")
    p.add_argument("-o", "--output", default="functional-graph.json")
    p.add_argument("--vocab", help="label vocabulary file")
    p.add_argument(
        "--keep-hidden",
        nargs="*",
        dest="keep_hidden",
        help="node ids exempt from simplification removal",
    )
    p.add_argument(
        "--remove-equipment",
        nargs="*",
        dest="remove_equipment",
        help="equipment ids to remove (degree-2 nodes are spliced)",
    )
    add_common(p)
    p.set_defaults(func=cmd_build_functional)

    p = sub.add_parser("match", help="align source onto target")
    p.add_argument("source", help="source (scene) graph JSON")
    p.add_argument("target", help="target (functional) graph JSON")
    p.add_argument("-o", "--output-dir", default=".", dest="output_dir")
    p.add_argument("--vocab")
    p.add_argument("--bases", nargs="*", choices=list(ALL_BASES))
    p.add_argument("--epsilon", type=float)
    p.add_argument("--outer-iters", type=int, dest="outer_iters")
    p.add_argument("--sinkhorn-iters", type=int, dest="sinkhorn_iters")
    p.add_argument("--weight-lr", type=float, dest="weight_lr")
    p.add_argument("--attr-weight", type=float, dest="attr_weight")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    add_common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("check", help="detect inconsistencies for an existing mapping")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("mapping")
    p.add_argument("-o", "--output", default="report.json")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("serve", help="run the alignment service")
    p.add_argument("project_dir", help="writable directory for project state")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8571)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PIDALIGN_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except json.JSONDecodeError as exc:
        print(
            f"error: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    except (NonFiniteError, MaxRoundsExceededError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (PidalignError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
