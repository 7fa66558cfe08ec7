"""Command line interface.

Subcommands: evolve, posteval, classify, render, replay. The output root
defaults to $MINSURPRISE_OUT (falling back to ./out); --seed overrides the
config file's seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .experiment import (
    ExperimentPlan,
    ConfigError,
    matrix_plan,
    parse_config,
    posteval_csv_row,
    POSTEVAL_COLUMNS,
    replay,
    run_experiment,
)
from .evolution import STREAM_POSTEVAL, mix64
from .metrics import post_evaluate, structure_report, StructureLabel
from .networks import load_genome
from .world import parse_snapshot, parse_snapshot_cells, render_snapshot


def _default_out() -> str:
    return os.environ.get("MINSURPRISE_OUT", "out")


def _load_plan(args) -> ExperimentPlan:
    if args.matrix:
        plan = matrix_plan()
    elif args.config is None:
        raise ConfigError("a config file (or --matrix) is required")
    else:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {args.config}")
        plan = parse_config(path.read_text(encoding="utf-8"))
    if args.seed is not None:
        plan = replace(plan, master_seed=args.seed)
    if args.runs is not None:
        plan = replace(plan, runs_per_row=args.runs)
    return plan


def _cmd_evolve(args) -> int:
    plan = _load_plan(args)
    return run_experiment(plan, args.out, workers=args.workers)


def _cmd_posteval(args) -> int:
    plan = _load_plan(args)
    genome = load_genome(args.genome)
    row = plan.rows[0]
    seed = args.seed if args.seed is not None else mix64(
        plan.master_seed, 0, STREAM_POSTEVAL, 0, 0
    )
    metrics_row = post_evaluate(genome, row.sim, row.scenario, seed)
    print(POSTEVAL_COLUMNS)
    print(posteval_csv_row("posteval", row.scenario, row.sim, metrics_row))
    return 0


def _cmd_classify(args) -> int:
    text = Path(args.snapshot).read_text(encoding="utf-8")
    L, _, blocks = parse_snapshot_cells(text)
    report = structure_report(blocks, L)
    for label in StructureLabel:
        print(f"{label.value},{report.counts[label]}")
    print(f"scene,{report.scene_label.value}")
    return 0


def _cmd_render(args) -> int:
    text = Path(args.snapshot).read_text(encoding="utf-8")
    sys.stdout.write(render_snapshot(parse_snapshot(text)))
    return 0


def _cmd_replay(args) -> int:
    plan = _load_plan(args)
    genome = load_genome(args.genome)
    row = plan.rows[0]
    seed = args.seed if args.seed is not None else mix64(
        plan.master_seed, 0, STREAM_POSTEVAL, 0, 0
    )
    snapshots, metrics_row, _ = replay(genome, row.sim, row.scenario, seed,
                                       args.every)
    for t, snap in snapshots:
        print(f"# t={t}")
        sys.stdout.write(snap)
    print(POSTEVAL_COLUMNS)
    print(posteval_csv_row("replay", row.scenario, row.sim, metrics_row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minsurprise",
        description="Swarm construction by prediction-reward neuroevolution "
                    "on a torus grid.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_plan_args(p):
        p.add_argument("config", nargs="?", default=None,
                       help="key=value experiment config file")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides the config)")
        p.add_argument("--runs", type=int, default=None,
                       help="runs per row (overrides the config)")
        p.add_argument("--matrix", action="store_true",
                       help="use the built-in experiment matrix instead of "
                            "the config rows")

    p_evolve = sub.add_parser("evolve", help="run the evolutionary experiment")
    add_plan_args(p_evolve)
    p_evolve.add_argument("--out", default=_default_out(),
                          help="output directory (default $MINSURPRISE_OUT "
                               "or ./out)")
    p_evolve.add_argument("--workers", type=int, default=1,
                          help="parallel (row, run) jobs")
    p_evolve.set_defaults(func=_cmd_evolve)

    p_post = sub.add_parser("posteval", help="post-evaluate a stored genome")
    p_post.add_argument("genome", help="genome file")
    add_plan_args(p_post)
    p_post.set_defaults(func=_cmd_posteval)

    p_classify = sub.add_parser("classify",
                                help="classify the block structures of a "
                                     "snapshot")
    p_classify.add_argument("snapshot", help="snapshot text file")
    p_classify.set_defaults(func=_cmd_classify)

    p_render = sub.add_parser("render",
                              help="parse and re-render a snapshot file")
    p_render.add_argument("snapshot", help="snapshot text file")
    p_render.set_defaults(func=_cmd_render)

    p_replay = sub.add_parser("replay", help="re-simulate a stored genome")
    p_replay.add_argument("genome", help="genome file")
    add_plan_args(p_replay)
    p_replay.add_argument("--every", type=int, default=100,
                          help="snapshot emission interval in steps")
    p_replay.set_defaults(func=_cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
