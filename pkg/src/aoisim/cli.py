"""Command line entry point: ``run``, ``reproduce-table`` and ``lower-bound``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from aoisim.harness import (
    ExperimentConfig,
    TraceWriter,
    emit_outputs,
    format_text,
    lower_bound,
    run_experiment,
    run_trial,
    table_configs,
)
from aoisim.policies import PolicyKind


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    changes = {}
    if args.policy:
        changes["policy"] = dataclasses.replace(cfg.policy, kind=PolicyKind.parse(args.policy))
    for name in ("slots", "trials", "seed"):
        if getattr(args, name) is not None:
            changes[name] = getattr(args, name)
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
    table = run_experiment(cfg, workers=args.workers)
    out = Path(args.out)
    emit_outputs(table, out, name="summary")
    if args.trace:
        with open(out / "trace.csv", "w", newline="") as fh:
            run_trial(cfg, 0, on_slot=TraceWriter(fh, cfg.build_topology()))
    sys.stdout.write(format_text([table]))
    return 0


def _cmd_table(args) -> int:
    configs = table_configs(args.table, slots=args.slots, trials=args.trials, seed=args.seed)
    tables = [run_experiment(c, workers=args.workers) for c in configs]
    emit_outputs(tables, args.out, name=f"table{args.table}")
    sys.stdout.write(format_text(tables))
    return 0


def _cmd_bound(args) -> int:
    print(f"{lower_bound(args.p, args.q, args.hops):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aoisim", description="Age-of-information multihop scheduling simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--policy")
    run.add_argument("--slots", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", default="results")
    run.add_argument("--trace", action="store_true", help="also write a per-slot trace of trial 0")
    run.add_argument("--workers", type=int, default=1)
    run.set_defaults(func=_cmd_run)

    tab = sub.add_parser("reproduce-table", help="rerun one of the six reference tables")
    tab.add_argument("table", type=int, choices=range(1, 7))
    tab.add_argument("--out", default="results")
    tab.add_argument("--slots", type=int, default=10_000)
    tab.add_argument("--trials", type=int, default=100)
    tab.add_argument("--seed", type=int, default=0)
    tab.add_argument("--workers", type=int, default=1)
    tab.set_defaults(func=_cmd_table)

    lb = sub.add_parser("lower-bound", help="single-flow age lower bound")
    lb.add_argument("--p", type=float, required=True)
    lb.add_argument("--q", type=float, required=True)
    lb.add_argument("--hops", type=int, required=True)
    lb.set_defaults(func=_cmd_bound)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"aoisim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
