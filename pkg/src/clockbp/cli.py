"""Command-line entry points.

Subcommands:
  gen-topology   draw a random geometric topology and write the text format
  simulate       run a configured Monte Carlo experiment, write the row CSV
  crb            per-node estimation lower bounds for one drawn network
  report         aggregate a row CSV into a summary CSV plus figures
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .centralized import compute_crb, crb_per_node
from .errors import ClockBPError
from .harness import (
    ExperimentConfig,
    experiment_topology,
    load_config,
    prepare_trial,
    run_experiment,
    write_rows,
)
from .report import write_report
from .scheduler import ScheduleConfig
from .topology import (
    generate_connected_topology,
    generate_random_topology,
    save_topology,
)


def _add_gen_topology(sub):
    p = sub.add_parser("gen-topology", help="generate a random geometric topology")
    p.add_argument("--nodes", type=int, default=25)
    p.add_argument("--area", type=float, nargs=2, default=[300.0, 300.0],
                   metavar=("WIDTH", "HEIGHT"))
    p.add_argument("--range", type=float, default=90.0, dest="radio_range")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--allow-disconnected", action="store_true",
                   help="keep the first draw even if not strongly connected")
    p.set_defaults(func=_cmd_gen_topology)


def _cmd_gen_topology(args) -> int:
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    if args.allow_disconnected:
        topo = generate_random_topology(args.nodes, tuple(args.area), args.radio_range, rng)
    else:
        topo = generate_connected_topology(args.nodes, tuple(args.area), args.radio_range, rng)
    save_topology(topo, args.out)
    print(f"wrote {args.out}: {topo.num_nodes} nodes, {len(topo.edges)} edges")
    return 0


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        updates["trials"] = args.trials
    if getattr(args, "rounds", None) is not None:
        updates["rounds"] = args.rounds
    if getattr(args, "workers", None) is not None:
        updates["workers"] = args.workers
    if getattr(args, "experiment", None) is not None:
        updates["experiment"] = args.experiment
    if getattr(args, "topology", None) is not None:
        updates["topology_file"] = args.topology
    sched_updates = {}
    if getattr(args, "mode", None) is not None:
        sched_updates["mode"] = args.mode
    if getattr(args, "p_success", None) is not None:
        sched_updates["p_success"] = args.p_success
    if getattr(args, "max_ticks", None) is not None:
        sched_updates["max_ticks"] = args.max_ticks
    if sched_updates:
        updates["schedule"] = replace(cfg.schedule, **sched_updates)
    if getattr(args, "out", None) is not None:
        updates["output"] = args.out
    return replace(cfg, **updates) if updates else cfg


def _add_shared_experiment_flags(p):
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--experiment", choices=("mse_vs_tick", "mse_vs_rounds"), default=None)
    p.add_argument("--topology", default=None, help="fixed topology file")
    p.add_argument("--mode", choices=("synchronous", "asynchronous"), default=None)
    p.add_argument("--p-success", type=float, default=None, dest="p_success")
    p.add_argument("--max-ticks", type=int, default=None, dest="max_ticks")


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    _add_shared_experiment_flags(p)
    p.add_argument("--out", default=None, help="row CSV path (overrides config output)")
    p.set_defaults(func=_cmd_simulate)


def _cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    out = cfg.output
    if out is None:
        raise ClockBPError("no output path: pass --out or set output in the config")
    rows = run_experiment(cfg)
    write_rows(out, rows)
    print(f"wrote {out}: {len(rows)} rows ({cfg.experiment}, {cfg.trials} trials)")
    return 0


def _add_crb(sub):
    p = sub.add_parser("crb", help="per-node lower bounds for one drawn network")
    _add_shared_experiment_flags(p)
    p.add_argument("--out", required=True, help="per-node bound CSV path")
    p.set_defaults(func=_cmd_crb)


def _cmd_crb(args) -> int:
    cfg = _config_from_args(args)
    topology = experiment_topology(cfg)
    trial_seq = np.random.SeedSequence(cfg.seed).spawn(2)[1]
    rng = np.random.default_rng(trial_seq)
    state, timestamps, _ = prepare_trial(topology, cfg.clocks, cfg.timing, cfg.rounds, rng)
    crb = compute_crb(timestamps, state)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "crb_alpha", "crb_theta"])
        for node in range(2, topology.num_nodes + 1):
            crb_theta, crb_alpha = crb_per_node(crb, node)
            writer.writerow([node, repr(crb_alpha), repr(crb_theta)])
    print(f"wrote {args.out}: bounds for {topology.num_nodes - 1} nodes")
    return 0


def _add_report(sub):
    p = sub.add_parser("report", help="summarize a row CSV and render figures")
    p.add_argument("rows_csv", help="CSV produced by the simulate subcommand")
    p.add_argument("--out-dir", default=".", help="directory for summary and figures")
    p.add_argument("--prefix", default="report")
    p.add_argument("--nodes", type=int, nargs="*", default=None,
                   help="node ids to plot (0 = network average)")
    p.set_defaults(func=_cmd_report)


def _cmd_report(args) -> int:
    paths = write_report(args.rows_csv, args.out_dir, prefix=args.prefix, nodes=args.nodes)
    print(f"wrote {paths['summary']}")
    for fig in paths["figures"]:
        print(f"wrote {fig}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clockbp",
        description="Distributed clock skew/offset estimation simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen_topology(sub)
    _add_simulate(sub)
    _add_crb(sub)
    _add_report(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ClockBPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
