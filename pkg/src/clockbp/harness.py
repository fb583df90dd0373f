"""Configuration-driven Monte Carlo experiments emitting CSV rows.

Two experiment kinds:

mse_vs_tick
    One topology (loaded from a file or generated once from the master
    seed, resampling until strongly connected); each trial draws fresh
    clocks, delays and exchange noise, runs the full tick budget, and
    records per-node per-tick squared estimation errors next to the
    per-node lower bound for that trial's data.

mse_vs_rounds
    Sweeps over the number of exchange rounds; every trial generates a
    fresh connected topology, runs the tick budget, and records only the
    final tick. tick_or_n carries the round count.

The master seed expands into per-trial seeds through a splittable seed
tree, so results are byte-identical no matter how many workers run the
trials. Rows never drop silently: states where a node has no usable
estimate appear with identifiable=false and empty error cells.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bp
from .centralized import CrbMatrix, compute_crb, crb_per_node
from .clocks import (
    ClockRanges,
    ExchangeTiming,
    TrueNetworkState,
    sample_true_state,
    simulate_exchange,
)
from .errors import ConfigurationError
from .observations import build_observation
from .scheduler import RunResult, ScheduleConfig, SimState, run
from .topology import (
    Topology,
    generate_connected_topology,
    is_strongly_connected,
    load_topology,
)

CONFIG_VERSION = 1
CSV_COLUMNS = (
    "experiment",
    "trial",
    "seed",
    "node",
    "tick_or_n",
    "se_alpha",
    "se_theta",
    "crb_alpha",
    "crb_theta",
    "identifiable",
)

EXPERIMENT_KINDS = ("mse_vs_tick", "mse_vs_rounds")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    trial: int
    seed: int
    node: int
    tick_or_n: int
    se_alpha: float | None
    se_theta: float | None
    crb_alpha: float
    crb_theta: float
    identifiable: bool


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "mse_vs_tick"
    topology_file: str | None = None
    num_nodes: int = 25
    area: tuple[float, float] = (300.0, 300.0)
    radio_range: float = 90.0
    clocks: ClockRanges = field(default_factory=ClockRanges)
    timing: ExchangeTiming = field(default_factory=ExchangeTiming)
    rounds: int = 20
    rounds_sweep: tuple[int, ...] | None = None
    schedule: ScheduleConfig = field(
        default_factory=lambda: ScheduleConfig(mode="asynchronous", p_success=0.2, max_ticks=30)
    )
    trials: int = 500
    seed: int = 0
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_KINDS:
            raise ConfigurationError(
                f"experiment must be one of {EXPERIMENT_KINDS}, got {self.experiment!r}"
            )
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.rounds < 2:
            raise ConfigurationError("rounds must be >= 2")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.experiment == "mse_vs_rounds":
            if not self.rounds_sweep:
                raise ConfigurationError("mse_vs_rounds needs a rounds_sweep list")
            if any(n < 2 for n in self.rounds_sweep):
                raise ConfigurationError("every rounds_sweep entry must be >= 2")
        if self.topology_file is not None and not Path(self.topology_file).exists():
            raise ConfigurationError(f"topology file {self.topology_file} does not exist")


def config_from_dict(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build a config from the parsed JSON structure (documented in the
    README); unknown keys are rejected to catch typos."""
    data = dict(data)
    version = data.pop("version", None)
    if version != CONFIG_VERSION:
        raise ConfigurationError(
            f"config version {version!r} unsupported (expected {CONFIG_VERSION})"
        )

    kwargs: dict = {}
    topo = data.pop("topology", {})
    if "file" in topo:
        path = Path(topo["file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        kwargs["topology_file"] = str(path)
    else:
        if "num_nodes" in topo:
            kwargs["num_nodes"] = int(topo["num_nodes"])
        if "area" in topo:
            kwargs["area"] = tuple(float(v) for v in topo["area"])
        if "radio_range" in topo:
            kwargs["radio_range"] = float(topo["radio_range"])

    clocks = data.pop("clocks", {})
    ck: dict = {}
    for name in ("skew", "offset", "delay"):
        if name in clocks:
            ck[name] = tuple(float(v) for v in clocks[name])
    if "noise_var" in clocks:
        ck["noise_var"] = float(clocks["noise_var"])
    if "allow_unphysical_skew" in clocks:
        ck["allow_unphysical_skew"] = bool(clocks["allow_unphysical_skew"])
    kwargs["clocks"] = ClockRanges(**ck)

    timing = data.pop("timing", {})
    tk: dict = {}
    if "round_period" in timing:
        tk["round_period"] = float(timing["round_period"])
    if "response_delay" in timing:
        tk["response_delay"] = tuple(float(v) for v in timing["response_delay"])
    kwargs["timing"] = ExchangeTiming(**tk)

    sched = data.pop("schedule", {})
    sk: dict = {}
    if "mode" in sched:
        sk["mode"] = sched["mode"]
    if "p_success" in sched:
        p = sched["p_success"]
        sk["p_success"] = (
            {tuple(json.loads(k)): float(v) for k, v in p.items()}
            if isinstance(p, dict)
            else float(p)
        )
    if "max_ticks" in sched:
        sk["max_ticks"] = int(sched["max_ticks"])
    if "loss_policy" in sched:
        sk["loss_policy"] = sched["loss_policy"]
    kwargs["schedule"] = ScheduleConfig(**sk)

    for name in ("experiment", "output"):
        if name in data:
            kwargs[name] = data.pop(name)
    for name in ("rounds", "trials", "seed", "workers"):
        if name in data:
            kwargs[name] = int(data.pop(name))
    if "rounds_sweep" in data:
        kwargs["rounds_sweep"] = tuple(int(n) for n in data.pop("rounds_sweep"))

    if data:
        raise ConfigurationError(f"unknown config keys: {sorted(data)}")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(data, base_dir=path.parent)


# --- per-trial building blocks ----------------------------------------------


def prepare_trial(
    topology: Topology,
    clocks: ClockRanges,
    timing: ExchangeTiming,
    rounds: int,
    rng: np.random.Generator,
):
    """Draw one trial's ground truth, exchanges, and observations."""
    state = sample_true_state(topology, clocks, rng)
    timestamps = {}
    observations = {}
    for edge in sorted(topology.edges):
        ts = simulate_exchange(edge, state, rounds, timing, rng)
        timestamps[edge] = ts
        observations[edge] = build_observation(
            ts, state.noise_var(edge[0]), state.noise_var(edge[1])
        )
    return state, timestamps, observations


def _node_errors(
    result: RunResult, tick: int, node: int, state: TrueNetworkState
) -> tuple[float | None, float | None, bool]:
    belief = result.belief(tick, node)
    usable = belief.identifiable and abs(belief.mu[0]) > bp.EXTRACT_EPS
    if not usable:
        return None, None, False
    alpha_hat = 1.0 / belief.mu[0]
    theta_hat = belief.mu[1] / belief.mu[0]
    clock = state.clock(node)
    return (
        float((alpha_hat - clock.alpha) ** 2),
        float((theta_hat - clock.theta) ** 2),
        True,
    )


def _crb_table(crb: CrbMatrix, num_nodes: int) -> dict[int, tuple[float, float]]:
    return {node: crb_per_node(crb, node) for node in range(2, num_nodes + 1)}


def _tick_trial(args) -> list[ResultRow]:
    cfg, topology, trial, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    seed_id = int(seed_seq.generate_state(1)[0])
    state, timestamps, observations = prepare_trial(
        topology, cfg.clocks, cfg.timing, cfg.rounds, rng
    )
    crb = _crb_table(compute_crb(timestamps, state), topology.num_nodes)
    sim = SimState(topology, observations)
    result = run(sim, cfg.schedule, conv_tol=1e-9, rng=rng, stop_early=False)
    rows = []
    for tick in range(1, result.ticks + 1):
        for node in range(2, topology.num_nodes + 1):
            se_a, se_t, ok = _node_errors(result, tick, node, state)
            crb_t, crb_a = crb[node]
            rows.append(
                ResultRow(
                    cfg.experiment, trial, seed_id, node, tick, se_a, se_t,
                    crb_a, crb_t, ok,
                )
            )
    return rows


def _rounds_trial(args) -> list[ResultRow]:
    cfg, rounds, trial, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    seed_id = int(seed_seq.generate_state(1)[0])
    topology = generate_connected_topology(
        cfg.num_nodes, cfg.area, cfg.radio_range, rng
    )
    state, timestamps, observations = prepare_trial(
        topology, cfg.clocks, cfg.timing, rounds, rng
    )
    crb = _crb_table(compute_crb(timestamps, state), topology.num_nodes)
    sim = SimState(topology, observations)
    result = run(sim, cfg.schedule, conv_tol=1e-9, rng=rng, stop_early=False)
    rows = []
    for node in range(2, topology.num_nodes + 1):
        se_a, se_t, ok = _node_errors(result, result.ticks, node, state)
        crb_t, crb_a = crb[node]
        rows.append(
            ResultRow(
                cfg.experiment, trial, seed_id, node, rounds, se_a, se_t,
                crb_a, crb_t, ok,
            )
        )
    return rows


def _run_trials(worker, arglist, workers: int) -> list[ResultRow]:
    """Execute trials (optionally in a bounded process pool) and merge the
    per-trial row lists in deterministic submission order."""
    if workers <= 1:
        batches = [worker(a) for a in arglist]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(worker, arglist, chunksize=1))
    return [row for batch in batches for row in batch]


def experiment_topology(cfg: ExperimentConfig) -> Topology:
    """The fixed topology of an mse_vs_tick experiment: loaded from the
    configured file, or generated from the master seed (resampling until
    strongly connected)."""
    if cfg.topology_file is not None:
        topology = load_topology(cfg.topology_file)
        if not is_strongly_connected(topology):
            raise ConfigurationError(
                f"topology {cfg.topology_file} is not strongly connected; "
                "the estimator's guarantees need every node tied to the reference"
            )
        return topology
    topo_seq = np.random.SeedSequence(cfg.seed).spawn(1)[0]
    return generate_connected_topology(
        cfg.num_nodes, cfg.area, cfg.radio_range, np.random.default_rng(topo_seq)
    )


def run_mse_vs_tick(cfg: ExperimentConfig) -> list[ResultRow]:
    topology = experiment_topology(cfg)
    master = np.random.SeedSequence(cfg.seed)
    trial_seqs = master.spawn(cfg.trials + 1)[1:]  # child 0 named the topology
    args = [(cfg, topology, t, trial_seqs[t]) for t in range(cfg.trials)]
    return _run_trials(_tick_trial, args, cfg.workers)


def run_mse_vs_rounds(cfg: ExperimentConfig) -> list[ResultRow]:
    master = np.random.SeedSequence(cfg.seed)
    sweep = cfg.rounds_sweep or ()
    per_n = master.spawn(len(sweep))
    args = []
    for k, rounds in enumerate(sweep):
        for t, seq in enumerate(per_n[k].spawn(cfg.trials)):
            args.append((cfg, rounds, t, seq))
    return _run_trials(_rounds_trial, args, cfg.workers)


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    if cfg.experiment == "mse_vs_tick":
        return run_mse_vs_tick(cfg)
    return run_mse_vs_rounds(cfg)


def write_rows(path, rows: list[ResultRow]) -> None:
    """Write the result table with the exact documented header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.experiment,
                    r.trial,
                    r.seed,
                    r.node,
                    r.tick_or_n,
                    "" if r.se_alpha is None else repr(r.se_alpha),
                    "" if r.se_theta is None else repr(r.se_theta),
                    repr(r.crb_alpha),
                    repr(r.crb_theta),
                    "true" if r.identifiable else "false",
                ]
            )
