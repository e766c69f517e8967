"""Monte Carlo experiment runner: trials, aggregation, lower bound and output files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from aoisim.policies import (
    PolicyConfig,
    PolicyKind,
    Scheduler,
    StationaryPolicy,
    optimize_stationary_distribution,
)
from aoisim.sim import SimState, average_age
from aoisim.stochastic import ArrivalModel, ChannelModel, trial_streams
from aoisim.topology import NetworkTopology, builtin_network, validate_and_build

log = logging.getLogger(__name__)

CSV_COLUMNS = ["flow", "policy", "rate", "mean_aoi", "std_aoi", "lower_bound"]


def lower_bound(p: float, q: float, n: int) -> float:
    """Loose single-flow age bound: Bernoulli(p) inter-arrival age plus ``n`` geometric(q) hop waits."""
    if not (0 < p <= 1) or not (0 < q <= 1):
        raise ValueError("lower bound needs 0 < p <= 1 and 0 < q <= 1")
    if n < 0:
        raise ValueError("hop count must be nonnegative")
    return (2.0 - p) / (2.0 * p) + n / q


@dataclass
class ExperimentConfig:
    topology: dict
    q: float = 0.5
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    slots: int = 10_000
    trials: int = 100
    seed: int = 0
    label: str | None = None

    def __post_init__(self):
        if self.slots < 1 or self.trials < 1:
            raise ValueError("slots and trials must be at least 1")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"channel q={self.q} outside [0, 1]")

    @property
    def policy_label(self) -> str:
        return self.label or self.policy.kind.value

    def build_topology(self) -> NetworkTopology:
        return _topology_from_json(json.dumps(self.topology, sort_keys=True))

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        """Parse the JSON configuration schema (see README)."""
        raw = dict(raw)
        if "network" in raw:
            rate = raw.get("rate", 0.1)
            topo = builtin_network(raw["network"], rate, raw.get("targets"))
        else:
            topo = {k: raw[k] for k in ("nodes", "edges", "flows", "interference") if k in raw}
        channel = raw.get("channel", {})
        q = channel.get("q", 0.5) if isinstance(channel, dict) else float(channel)
        solver = dict(raw.get("solver", {}))
        if "sweeps" in solver:
            solver["max_sweeps"] = solver.pop("sweeps")
        policy = PolicyConfig(
            kind=raw.get("policy", "SDSPD"),
            beta=float(raw.get("beta", 1.0)),
            tie_break=raw.get("tie_break", "lexicographic"),
            scheduler=raw.get("scheduler", "exhaustive"),
            solver=solver,
        )
        return cls(
            topology=topo,
            q=float(q),
            policy=policy,
            slots=int(raw.get("slots", 10_000)),
            trials=int(raw.get("trials", 100)),
            seed=int(raw.get("seed", 0)),
            label=raw.get("label"),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def echo(self) -> dict:
        pol = asdict(self.policy)
        pol["kind"] = self.policy.kind.value
        return {"topology": self.topology, "q": self.q, "policy": pol, "slots": self.slots,
                "trials": self.trials, "seed": self.seed}


@lru_cache(maxsize=32)
def _topology_from_json(blob: str) -> NetworkTopology:
    return validate_and_build(json.loads(blob))


@lru_cache(maxsize=32)
def _stationary_for(blob: str, q: float) -> StationaryPolicy:
    return optimize_stationary_distribution(_topology_from_json(blob), q)


@dataclass
class TrialResult:
    avg_age: list
    delivered: list
    dropped: list
    created: list


def run_trial(config: ExperimentConfig, trial: int, *, on_decision=None, on_slot=None,
              stationary: StationaryPolicy | None = None) -> TrialResult:
    """Simulate one trial of ``config.slots`` slots.

    ``on_decision(t, state, gains, pairs)`` fires after the schedule is chosen
    and before it is applied; ``on_slot(t, state, pairs, outcome)`` fires at
    the end of each slot. Pair indices refer to ``topology.pairs``.
    """
    topo = config.build_topology()
    T = config.slots
    streams = trial_streams(config.seed, trial)
    chan = ChannelModel(config.q).sample_block(streams["channel"], T, len(topo.links)).tolist()
    rates = tuple(f.arrival_rate for f in topo.flows)
    arr = ArrivalModel(rates).sample_block(streams["arrivals"], T).tolist()
    state = SimState(topo, config.policy.discipline)

    if config.policy.kind is PolicyKind.STATIONARY:
        if stationary is None:
            stationary = _stationary_for(json.dumps(config.topology, sort_keys=True), config.q)
        idx = topo.pair_index
        plans = [sorted(idx[p] for p in s.pairs) for s in stationary.schedules]
        picks = stationary.sample_indices(streams["policy"], T).tolist()
        choose = None
    else:
        choose = Scheduler(topo, config.policy, streams["policy"]).choose_pairs

    hooked = on_decision is not None or on_slot is not None
    for t in range(T):
        gains = chan[t]
        state.admit(arr[t], t)
        pairs = choose(state, gains) if choose is not None else plans[picks[t]]
        if hooked and on_decision is not None:
            on_decision(t, state, gains, pairs)
        outcome = state.serve(pairs, gains, t)
        if hooked and on_slot is not None:
            on_slot(t, state, pairs, outcome)

    return TrialResult(
        avg_age=average_age(state.tracker, T),
        delivered=list(state.delivered),
        dropped=list(state.dropped),
        created=list(state.created),
    )


@dataclass
class SummaryTable:
    policy: str
    flows: list
    rates: list
    mean: list
    std: list
    lower_bound: list
    trials: int = 0
    config: dict = field(default_factory=dict)

    def rows(self) -> list:
        return [
            {"flow": f, "policy": self.policy, "rate": r, "mean_aoi": m, "std_aoi": s, "lower_bound": lb}
            for f, r, m, s, lb in zip(self.flows, self.rates, self.mean, self.std, self.lower_bound)
        ]

    def stderr(self) -> list:
        return [s / math.sqrt(self.trials) if self.trials else math.nan for s in self.std]


def _trial_job(args):
    config, trial, stationary = args
    return run_trial(config, trial, stationary=stationary)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> SummaryTable:
    """Run ``config.trials`` independent trials and aggregate per-flow mean/std."""
    topo = config.build_topology()
    stationary = None
    if config.policy.kind is PolicyKind.STATIONARY:
        stationary = _stationary_for(json.dumps(config.topology, sort_keys=True), config.q)
    jobs = [(config, i, stationary) for i in range(config.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    ages = np.array([r.avg_age for r in results], dtype=float).reshape(len(results), len(topo.flows))
    mean = ages.mean(axis=0)
    std = ages.std(axis=0, ddof=1) if len(results) > 1 else np.zeros(len(topo.flows))
    bounds = []
    for f in topo.flows:
        try:
            bounds.append(lower_bound(f.arrival_rate, config.q, f.hops))
        except ValueError:
            bounds.append(math.inf)
    log.info("%s: %d trials x %d slots done", config.policy_label, config.trials, config.slots)
    return SummaryTable(
        policy=config.policy_label,
        flows=[f.id for f in topo.flows],
        rates=[f.arrival_rate for f in topo.flows],
        mean=[float(x) for x in mean],
        std=[float(x) for x in std],
        lower_bound=bounds,
        trials=config.trials,
        config=config.echo(),
    )


def tables_to_csv(tables) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for table in tables:
        for row in table.rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k in ("rate", "mean_aoi", "std_aoi", "lower_bound"):
            row[k] = float(row[k])
    return rows


def format_text(tables) -> str:
    """Aligned table: one line per policy, one column per flow (means)."""
    tables = list(tables)
    if not tables:
        return ""
    flows = tables[0].flows
    head = ["policy"] + flows
    lines = [["lower bound"] + [f"{x:.1f}" for x in tables[0].lower_bound]]
    for tb in tables:
        lines.append([tb.policy] + [f"{m:.1f} ±{s:.1f}" for m, s in zip(tb.mean, tb.std)])
    widths = [max(len(r[i]) for r in [head] + lines) for i in range(len(head))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([fmt(head), "-" * len(fmt(head))] + [fmt(r) for r in lines]) + "\n"


def emit_outputs(tables, out_dir, name: str = "summary", formats=("csv", "txt")) -> list:
    """Write ``name.csv`` and/or ``name.txt`` under ``out_dir``; returns the paths."""
    if isinstance(tables, SummaryTable):
        tables = [tables]
    tables = list(tables)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        p = out / f"{name}.csv"
        p.write_text(tables_to_csv(tables))
        written.append(p)
    if "txt" in formats:
        p = out / f"{name}.txt"
        p.write_text(format_text(tables))
        written.append(p)
    return written


class TraceWriter:
    """Per-slot CSV trace: ``t, flow, age, Q@node...`` (one row per flow per slot)."""

    def __init__(self, fh, topology: NetworkTopology):
        self.writer = csv.writer(fh, lineterminator="\n")
        self.topology = topology
        self.writer.writerow(["t", "flow", "age", "queues"])

    def __call__(self, t, state, pairs, outcome):
        for fi, f in enumerate(self.topology.flows):
            qs = ";".join(f"{node}:{len(q)}" for node, q in zip(f.path, state.queues[fi]))
            self.writer.writerow([t + 1, f.id, state.tracker.current_age[fi], qs])


ALL_POLICIES = [
    PolicyKind.SDSPD,
    PolicyKind.BP_D,
    PolicyKind.SDSPND_LCFS,
    PolicyKind.BP_LCFS,
    PolicyKind.SDSPND_FCFS,
    PolicyKind.BP_FCFS,
    PolicyKind.STATIONARY,
]

TARGET_ROWS = [
    (None, None, None, None, None),
    (18, None, None, None, None),
    (15, None, None, None, None),
    (15, None, None, None, 11),
    (None, 16, None, None, 12),
]

# table id -> (network, rate, target rows or None for the policy sweep)
TABLE_PRESETS = {
    1: (1, 0.1, None),
    2: (1, 0.13, None),
    3: (1, 0.14, None),
    4: (2, 0.1, None),
    5: (1, 0.14, TARGET_ROWS),
    6: (2, 0.13, None),
}


def table_configs(which: int, slots: int = 10_000, trials: int = 100, seed: int = 0, q: float = 0.5,
                  tie_break: str = "seeded-random") -> list:
    """Experiment configs behind one of the reproduced tables.

    Ties are broken at random by default: canonical-order ties hand a fixed
    priority to whichever flow is listed first on a shared link.
    """
    if which not in TABLE_PRESETS:
        raise ValueError(f"unknown table {which}; choose 1-6")
    net, rate, target_rows = TABLE_PRESETS[which]
    out = []
    if target_rows is None:
        for kind in ALL_POLICIES:
            out.append(ExperimentConfig(builtin_network(net, rate), q, PolicyConfig(kind=kind, tie_break=tie_break),
                                        slots, trials, seed))
    else:
        for row in target_rows:
            tag = "-".join("*" if x is None else str(x) for x in row)
            out.append(ExperimentConfig(builtin_network(net, rate, row), q, PolicyConfig(kind=PolicyKind.SDSPD, tie_break=tie_break),
                                        slots, trials, seed, label=f"SDSPD[{tag}]"))
    return out
