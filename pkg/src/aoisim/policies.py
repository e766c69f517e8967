"""Per-slot scheduling policies.

Six state-dependent policies pick the schedule maximizing a linear objective
over the feasible set:

* SDSPD and the two SDSPnD variants weight queue length by an age-threshold
  flow weight, ``theta = w(age) * Q_i * H_ij``;
* the three backpressure variants use the clipped differential backlog
  ``(Q_i - Q_j)^+ * H_ij`` with unit weights (destination backlog is 0).

The seventh, StationaryRandom, samples a schedule from a fixed distribution.

Because every objective coefficient is nonnegative the maximum is attained on
a maximal conflict-free link set where each link carries its best flow. The
argmax therefore scores each maximal link set (a small precomputed 0/1
matrix) instead of every feasible schedule; links whose best coefficient is
zero are then switched off, so the returned schedule has no idle activations.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from aoisim.sim import Discipline, SimState
from aoisim.stochastic import ArrivalModel, ChannelModel, RngStream
from aoisim.topology import NetworkTopology, Schedule

TIE_TOL = 1e-9
TIE_BREAKS = ("lexicographic", "seeded-random")


class PolicyKind(enum.Enum):
    SDSPD = "SDSPD"
    BP_D = "BP-D"
    SDSPND_FCFS = "SDSPnD-FCFS"
    SDSPND_LCFS = "SDSPnD-LCFS"
    BP_FCFS = "BP-FCFS"
    BP_LCFS = "BP-LCFS"
    STATIONARY = "StationaryRandom"

    @classmethod
    def parse(cls, name) -> "PolicyKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value.lower() == key or kind.name.lower().replace("_", "-") == key:
                return kind
        if key in ("stationary", "random"):
            return cls.STATIONARY
        raise ValueError(f"unknown policy {name!r}; choose from {[k.value for k in cls]}")

    @property
    def discipline(self) -> Discipline:
        return _DISCIPLINE[self]

    @property
    def backpressure(self) -> bool:
        return self in (PolicyKind.BP_D, PolicyKind.BP_FCFS, PolicyKind.BP_LCFS)


_DISCIPLINE = {
    PolicyKind.SDSPD: Discipline.DROP_FRESHEST_ONLY,
    PolicyKind.BP_D: Discipline.DROP_FRESHEST_ONLY,
    PolicyKind.SDSPND_FCFS: Discipline.FCFS,
    PolicyKind.SDSPND_LCFS: Discipline.LCFS,
    PolicyKind.BP_FCFS: Discipline.FCFS,
    PolicyKind.BP_LCFS: Discipline.LCFS,
    PolicyKind.STATIONARY: Discipline.DROP_FRESHEST_ONLY,
}


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind = PolicyKind.SDSPD
    beta: float = 1.0
    age_targets: tuple | None = None
    tie_break: str = "lexicographic"
    scheduler: str = "exhaustive"
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind.parse(self.kind))
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"unknown tie_break {self.tie_break!r}")
        if self.scheduler not in ("exhaustive", "distributed"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")

    @property
    def discipline(self) -> Discipline:
        return self.kind.discipline

    def targets_for(self, topology: NetworkTopology) -> list:
        if self.age_targets is None:
            return [f.age_target for f in topology.flows]
        return [math.inf if a is None else float(a) for a in self.age_targets]


def weight(x: float, target: float, beta: float) -> float:
    """Age-threshold flow weight: 1 below the target, ``1 + beta`` at or above it."""
    if target is None or math.isinf(target):
        return 1.0
    return 1.0 + beta if x >= target else 1.0


def _gains_list(topology, channel_state) -> list:
    if isinstance(channel_state, dict):
        return [int(channel_state.get(l, 0)) for l in topology.links]
    return list(channel_state)


def pair_coefficients(config: PolicyConfig, state: SimState, gains, targets=None) -> list:
    """Objective coefficient of every (link, flow) pair in canonical pair order."""
    topo = state.topology
    gains = _gains_list(topo, gains)
    queues = state.queues
    out = []
    if config.kind.backpressure:
        for fi, h, li, last in state.pair_meta:
            if not gains[li]:
                out.append(0.0)
                continue
            diff = len(queues[fi][h]) - (0 if last else len(queues[fi][h + 1]))
            out.append(float(diff) if diff > 0 else 0.0)
        return out
    if targets is None:
        targets = config.targets_for(topo)
    ages = state.tracker.current_age
    w = [weight(ages[fi], targets[fi], config.beta) for fi in range(len(topo.flows))]
    for fi, h, li, last in state.pair_meta:
        if not gains[li]:
            out.append(0.0)
            continue
        out.append(w[fi] * len(queues[fi][h]))
    return out


def sdspd_objective(schedule: Schedule, state: SimState, channel_state, config: PolicyConfig | None = None) -> float:
    """Sum of ``w * Q * H`` over the active pairs of ``schedule``."""
    config = config or PolicyConfig()
    theta = pair_coefficients(config, state, channel_state)
    idx = state.topology.pair_index
    return float(sum(theta[idx[p]] for p in schedule.pairs))


def policy_objective(schedule: Schedule, state: SimState, channel_state, config: PolicyConfig) -> float:
    """Objective of ``schedule`` under ``config.kind`` (SDSP-type or backpressure)."""
    return sdspd_objective(schedule, state, channel_state, config)


def bp_link_weight(state: SimState, link) -> tuple:
    """``(max_f (Q_i^f - Q_j^f)^+, argmax flow id)`` over flows routed on ``link``."""
    topo = state.topology
    link = tuple(link)
    best_v, best_f = None, None
    for fid in topo.flows_on_link[link]:
        f = topo.flow(fid)
        qi = state.qlen(link[0], fid)
        qj = 0 if link[1] == f.des else state.qlen(link[1], fid)
        v = max(qi - qj, 0)
        if best_v is None or v > best_v:
            best_v, best_f = v, fid
    return best_v, best_f


class Scheduler:
    """Argmax engine for one topology and policy configuration."""

    def __init__(self, topology: NetworkTopology, config: PolicyConfig, rng: RngStream | None = None):
        if config.kind is PolicyKind.STATIONARY:
            raise ValueError("StationaryRandom has no state-dependent argmax")
        self.topology = topology
        self.config = config
        self.rng = rng
        self.targets = config.targets_for(topology)
        lsets = topology.maximal_link_sets
        L = len(topology.links)
        self.matrix = np.zeros((max(len(lsets), 1), L))
        for r, s in enumerate(lsets):
            for l in s:
                self.matrix[r, topology.link_index[l]] = 1.0
        self.link_sets = [[topology.link_index[l] for l in s] for s in lsets] or [[]]
        # pair indices of each link, canonical flow order
        self.link_pairs = [[] for _ in range(L)]
        for k, (l, _) in enumerate(topology.pairs):
            self.link_pairs[topology.link_index[l]].append(k)

    def coefficients(self, state: SimState, gains) -> list:
        return pair_coefficients(self.config, state, gains, self.targets)

    def choose_pairs(self, state: SimState, gains) -> list:
        """Active pair indices of the chosen schedule."""
        theta = self.coefficients(state, gains)
        if self.config.scheduler == "distributed":
            return self._distributed(theta)
        random_ties = self.config.tie_break == "seeded-random" and self.rng is not None
        values = []
        best_pair = []
        for ks in self.link_pairs:
            bv, bk = 0.0, -1
            for k in ks:
                if theta[k] > bv + TIE_TOL:
                    bv, bk = theta[k], k
            if random_ties and bk >= 0:
                tied = [k for k in ks if theta[k] >= bv - TIE_TOL]
                if len(tied) > 1:
                    bk = tied[int(self.rng.generator.integers(len(tied)))]
            values.append(bv)
            best_pair.append(bk)
        if max(values) <= 0.0:
            return []
        scores = self.matrix @ np.asarray(values)
        top = scores.max()
        if random_ties:
            cand = np.flatnonzero(scores >= top - TIE_TOL)
            row = int(cand[self.rng.generator.integers(len(cand))])
        else:
            row = int(np.argmax(scores >= top - TIE_TOL))
        return sorted(best_pair[li] for li in self.link_sets[row] if values[li] > 0.0)

    def _distributed(self, theta) -> list:
        from aoisim.solver import RelaxedPolytope, SolverConfig, igd_solve, round_to_schedule

        if not any(theta):
            return []
        opts = dict(self.config.solver)
        interference = bool(opts.pop("interference", True))
        full = getattr(self, "_polytope", None)
        if full is None:
            full = self._polytope = RelaxedPolytope.from_topology(self.topology)
        poly = full if interference else RelaxedPolytope.from_topology(self.topology, interference=False)
        opts.setdefault("w_bar", 1.0 + self.config.beta)
        cfg = SolverConfig(**opts)
        s = igd_solve(theta, poly, cfg)
        # rounding always respects interference so the simulator gets a feasible schedule
        sched = round_to_schedule(s, full, theta)
        idx = self.topology.pair_index
        return sorted(idx[p] for p in sched.pairs if theta[idx[p]] > 0.0)

    def choose(self, state: SimState, gains) -> Schedule:
        pairs = self.topology.pairs
        return Schedule.of(pairs[k] for k in self.choose_pairs(state, gains))


def choose_schedule(policy: PolicyConfig | PolicyKind | str, state: SimState, channel_state,
                    t: int | None = None, rng: RngStream | None = None) -> Schedule:
    """Schedule maximizing the policy objective for the current state and channel."""
    if not isinstance(policy, PolicyConfig):
        policy = PolicyConfig(kind=policy)
    return Scheduler(state.topology, policy, rng).choose(state, _gains_list(state.topology, channel_state))


@dataclass(frozen=True)
class StationaryPolicy:
    """Fixed distribution over schedules, blind to queues, channel and ages."""

    schedules: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.schedules) != len(self.probs) or not self.schedules:
            raise ValueError("need one probability per schedule")
        p = np.asarray(self.probs, dtype=float)
        if (p < 0).any() or not np.isclose(p.sum(), 1.0):
            raise ValueError("probabilities must be nonnegative and sum to 1")

    @classmethod
    def uniform(cls, schedules) -> "StationaryPolicy":
        schedules = tuple(schedules)
        return cls(schedules, tuple([1.0 / len(schedules)] * len(schedules)))

    def sample_indices(self, rng: RngStream, slots: int) -> np.ndarray:
        p = np.asarray(self.probs, dtype=float)
        return rng.generator.choice(len(p), size=slots, p=p / p.sum())


def stationary_schedule(policy: StationaryPolicy, rng: RngStream, t: int | None = None) -> Schedule:
    """Draw one schedule; whether it moves packets is decided later by gains and queues."""
    return policy.schedules[int(policy.sample_indices(rng, 1)[0])]


def pilot_total_age(topology: NetworkTopology, policy: StationaryPolicy, q: float,
                    slots: int = 1000, seed: int = 0, trials: int = 1) -> float:
    """Sum over flows of the average age of ``policy``, averaged over short fixed-seed runs."""
    idx = topology.pair_index
    plans = [sorted(idx[p] for p in s.pairs) for s in policy.schedules]
    rates = tuple(f.arrival_rate for f in topology.flows)
    total = 0.0
    for trial in range(trials):
        state = SimState(topology, Discipline.DROP_FRESHEST_ONLY)
        chan = ChannelModel(q).sample_block(RngStream(seed, trial, "channel"), slots, len(topology.links)).tolist()
        arr = ArrivalModel(rates).sample_block(RngStream(seed, trial, "arrivals"), slots).tolist()
        picks = policy.sample_indices(RngStream(seed, trial, "pilot"), slots).tolist()
        for t in range(slots):
            state.admit(arr[t], t)
            state.serve(plans[picks[t]], chan[t], t)
        total += sum(state.tracker.cumulative_age_sum) / slots
    return total / trials


def optimize_stationary_distribution(topology: NetworkTopology, q: float = 0.5, *,
                                     pilot_slots: int = 1000, pilot_seed: int = 0, pilot_trials: int = 10,
                                     passes: int = 3, step: float = 0.5) -> StationaryPolicy:
    """Distribution over maximal schedules tuned by coordinate descent on a pilot run.

    Starts from the uniform distribution; each coordinate is scaled up or down
    by ``1 + step`` (then renormalized) whenever that lowers the pilot total
    age, averaged over ``pilot_trials`` runs of ``pilot_slots`` slots. ``step``
    halves after every pass. The pilot reuses the same random numbers for
    every candidate, so the result is a deterministic function of the inputs.
    """
    schedules = topology.maximal_schedules()
    if not schedules:
        raise ValueError("topology has no nonempty feasible schedule")
    n = len(schedules)
    if n == 1:
        return StationaryPolicy(tuple(schedules), (1.0,))
    p = np.full(n, 1.0 / n)

    def cost(vec):
        return pilot_total_age(topology, StationaryPolicy(tuple(schedules), tuple(vec)),
                               q, pilot_slots, pilot_seed, pilot_trials)

    best = cost(p)
    for _ in range(passes):
        for i in range(n):
            for factor in (1.0 + step, 1.0 / (1.0 + step)):
                cand = p.copy()
                cand[i] *= factor
                cand /= cand.sum()
                c = cost(cand)
                if c < best:
                    p, best = cand, c
                    break
        step /= 2.0
    return StationaryPolicy(tuple(schedules), tuple(float(x) for x in p))
