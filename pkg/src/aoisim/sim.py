"""Slot-by-slot queue and age dynamics.

Timing within slot ``t``:

1. exogenous arrivals are generated at their sources with ``gen_time = t`` and
   are eligible for service in slot ``t``;
2. the schedule is applied: every active (link, flow) whose link gain is 1 and
   whose queue holds an eligible packet moves exactly one packet;
3. relayed packets land in the next-hop queue with eligibility ``t + 1``;
   delivered packets update the destination age at boundary ``t + 1``.

Ages start at 0 (as if a packet generated at time 0 were delivered at time 0)
and the running average after ``t`` slots is the mean of the ages at
boundaries ``1..t``.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from aoisim.topology import NetworkTopology, Schedule


class Discipline(enum.Enum):
    DROP_FRESHEST_ONLY = "drop"
    FCFS = "fcfs"
    LCFS = "lcfs"


class Packet(NamedTuple):
    flow: str
    gen_time: int
    eligible: int = 0


class ContractError(RuntimeError):
    """A precondition of the slot dynamics was violated."""


def drop_insert(buffer, packet: Packet):
    """Insert under the freshest-only discipline.

    Returns ``(buffer, dropped)``. The buffer is modified in place and holds at
    most one packet afterwards.
    """
    if all(packet.gen_time > p.gen_time for p in buffer):
        dropped = list(buffer)
        buffer.clear()
        buffer.append(packet)
        return buffer, dropped
    return buffer, [packet]


@dataclass
class AgeTracker:
    latest_delivered_gen: list
    current_age: list
    cumulative_age_sum: list
    slots: int = 0

    @classmethod
    def fresh(cls, n_flows: int) -> "AgeTracker":
        return cls([0] * n_flows, [0] * n_flows, [0] * n_flows)

    @classmethod
    def from_ages(cls, ages_per_flow) -> "AgeTracker":
        """Tracker whose history of boundary ages is given explicitly (for reporting)."""
        ages_per_flow = [list(a) for a in ages_per_flow]
        slots = len(ages_per_flow[0]) if ages_per_flow else 0
        return cls(
            [slots - a[-1] if a else 0 for a in ages_per_flow],
            [a[-1] if a else 0 for a in ages_per_flow],
            [sum(a) for a in ages_per_flow],
            slots,
        )

    def close_slot(self, t: int, delivered_gens) -> None:
        """Advance to boundary ``t + 1`` given (flow index, gen) deliveries of slot ``t``."""
        latest = self.latest_delivered_gen
        for fi, g in delivered_gens:
            if g > latest[fi]:
                latest[fi] = g
        boundary = t + 1
        age = self.current_age
        acc = self.cumulative_age_sum
        for fi in range(len(latest)):
            a = boundary - latest[fi]
            age[fi] = a
            acc[fi] += a
        self.slots = boundary


def average_age(tracker: AgeTracker, t: int | None = None) -> list:
    """Per-flow average age over boundaries ``1..t`` (slots)."""
    if t is None:
        t = tracker.slots
    if t <= 0:
        raise ValueError("average age needs a horizon t >= 1")
    if t != tracker.slots:
        raise ValueError(f"tracker holds {tracker.slots} slots, asked for {t}")
    return [s / t for s in tracker.cumulative_age_sum]


@dataclass
class StepOutcome:
    served: dict = field(default_factory=dict)
    delivered: list = field(default_factory=list)
    dropped: list = field(default_factory=list)


class SimState:
    """Queues of every (node, flow) pair plus the per-flow age tracker.

    Queues are stored by flow and hop position: ``queues[fi][h]`` is the buffer
    of flow ``fi`` at ``path[h]``. Paths never revisit a node, so this is the
    same as indexing by (node, flow).
    """

    def __init__(self, topology: NetworkTopology, discipline: Discipline):
        self.topology = topology
        self.discipline = discipline
        self.queues = [[deque() for _ in range(f.hops)] for f in topology.flows]
        self.tracker = AgeTracker.fresh(len(topology.flows))
        self.created = [0] * len(topology.flows)
        self.delivered = [0] * len(topology.flows)
        self.dropped = [0] * len(topology.flows)
        # pair k -> (flow index, hop, link index, last hop?)
        self.pair_meta = []
        for link, fid in topology.pairs:
            fi = topology.flow_index[fid]
            h = topology.flows[fi].links.index(link)
            self.pair_meta.append((fi, h, topology.link_index[link], h == topology.flows[fi].hops - 1))
        self._pos = {
            (node, f.id): (fi, h)
            for fi, f in enumerate(topology.flows)
            for h, node in enumerate(f.path[:-1])
        }

    @property
    def t(self) -> int:
        return self.tracker.slots

    def queue(self, node, flow_id):
        """Buffer of ``flow_id`` at ``node`` (empty tuple if the flow never queues there)."""
        pos = self._pos.get((node, flow_id))
        if pos is None:
            return ()
        return self.queues[pos[0]][pos[1]]

    def qlen(self, node, flow_id) -> int:
        return len(self.queue(node, flow_id))

    def in_transit(self) -> int:
        return sum(len(q) for qs in self.queues for q in qs)

    def _insert(self, buf, packet: Packet, dropped: list) -> None:
        if self.discipline is Discipline.DROP_FRESHEST_ONLY:
            if buf:
                _, lost = drop_insert(buf, packet)
                dropped.extend(lost)
            else:
                buf.append(packet)
        else:
            buf.append(packet)

    def admit(self, arrivals, t: int, outcome: StepOutcome | None = None) -> None:
        """Create packets at sources; ``arrivals`` is a per-flow 0/1 sequence."""
        dropped = outcome.dropped if outcome is not None else []
        flows = self.topology.flows
        for fi, a in enumerate(arrivals):
            if a:
                self.created[fi] += 1
                self._insert(self.queues[fi][0], Packet(flows[fi].id, t, t), dropped)
        if outcome is None:
            self._count_drops(dropped)

    def _count_drops(self, dropped) -> None:
        fidx = self.topology.flow_index
        for p in dropped:
            self.dropped[fidx[p.flow]] += 1

    def _take(self, buf, t: int):
        if not buf:
            return None
        if self.discipline is Discipline.FCFS:
            if buf[0].eligible <= t:
                return buf.popleft()
            return None
        # freshest-only holds one packet; LCFS serves the latest eligible arrival
        for i in range(len(buf) - 1, -1, -1):
            if buf[i].eligible <= t:
                p = buf[i]
                del buf[i]
                return p
        return None

    def serve(self, active_pairs, gains, t: int, outcome: StepOutcome | None = None) -> StepOutcome:
        """Apply the activation of pair indices ``active_pairs`` under link ``gains``."""
        if outcome is None:
            outcome = StepOutcome()
        pairs = self.topology.pairs
        meta = self.pair_meta
        moves = []
        for k in active_pairs:
            fi, h, li, last = meta[k]
            if not gains[li]:
                continue
            p = self._take(self.queues[fi][h], t)
            if p is None:
                continue
            outcome.served[pairs[k]] = 1
            moves.append((fi, h, last, p))
        delivered_gens = []
        for fi, h, last, p in moves:
            if last:
                outcome.delivered.append(p)
                self.delivered[fi] += 1
                delivered_gens.append((fi, p.gen_time))
            else:
                self._insert(self.queues[fi][h + 1], p._replace(eligible=t + 1), outcome.dropped)
        self._count_drops(outcome.dropped)
        self.tracker.close_slot(t, delivered_gens)
        return outcome


def step(state: SimState, schedule: Schedule, channel_state, arrivals, t: int) -> StepOutcome:
    """Advance ``state`` through slot ``t``.

    ``channel_state`` maps link -> gain (or is a per-link sequence in canonical
    link order); ``arrivals`` maps flow id -> 0/1 (or a per-flow sequence).
    Arrivals are admitted before the schedule is applied.
    """
    topo = state.topology
    if t != state.t:
        raise ContractError(f"state is at slot {state.t}, step called for slot {t}")
    if not topo.is_feasible(schedule):
        raise ContractError(f"infeasible schedule {sorted(schedule.pairs, key=str)}")
    if isinstance(channel_state, dict):
        gains = [int(channel_state.get(l, 0)) for l in topo.links]
    else:
        gains = list(channel_state)
    if isinstance(arrivals, dict):
        arr = [int(arrivals.get(f.id, 0)) for f in topo.flows]
    else:
        arr = list(arrivals)
    outcome = StepOutcome()
    state.admit(arr, t, outcome)
    active = sorted(topo.pair_index[p] for p in schedule.pairs)
    return state.serve(active, gains, t, outcome)
