"""Network graph, flows with fixed paths, interference model and schedule enumeration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Hashable, Iterable, Iterator, Sequence

Node = Hashable
Link = tuple  # (tail, head)
FlowId = str

NODE_EXCLUSIVE = "node-exclusive"


class TopologyError(ValueError):
    """Raised for malformed topology or flow descriptions."""


@dataclass(frozen=True)
class Flow:
    id: FlowId
    path: tuple
    arrival_rate: float = 0.0
    age_target: float = math.inf

    @property
    def src(self):
        return self.path[0]

    @property
    def des(self):
        return self.path[-1]

    @property
    def links(self) -> tuple:
        return tuple(zip(self.path[:-1], self.path[1:]))

    @property
    def hops(self) -> int:
        return len(self.path) - 1


@dataclass(frozen=True)
class Schedule:
    """Set of active (link, flow id) pairs for one slot."""

    pairs: frozenset = field(default_factory=frozenset)

    @classmethod
    def of(cls, pairs: Iterable[tuple]) -> "Schedule":
        return cls(frozenset((tuple(l), f) for l, f in pairs))

    def __call__(self, link, flow_id) -> int:
        return int((tuple(link), flow_id) in self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(sorted(self.pairs, key=_pair_key))

    @property
    def links(self) -> frozenset:
        return frozenset(l for l, _ in self.pairs)

    def is_empty(self) -> bool:
        return not self.pairs


def _node_key(n):
    # ints before strings, each in natural order
    return (0, n, "") if isinstance(n, int) else (1, 0, str(n))


def _link_key(link):
    return (_node_key(link[0]), _node_key(link[1]))


def _pair_key(pair):
    return (_link_key(pair[0]), str(pair[1]))


@dataclass(frozen=True, eq=False)
class NetworkTopology:
    """Immutable network: nodes, path-derived directed links, conflict sets and flows.

    ``links`` is sorted lexicographically by node id; ``flows`` keeps declaration
    order, which is also the canonical flow order used for tie-breaking.
    """

    nodes: tuple
    links: tuple
    conflict_sets: tuple
    flows: tuple

    @cached_property
    def link_index(self) -> dict:
        return {l: i for i, l in enumerate(self.links)}

    @cached_property
    def flow_index(self) -> dict:
        return {f.id: i for i, f in enumerate(self.flows)}

    @cached_property
    def pairs(self) -> tuple:
        """Canonical list K of (link, flow id) pairs lying on flow paths."""
        out = [(l, f.id) for f in self.flows for l in f.links]
        return tuple(sorted(out, key=lambda p: (self.link_index[p[0]], self.flow_index[p[1]])))

    @cached_property
    def pair_index(self) -> dict:
        return {p: k for k, p in enumerate(self.pairs)}

    @cached_property
    def flows_on_link(self) -> dict:
        out = {l: [] for l in self.links}
        for f in self.flows:
            for l in f.links:
                out[l].append(f.id)
        return {l: tuple(v) for l, v in out.items()}

    @cached_property
    def conflicts(self) -> frozenset:
        """Symmetric, irreflexive set of conflicting link pairs (both orders)."""
        out = set()
        for cs in self.conflict_sets:
            for a in cs:
                for b in cs:
                    if a != b:
                        out.add((a, b))
        return frozenset(out)

    def conflict(self, a, b) -> bool:
        return (tuple(a), tuple(b)) in self.conflicts

    def flow(self, flow_id) -> Flow:
        return self.flows[self.flow_index[flow_id]]

    def is_feasible(self, schedule: Schedule) -> bool:
        seen_links = set()
        for link, fid in schedule.pairs:
            if fid not in self.flow_index or link not in self.flow(fid).links:
                return False
            if link in seen_links:
                return False
            seen_links.add(link)
        active = list(seen_links)
        for i, a in enumerate(active):
            for b in active[i + 1:]:
                if self.conflict(a, b):
                    return False
        return True

    @cached_property
    def independent_link_sets(self) -> tuple:
        """Every conflict-free link subset, DFS order with "skip" tried first."""
        out = []
        n = len(self.links)

        def rec(i, chosen):
            if i == n:
                out.append(tuple(chosen))
                return
            rec(i + 1, chosen)
            l = self.links[i]
            if all(not self.conflict(l, c) for c in chosen):
                chosen.append(l)
                rec(i + 1, chosen)
                chosen.pop()

        rec(0, [])
        return tuple(out)

    @cached_property
    def maximal_link_sets(self) -> tuple:
        """Maximal conflict-free link sets, sorted by their link indices."""
        sets = [frozenset(s) for s in self.independent_link_sets]
        out = []
        for s, raw in zip(sets, self.independent_link_sets):
            if not raw:
                continue
            extendable = any(
                l not in s and all(not self.conflict(l, c) for c in s) for l in self.links
            )
            if not extendable:
                out.append(raw)
        out.sort(key=lambda s: [self.link_index[l] for l in s])
        return tuple(out)

    def maximal_schedules(self) -> list:
        """Maximal feasible schedules: a maximal link set with one flow per link."""
        out = []
        for lset in self.maximal_link_sets:
            for choice in _product([self.flows_on_link[l] for l in lset]):
                out.append(Schedule.of(zip(lset, choice)))
        return out


def _product(options: Sequence[Sequence]) -> Iterator[tuple]:
    if not options:
        yield ()
        return
    for head in options[0]:
        for tail in _product(options[1:]):
            yield (head,) + tail


def enumerate_feasible_schedules(topology: NetworkTopology) -> list:
    """Every feasible schedule, starting with the empty one, in canonical order."""
    out = []
    links = topology.links
    n = len(links)

    def rec(i, chosen, used):
        if i == n:
            out.append(Schedule.of(chosen))
            return
        rec(i + 1, chosen, used)
        l = links[i]
        if any(topology.conflict(l, u) for u in used):
            return
        used.append(l)
        for fid in topology.flows_on_link[l]:
            chosen.append((l, fid))
            rec(i + 1, chosen, used)
            chosen.pop()
        used.pop()

    rec(0, [], [])
    return out


def _as_node(x):
    return x if isinstance(x, (int, str)) else str(x)


def validate_and_build(spec: dict) -> NetworkTopology:
    """Build a NetworkTopology from a plain description.

    Keys: ``nodes`` (optional, inferred from paths), ``edges`` (optional
    undirected adjacency that paths must follow), ``flows`` (list of
    ``{id, path, rate, target}``) and ``interference`` (``"node-exclusive"`` or a
    list of conflict sets, each a list of ``[tail, head]`` links).
    """
    flows_raw = spec.get("flows")
    if not flows_raw:
        flows_raw = []
    nodes = {_as_node(n) for n in spec.get("nodes", [])}

    edges = None
    if spec.get("edges") is not None:
        edges = set()
        for e in spec["edges"]:
            a, b = (_as_node(x) for x in e)
            if a == b:
                raise TopologyError(f"self-loop edge at node {a!r}")
            key = frozenset((a, b))
            if key in edges:
                raise TopologyError(f"duplicate edge {a!r}-{b!r}")
            edges.add(key)
            nodes.update((a, b))

    flows = []
    seen_ids = set()
    for i, fr in enumerate(flows_raw):
        path = tuple(_as_node(n) for n in fr["path"])
        fid = str(fr.get("id", f"{path[0]}->{path[-1]}" if path else i))
        if fid in seen_ids:
            raise TopologyError(f"duplicate flow id {fid!r}")
        seen_ids.add(fid)
        if len(path) < 2:
            raise TopologyError(f"flow {fid!r}: path needs at least two nodes")
        if len(set(path)) != len(path):
            raise TopologyError(f"flow {fid!r}: path revisits a node")
        if edges is not None:
            for a, b in zip(path[:-1], path[1:]):
                if frozenset((a, b)) not in edges:
                    raise TopologyError(f"flow {fid!r}: path discontinuity at {a!r}->{b!r}")
        rate = float(fr.get("rate", 0.0))
        if not 0.0 <= rate <= 1.0:
            raise TopologyError(f"flow {fid!r}: rate {rate} outside [0, 1]")
        target = fr.get("target")
        target = math.inf if target is None else float(target)
        if target <= 0:
            raise TopologyError(f"flow {fid!r}: age target must be positive")
        nodes.update(path)
        flows.append(Flow(fid, path, rate, target))

    links = set()
    for f in flows:
        links.update(f.links)
    links = tuple(sorted(links, key=_link_key))
    node_order = tuple(sorted(nodes, key=_node_key))

    interference = spec.get("interference", NODE_EXCLUSIVE)
    if interference == NODE_EXCLUSIVE:
        conflict_sets = []
        for n in node_order:
            touching = tuple(l for l in links if n in l)
            if len(touching) > 1:
                conflict_sets.append(touching)
    elif isinstance(interference, list):
        conflict_sets = []
        for cs in interference:
            group = tuple(sorted({tuple(_as_node(x) for x in l) for l in cs}, key=_link_key))
            for l in group:
                if l[0] not in nodes or l[1] not in nodes:
                    raise TopologyError(f"conflict set references unknown link {l!r}")
            # links outside every flow path never activate, so they cannot constrain
            group = tuple(l for l in group if l in links)
            if len(group) > 1:
                conflict_sets.append(group)
    else:
        raise TopologyError(f"unknown interference model {interference!r}")

    return NetworkTopology(
        nodes=node_order,
        links=links,
        conflict_sets=tuple(conflict_sets),
        flows=tuple(flows),
    )


_NETWORK_1 = {
    "nodes": list(range(1, 12)),
    "edges": [[2, 6], [6, 9], [9, 3], [3, 2], [6, 11], [2, 1], [2, 8], [9, 10], [3, 4], [4, 5], [4, 7]],
    "flows": [
        {"id": "1->5", "path": [1, 2, 3, 4, 5]},
        {"id": "6->7", "path": [6, 2, 3, 4, 7]},
        {"id": "8->10", "path": [8, 2, 3, 9, 10]},
        {"id": "11->9", "path": [11, 6, 9]},
        {"id": "11->2", "path": [11, 6, 2]},
    ],
}

_NETWORK_2 = {
    "nodes": list(range(1, 12)),
    "edges": [
        [1, 2], [2, 3], [2, 4], [4, 5], [3, 6], [4, 8],
        [5, 7], [6, 7], [7, 9], [6, 10], [10, 11], [3, 5],
    ],
    "flows": [
        {"id": "1->9", "path": [1, 2, 4, 5, 7, 9]},
        {"id": "3->8", "path": [3, 2, 4, 8]},
        {"id": "4->10", "path": [4, 5, 3, 6, 10]},
        {"id": "4->11", "path": [4, 5, 7, 6, 10, 11]},
    ],
}


def builtin_network(which: int, rate: float | Sequence[float] = 0.0,
                    targets: Sequence[float | None] | None = None) -> dict:
    """Topology description of one of the two reference networks.

    ``rate`` is a scalar or one value per flow; ``targets`` holds one age target
    per flow (``None`` for no target).
    """
    try:
        base = {1: _NETWORK_1, 2: _NETWORK_2}[int(which)]
    except (KeyError, ValueError, TypeError):
        raise TopologyError(f"unknown builtin network {which!r}; expected 1 or 2") from None
    n = len(base["flows"])
    rates = [rate] * n if isinstance(rate, (int, float)) else list(rate)
    tgts = [None] * n if targets is None else list(targets)
    if len(rates) != n or len(tgts) != n:
        raise TopologyError(f"network {which} has {n} flows")
    flows = [dict(f, rate=r, target=t) for f, r, t in zip(base["flows"], rates, tgts)]
    return {
        "nodes": list(base["nodes"]),
        "edges": [list(e) for e in base["edges"]],
        "flows": flows,
        "interference": NODE_EXCLUSIVE,
    }


def describe(topology: NetworkTopology) -> dict[str, Any]:
    """Inverse of :func:`validate_and_build` (without declared edges)."""
    return {
        "nodes": list(topology.nodes),
        "flows": [
            {
                "id": f.id,
                "path": list(f.path),
                "rate": f.arrival_rate,
                "target": None if math.isinf(f.age_target) else f.age_target,
            }
            for f in topology.flows
        ],
        "interference": [[list(l) for l in cs] for cs in topology.conflict_sets],
    }
