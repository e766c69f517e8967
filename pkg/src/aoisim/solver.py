"""Relaxed scheduling LP solved by cyclic incremental gradient ascent with projection.

The relaxation keeps one variable per (link, flow) pair in ``[0, 1]`` and adds
two families of packing constraints: the flows of one link sum to at most 1,
and the pairs whose links fall in one conflict set sum to at most 1. Without
them the LP optimum would simply be the all-ones vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from aoisim.topology import NetworkTopology, Schedule

PROJ_TOL = 1e-9
STALL_TOL = 1e-6


@dataclass(frozen=True)
class RelaxedPolytope:
    """Box ``[0, 1]^n`` intersected with ``sum(x[g]) <= 1`` for every group ``g``."""

    labels: tuple
    groups: tuple

    @property
    def dim(self) -> int:
        return len(self.labels)

    @classmethod
    def from_topology(cls, topology: NetworkTopology, interference: bool = True) -> "RelaxedPolytope":
        pidx = topology.pair_index
        groups = []
        for link in topology.links:
            g = tuple(pidx[(link, f)] for f in topology.flows_on_link[link])
            if len(g) > 1:
                groups.append(g)
        if interference:
            for cs in topology.conflict_sets:
                g = tuple(sorted(pidx[(l, f)] for l in cs for f in topology.flows_on_link[l]))
                if len(g) > 1 and g not in groups:
                    groups.append(g)
        return cls(tuple(topology.pairs), tuple(groups))

    @cached_property
    def membership(self) -> tuple:
        """For each component, the indices of the groups containing it."""
        out = [[] for _ in range(self.dim)]
        for a, g in enumerate(self.groups):
            for k in g:
                out[k].append(a)
        return tuple(tuple(m) for m in out)

    def max_group_size(self) -> int:
        return max((len(g) for g in self.groups), default=1)

    def violation(self, s) -> float:
        s = [float(v) for v in s]
        v = max([0.0] + [-x for x in s] + [x - 1.0 for x in s])
        for g in self.groups:
            v = max(v, sum(s[k] for k in g) - 1.0)
        return v

    def contains(self, s, tol: float = PROJ_TOL) -> bool:
        return self.violation(s) <= tol


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.01
    max_sweeps: int = 1000
    w_bar: float = 2.0
    r_bar: float = 1.0
    iterate: str = "gradient"
    # stop once the best value gains less than STALL_TOL (relative) over this many sweeps; 0 disables
    patience: int = 50

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("step size alpha must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if self.iterate not in ("gradient", "verbatim"):
            raise ValueError(f"unknown iterate form {self.iterate!r}")


def objective_F(s, theta) -> float:
    return float(np.dot(np.asarray(theta, dtype=float), np.asarray(s, dtype=float)))


def _dykstra(y, groups, tol, max_cycles):
    n = len(y)
    x = list(y)
    box_corr = [0.0] * n
    corr = [[0.0] * len(g) for g in groups]
    for _ in range(max_cycles):
        prev = list(x)
        for i in range(n):
            z = x[i] + box_corr[i]
            v = 0.0 if z < 0.0 else (1.0 if z > 1.0 else z)
            box_corr[i] = z - v
            x[i] = v
        for g, c in zip(groups, corr):
            zs = [x[k] + c[j] for j, k in enumerate(g)]
            excess = sum(zs) - 1.0
            shift = excess / len(g) if excess > 0.0 else 0.0
            for j, k in enumerate(g):
                x[k] = zs[j] - shift
                c[j] = shift
        if max(abs(a - b) for a, b in zip(x, prev)) < tol:
            break
    return x


def _guess_active(polytope, x, slack=1e-3):
    groups = polytope.groups
    active = {a for a, g in enumerate(groups) if sum(x[k] for k in g) >= 1.0 - slack}
    low = {k for k, v in enumerate(x) if v <= slack}
    high = {k for k, v in enumerate(x) if v >= 1.0 - slack}
    return active, low, high


def _solve_small(M, b):
    """Gaussian elimination with partial pivoting; None when ``M`` is singular."""
    n = len(b)
    A = [row[:] + [b[i]] for i, row in enumerate(M)]
    for c in range(n):
        p = max(range(c, n), key=lambda r: abs(A[r][c]))
        if abs(A[p][c]) < 1e-12:
            return None
        A[c], A[p] = A[p], A[c]
        pivot = A[c]
        for r in range(c + 1, n):
            f = A[r][c] / pivot[c]
            if f:
                row = A[r]
                for j in range(c, n + 1):
                    row[j] -= f * pivot[j]
    out = [0.0] * n
    for r in range(n - 1, -1, -1):
        out[r] = (A[r][n] - sum(A[r][j] * out[j] for j in range(r + 1, n))) / A[r][r]
    return out


def _polish(y, polytope, start, tol, max_rounds=25):
    """Solve the KKT system for the active set ``start`` and repair it until it verifies.

    ``start`` is ``(active groups, variables at 0, variables at 1)``. Returns
    ``(x, active_set)`` for the exact projection, or None when the repairs do
    not settle.
    """
    groups = polytope.groups
    member = polytope.membership
    active, low, high = set(start[0]), set(start[1]), set(start[2])
    n = len(y)
    for _ in range(max_rounds):
        act = sorted(active)
        free_sets = [frozenset(k for k in groups[a] if k not in low and k not in high) for a in act]
        rhs = [sum(y[k] for k in fs) + sum(1 for k in groups[a] if k in high) - 1.0 for a, fs in zip(act, free_sets)]
        M = [[float(len(fi & fj)) for fj in free_sets] for fi in free_sets]
        sol = _solve_small(M, rhs) if act else []
        if sol is None:
            sol = np.linalg.lstsq(np.array(M), np.array(rhs), rcond=None)[0].tolist()
        lam = dict(zip(act, sol))
        z = [y[k] - sum(lam.get(a, 0.0) for a in member[k]) for k in range(n)]
        x = [0.0 if k in low else (1.0 if k in high else z[k]) for k in range(n)]
        sums = [sum(x[k] for k in g) for g in groups]
        bad_lam = {a for a in act if lam[a] < -tol}
        bad_group = {a for a in range(len(groups)) if a not in active and sums[a] > 1.0 + tol}
        loose = any(abs(sums[a] - 1.0) > tol for a in act)
        go_low = {k for k in range(n) if k not in low and k not in high and z[k] < -tol}
        go_high = {k for k in range(n) if k not in low and k not in high and z[k] > 1.0 + tol}
        off_low = {k for k in low if z[k] > tol}
        off_high = {k for k in high if z[k] < 1.0 - tol}
        if not (bad_lam or bad_group or loose or go_low or go_high or off_low or off_high):
            return [min(max(v, 0.0), 1.0) for v in x], (active, low, high)
        active = (active - bad_lam) | bad_group
        low = (low - off_low) | go_low
        high = (high - off_high) | go_high
    return None


def project(s, polytope: RelaxedPolytope, tol: float = PROJ_TOL, max_cycles: int = 100_000) -> np.ndarray:
    """Euclidean projection onto the polytope.

    A few loose cycles of Dykstra's scheme (box, then each group half-space,
    with correction terms so the limit is the projection itself) pick out the
    active constraints; the KKT equations for that active set are then solved
    exactly and checked. If the check never passes, Dykstra runs to ``tol``.
    """
    return np.array(_project([float(v) for v in s], polytope, tol, max_cycles)[0])


def _project(y, polytope, tol, max_cycles, hint=None):
    """``project`` on plain lists that also returns the active set, optionally warm-started from ``hint``."""
    if polytope.violation(y) <= tol:
        return list(y), hint
    if hint is not None:
        violated = {a for a, g in enumerate(polytope.groups) if sum(y[k] for k in g) > 1.0 + tol}
        over = {k for k, v in enumerate(y) if v > 1.0 + tol}
        out = _polish(y, polytope, (set(hint[0]) | violated, set(hint[1]) - over, set(hint[2]) | over), tol, max_rounds=5)
        if out is not None:
            return out
    groups = polytope.groups
    guess = _dykstra(y, groups, 1e-4, max_cycles)
    out = _polish(y, polytope, _guess_active(polytope, guess), tol)
    if out is not None:
        return out
    x = _dykstra(y, groups, tol, max_cycles)
    # Dykstra leaves round-off sized excursions below zero; clear them
    x = [v if v > 0.0 else 0.0 for v in x]
    return x, _guess_active(polytope, x)


def igd_solve(theta, polytope: RelaxedPolytope, config: SolverConfig | None = None) -> np.ndarray:
    """Best iterate of cyclic incremental gradient ascent on ``F(s) = theta . s``.

    Component ``k_n = n mod |K|`` (a pure cycle) is raised by ``alpha*theta[k]``
    (``"gradient"``) or by ``alpha*theta[k]*s[k]`` (``"verbatim"``), followed
    by projection. The start point has every component equal to
    ``1 / (1 + largest group size)``, which is strictly interior.
    """
    config = config or SolverConfig()
    theta = [float(v) for v in theta]
    if any(v < 0 for v in theta):
        raise ValueError("coefficients must be nonnegative")
    n = polytope.dim
    s = [1.0 / (1.0 + polytope.max_group_size())] * n
    best, best_val = list(s), objective_F(s, theta)
    verbatim = config.iterate == "verbatim"
    hint = None
    history = [best_val]
    for _ in range(config.max_sweeps):
        start = list(s)
        for k in range(n):
            inc = config.alpha * theta[k] * (s[k] if verbatim else 1.0)
            if inc == 0.0:
                continue
            s[k] += inc
            s, hint = _project(s, polytope, PROJ_TOL, 100_000, hint)
            val = sum(t * v for t, v in zip(theta, s))
            if val > best_val:
                best, best_val = list(s), val
        if max(abs(a - b) for a, b in zip(s, start)) < 1e-15:
            break
        history.append(best_val)
        if config.patience and len(history) > config.patience:
            if best_val - history[-1 - config.patience] <= STALL_TOL * (1.0 + abs(best_val)):
                break
    return np.array(best)


def round_to_schedule(s, polytope: RelaxedPolytope, theta=None) -> Schedule:
    """Greedy rounding: largest components first, kept while every group stays at one active member."""
    s = np.asarray(s, dtype=float)
    theta = np.zeros_like(s) if theta is None else np.asarray(theta, dtype=float)
    order = sorted(range(len(s)), key=lambda k: (-s[k], -theta[k], k))
    member = [[] for _ in range(len(s))]
    for gi, g in enumerate(polytope.groups):
        for k in g:
            member[k].append(gi)
    used = set()
    chosen = []
    for k in order:
        if s[k] <= PROJ_TOL:
            break
        if any(gi in used for gi in member[k]):
            continue
        used.update(member[k])
        chosen.append(polytope.labels[k])
    return Schedule.of(chosen)


def lemma1_gap(config: SolverConfig, n_pairs: int) -> float:
    """Suboptimality allowance ``alpha * w^2 * R^2 * |K| * (4|K| + 1) / 2``."""
    return config.alpha * config.w_bar ** 2 * config.r_bar ** 2 * n_pairs * (4 * n_pairs + 1) / 2.0


def integral_optimum(theta, topology: NetworkTopology) -> float:
    """Exhaustive maximum of ``theta . s`` over feasible 0/1 schedules."""
    from aoisim.topology import enumerate_feasible_schedules

    idx = topology.pair_index
    return max(sum(theta[idx[p]] for p in sch.pairs) for sch in enumerate_feasible_schedules(topology))
