import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aoisim.policies import (
    PolicyConfig,
    PolicyKind,
    Scheduler,
    StationaryPolicy,
    bp_link_weight,
    choose_schedule,
    optimize_stationary_distribution,
    pair_coefficients,
    sdspd_objective,
    stationary_schedule,
    weight,
)
from aoisim.sim import Discipline, Packet, SimState
from aoisim.stochastic import RngStream
from aoisim.topology import Schedule, enumerate_feasible_schedules, validate_and_build

from conftest import brute_force_schedules

INF = math.inf


@pytest.mark.parametrize("x, target, beta, expected", [
    (5, 10, 1, 1),
    (10, 10, 1, 2),
    (100, INF, 1, 1),
    (11, 10, 0.5, 1.5),
])
def test_weight(x, target, beta, expected):
    assert weight(x, target, beta) == expected


def test_policy_disciplines():
    assert PolicyKind.SDSPD.discipline is Discipline.DROP_FRESHEST_ONLY
    assert PolicyKind.BP_D.discipline is Discipline.DROP_FRESHEST_ONLY
    assert PolicyKind.SDSPND_FCFS.discipline is Discipline.FCFS
    assert PolicyKind.SDSPND_LCFS.discipline is Discipline.LCFS
    assert PolicyKind.BP_FCFS.discipline is Discipline.FCFS
    assert PolicyKind.BP_LCFS.discipline is Discipline.LCFS
    assert PolicyKind.STATIONARY.discipline is Discipline.DROP_FRESHEST_ONLY
    assert PolicyKind.parse("sdspnd-lcfs") is PolicyKind.SDSPND_LCFS
    with pytest.raises(ValueError):
        PolicyKind.parse("maxweight")
    with pytest.raises(ValueError):
        PolicyConfig(beta=0)


def line(discipline=Discipline.DROP_FRESHEST_ONLY, n_flows=1):
    topo = validate_and_build({"flows": [{"id": f"f{i}", "path": [1, 2, 3]} for i in range(n_flows)]})
    return topo, SimState(topo, discipline)


def put(state, node, flow, gens):
    q = state.queue(node, flow)
    for g in gens:
        q.append(Packet(flow, g, g))


def test_objective_empty_and_unit():
    topo, state = line()
    assert sdspd_objective(Schedule(), state, [1, 1]) == 0
    put(state, 1, "f0", [0])
    assert sdspd_objective(Schedule.of([((1, 2), "f0")]), state, [1, 1]) == 1


def test_argmax_prefers_larger_coefficient():
    topo, state = line(Discipline.FCFS)
    put(state, 1, "f0", [0, 1])
    put(state, 2, "f0", [0])
    theta = pair_coefficients(PolicyConfig(kind="SDSPnD-FCFS"), state, [1, 1])
    assert theta == [2.0, 1.0]
    best = max(enumerate_feasible_schedules(topo),
               key=lambda s: sdspd_objective(s, state, [1, 1], PolicyConfig(kind="SDSPnD-FCFS")))
    chosen = choose_schedule("SDSPnD-FCFS", state, [1, 1])
    assert chosen == best == Schedule.of([((1, 2), "f0")])


def test_bp_link_weight():
    topo, state = line()
    put(state, 1, "f0", [0])
    assert bp_link_weight(state, (1, 2)) == (1, "f0")
    topo, state = line()
    put(state, 2, "f0", [0])
    assert bp_link_weight(state, (1, 2)) == (0, "f0")
    # destination backlog counts as zero
    assert bp_link_weight(state, (2, 3)) == (1, "f0")


def test_bp_link_weight_two_flows():
    topo, state = line(Discipline.FCFS, n_flows=2)
    put(state, 1, "f0", range(4))
    put(state, 2, "f0", [0])  # differential 3
    put(state, 1, "f1", range(5))  # differential 5
    assert bp_link_weight(state, (1, 2)) == (5, "f1")


def test_all_empty_gives_empty_schedule(net1):
    for kind in PolicyKind:
        if kind is PolicyKind.STATIONARY:
            continue
        state = SimState(net1, kind.discipline)
        assert choose_schedule(kind, state, [1] * len(net1.links)).is_empty()


def test_single_packet_is_sent(net1):
    state = SimState(net1, Discipline.DROP_FRESHEST_ONLY)
    put(state, 3, "8->10", [0])
    gains = [1] * len(net1.links)
    assert choose_schedule("SDSPD", state, gains) == Schedule.of([((3, 9), "8->10")])
    gains[net1.link_index[(3, 9)]] = 0
    assert choose_schedule("SDSPD", state, gains).is_empty()


def test_age_target_prioritizes_flow():
    topo = validate_and_build({"flows": [
        {"id": "A", "path": [1, 2], "target": 10},
        {"id": "B", "path": [3, 2]},
    ]})
    state = SimState(topo, Discipline.DROP_FRESHEST_ONLY)
    put(state, 1, "A", [0])
    put(state, 3, "B", [0])
    state.tracker.current_age[:] = [12, 12]
    cfg = PolicyConfig(beta=1.0)
    assert choose_schedule(cfg, state, [1, 1]) == Schedule.of([((1, 2), "A")])
    state.tracker.current_age[:] = [12, 5]
    assert choose_schedule(cfg, state, [1, 1]) == Schedule.of([((1, 2), "A")])
    state.tracker.current_age[:] = [5, 12]
    # equal weights: the tie goes to the canonically first link
    assert choose_schedule(cfg, state, [1, 1]) == Schedule.of([((1, 2), "A")])
    cfg = PolicyConfig(age_targets=(INF, 10))
    assert choose_schedule(cfg, state, [1, 1]) == Schedule.of([((3, 2), "B")])


# Random states on the reference network, checked against the brute-force argmax.

def random_state(topo, kind, rng):
    state = SimState(topo, kind.discipline)
    for fi, f in enumerate(topo.flows):
        for h in range(f.hops):
            n = rng.randint(0, 1) if kind.discipline is Discipline.DROP_FRESHEST_ONLY else rng.randint(0, 4)
            for g in range(n):
                state.queues[fi][h].append(Packet(f.id, g, g))
        state.tracker.current_age[fi] = rng.randint(0, 40)
    gains = [rng.randint(0, 1) for _ in topo.links]
    return state, gains


@pytest.fixture(scope="module")
def net1_all_schedules(net1):
    return brute_force_schedules(net1)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([k for k in PolicyKind if k is not PolicyKind.STATIONARY]),
       st.integers(0, 2**31), st.sampled_from(["lexicographic", "seeded-random"]))
def test_argmax_dominance(net1, net1_all_schedules, kind, seed, tie_break):
    rng = random.Random(seed)
    state, gains = random_state(net1, kind, rng)
    targets = tuple(rng.choice([None, 10, 20, 30]) for _ in net1.flows)
    cfg = PolicyConfig(kind=kind, age_targets=targets, beta=rng.choice([0.5, 1.0, 3.0]), tie_break=tie_break)
    chosen = Scheduler(net1, cfg, RngStream(seed, label="policy")).choose(state, gains)
    assert net1.is_feasible(chosen)
    best = max(sdspd_objective(s, state, gains, cfg) for s in net1_all_schedules)
    assert sdspd_objective(chosen, state, gains, cfg) == pytest.approx(best)
    theta = pair_coefficients(cfg, state, gains)
    assert all(theta[net1.pair_index[p]] > 0 for p in chosen.pairs)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 50))
def test_scale_invariance(net1, seed, c):
    rng = random.Random(seed)
    state, gains = random_state(net1, PolicyKind.SDSPND_FCFS, rng)
    sched = Scheduler(net1, PolicyConfig(kind="SDSPnD-FCFS"))
    base = sched.choose_pairs(state, gains)
    theta = sched.coefficients(state, gains)
    sched.coefficients = lambda *_: [c * x for x in theta]
    assert sched.choose_pairs(state, gains) == base


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_weight_monotonicity(net1, seed):
    rng = random.Random(seed)
    state, gains = random_state(net1, PolicyKind.SDSPD, rng)
    fi = rng.randrange(len(net1.flows))
    fid = net1.flows[fi].id
    ages = state.tracker.current_age
    targets = [None] * len(net1.flows)
    targets[fi] = ages[fi] + rng.randint(-5, 5) + 0.5
    beta = rng.choice([0.5, 1.0, 2.0])
    chosen = choose_schedule(PolicyConfig(age_targets=tuple(targets), beta=beta), state, gains)
    if not any(f == fid for _, f in chosen.pairs):
        return
    targets2 = list(targets)
    targets2[fi] = targets[fi] - rng.randint(0, 10)
    chosen2 = choose_schedule(PolicyConfig(age_targets=tuple(targets2), beta=beta + rng.random()), state, gains)
    assert any(f == fid for _, f in chosen2.pairs)


def test_stationary_point_mass():
    rng = RngStream(0, label="policy")
    pol = StationaryPolicy((Schedule(),), (1.0,))
    assert all(stationary_schedule(pol, rng, t).is_empty() for t in range(20))


def test_stationary_uniform_frequencies(net1):
    scheds = net1.maximal_schedules()
    pol = StationaryPolicy.uniform(scheds)
    n = 100_000
    counts = np.bincount(pol.sample_indices(RngStream(3, label="policy"), n), minlength=len(scheds))
    p = 1 / len(scheds)
    sigma = math.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3.5 * sigma)
    chi2 = ((counts - n * p) ** 2 / (n * p)).sum()
    # df = 61; 99.9% quantile is about 100
    assert chi2 < 100


def test_stationary_weighted_frequencies():
    pol = StationaryPolicy((Schedule(), Schedule.of([((1, 2), "a")])), (0.7, 0.3))
    picks = pol.sample_indices(RngStream(4, label="policy"), 100_000)
    assert abs((picks == 0).mean() - 0.7) <= 0.01


def test_stationary_rejects_bad_distribution():
    with pytest.raises(ValueError):
        StationaryPolicy((Schedule(),), (0.5,))


def test_optimize_single_link():
    topo = validate_and_build({"flows": [{"id": "a", "path": [1, 2], "rate": 0.3}]})
    pol = optimize_stationary_distribution(topo)
    assert pol.schedules == (Schedule.of([((1, 2), "a")]),)
    assert pol.probs == (1.0,)


@pytest.mark.parametrize("rate", [0.1, 0.5])
def test_optimize_symmetric_flows(rate):
    topo = validate_and_build({"flows": [
        {"id": "a", "path": [1, 2], "rate": rate},
        {"id": "b", "path": [3, 2], "rate": rate},
    ]})
    pol = optimize_stationary_distribution(topo)
    assert len(pol.probs) == 2
    assert abs(pol.probs[0] - 0.5) <= 0.05
    assert optimize_stationary_distribution(topo).probs == pol.probs


def test_distributed_scheduler_is_feasible(net1):
    rng = random.Random(5)
    for solver in ({"alpha": 0.05, "max_sweeps": 30}, {"alpha": 0.05, "max_sweeps": 30, "interference": False}):
        cfg = PolicyConfig(scheduler="distributed", solver=solver)
        for _ in range(5):
            state, gains = random_state(net1, PolicyKind.SDSPD, rng)
            chosen = Scheduler(net1, cfg).choose(state, gains)
            assert net1.is_feasible(chosen)


def test_distributed_matches_exhaustive_when_clear(net1):
    state = SimState(net1, Discipline.DROP_FRESHEST_ONLY)
    put(state, 1, "1->5", [0])
    put(state, 11, "11->9", [0])
    gains = [1] * len(net1.links)
    cfg = PolicyConfig(scheduler="distributed", solver={"alpha": 0.01, "max_sweeps": 500})
    assert Scheduler(net1, cfg).choose(state, gains) == choose_schedule("SDSPD", state, gains)
