import itertools

import pytest

from aoisim.topology import Schedule, builtin_network, validate_and_build


def line_topology(n_flows=1, rate=0.1):
    flows = [{"id": f"f{i}", "path": [1, 2, 3], "rate": rate} for i in range(n_flows)]
    return validate_and_build({"flows": flows})


def brute_force_schedules(topology):
    """Every subset of (link, flow) pairs that passes the three schedule rules, checked directly."""
    pairs = list(topology.pairs)
    out = []
    for mask in itertools.product([0, 1], repeat=len(pairs)):
        chosen = [p for p, m in zip(pairs, mask) if m]
        links = [l for l, _ in chosen]
        if len(set(links)) != len(links):
            continue
        ok = True
        for a, b in itertools.combinations(links, 2):
            if set(a) & set(b):
                ok = False
                break
        if ok:
            out.append(Schedule.of(chosen))
    return out


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE_LINES, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def net1():
    return validate_and_build(builtin_network(1, 0.1))


@pytest.fixture(scope="session")
def net2():
    return validate_and_build(builtin_network(2, 0.1))
