import os

import numpy as np
import pytest

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name):
    return os.path.join(FIXTURES, name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def corner_snapshot(seed=0, n=6):
    """Every cost term grows with its exponent: transfer and load bases exceed 1
    and uptime 0 pins the reliability term at 1, so F is smallest at the low
    corner of the (gamma, beta) box."""
    from swarmshard.network import Link, NetworkState, NodeInfo

    rng = np.random.default_rng(seed)
    nodes = [NodeInfo(i, 1.0, 0.0, float(rng.uniform(2, 3)), 0.0) for i in range(n)]
    links = [Link(a, b, 1.0, float(rng.uniform(2, 5))) for a in range(n) for b in range(a + 1, n)]
    return NetworkState.build(nodes, links, payload=10.0)


ACCEPTANCE = []


def record(criterion, passed, detail):
    """Log one acceptance line; printed now and again in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
