import numpy as np
import pytest

from rrpo.duality import CounterexampleParams, build_counterexample, counterexample_policy
from rrpo.mdp import TabularRCMDP


def random_mdp(rng, S=4, A=2, gamma=0.9, floor=0.0, num_rewards=2):
    """Random MDP; with ``floor > 0`` every kernel entry is at least ``floor``."""
    P = rng.random((S, A, S)) + 0.1
    P /= P.sum(axis=-1, keepdims=True)
    if floor > 0:
        P = floor + (1 - S * floor) * P
    R = rng.random((num_rewards, S, A))
    mu = rng.random(S) + 0.1
    mu /= mu.sum()
    return TabularRCMDP(P, R, np.zeros(num_rewards - 1), gamma, mu)


def random_policy(rng, S, A):
    pi = rng.random((S, A)) + 0.05
    return pi / pi.sum(axis=1, keepdims=True)


@pytest.fixture
def counterexample():
    return build_counterexample(CounterexampleParams())


@pytest.fixture
def ce_policy():
    return counterexample_policy


ACCEPTANCE_LINES = []


def acceptance_report(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
