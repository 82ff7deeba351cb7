import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rrpo.errors import InvalidInputError
from rrpo.mdp import (
    SoftmaxPolicy,
    TabularRCMDP,
    discounted_visitation,
    dumps_mdp,
    loads_mdp,
    load_mdp,
    nominal_q,
    nominal_value,
    policy_from_logits,
    save_mdp,
    transition_under_policy,
)

from conftest import random_mdp, random_policy


def test_softmax_examples():
    assert np.allclose(policy_from_logits([[0.0, 0.0]]), [[0.5, 0.5]])
    assert np.allclose(policy_from_logits([[3.3, 3.3, 3.3]]), [[1 / 3] * 3])
    pi = policy_from_logits([[math.log(3), 0.0]])
    assert np.allclose(pi, [[0.75, 0.25]], atol=1e-15)


def test_softmax_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        policy_from_logits([[0.0, np.nan]])
    with pytest.raises(InvalidInputError):
        SoftmaxPolicy(np.array([[np.inf, 0.0]]))


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.floats(-100, 100))
def test_softmax_shift_invariance(row, c):
    theta = np.array([row])
    assert np.allclose(policy_from_logits(theta), policy_from_logits(theta + c), atol=1e-12)


def test_policy_matrix_counterexample(counterexample, ce_policy):
    mdp, _ = counterexample
    assert np.array_equal(transition_under_policy(mdp, ce_policy(0.0)), [[1, 1], [0, 0]])
    assert np.allclose(transition_under_policy(mdp, ce_policy(1.0)), [[0.5, 1], [0.5, 0]])


def test_policy_matrix_deterministic_is_01():
    rng = np.random.default_rng(0)
    S, A = 5, 3
    P = np.zeros((S, A, S))
    P[np.arange(S)[:, None], np.arange(A)[None, :], rng.integers(S, size=(S, A))] = 1
    pi = np.eye(A)[rng.integers(A, size=S)]
    M = transition_under_policy(P, pi)
    assert set(np.unique(M)) <= {0.0, 1.0}
    assert np.allclose(M.sum(axis=0), 1)


def test_policy_matrix_shape_mismatch(counterexample):
    mdp, _ = counterexample
    with pytest.raises(InvalidInputError):
        transition_under_policy(mdp, np.full((3, 2), 0.5))


def test_occupancy_examples(counterexample, ce_policy):
    mdp, _ = counterexample
    d = discounted_visitation(mdp, ce_policy(0.0), mdp.initial_dist, 0.5).values
    assert np.allclose(d, [2, 0], atol=1e-12)
    d = discounted_visitation(mdp, ce_policy(1.0), mdp.initial_dist, 0.5).values
    assert np.allclose(d, [1.6, 0.4], atol=1e-12)
    # closed form (1/det) [1, gamma pi1 (1 - p)] with det = 0.625
    assert np.allclose(d, np.array([1, 0.5 * 0.5]) / 0.625)


def test_occupancy_mass():
    rng = np.random.default_rng(1)
    for _ in range(20):
        mdp = random_mdp(rng, S=5, A=3, gamma=rng.uniform(0.1, 0.99))
        pi = random_policy(rng, 5, 3)
        d = discounted_visitation(mdp, pi, mdp.initial_dist, mdp.discount)
        assert d.values.sum() == pytest.approx(1 / (1 - mdp.discount), rel=1e-10)
        dn = discounted_visitation(mdp, pi, mdp.initial_dist, mdp.discount, normalized=True)
        assert dn.values.sum() == pytest.approx(1.0, abs=1e-10)
        # V(mu) = r_pi . d
        r_pi = (pi * mdp.rewards[0]).sum(axis=1)
        assert mdp.initial_dist @ nominal_value(mdp, pi, 0) == pytest.approx(r_pi @ d.values, abs=1e-10)


def test_nominal_value_examples(counterexample, ce_policy):
    mdp, _ = counterexample
    assert nominal_value(mdp, ce_policy(1.0), 0)[0] == pytest.approx(1.6, abs=1e-12)
    assert nominal_value(mdp, ce_policy(0.0), 0)[0] == pytest.approx(2.0, abs=1e-12)
    Q = nominal_q(mdp, ce_policy(1.0), 0)
    assert Q[0, 0] == pytest.approx(1.8, abs=1e-12)
    zero = TabularRCMDP(mdp.nominal_kernel, np.zeros_like(mdp.rewards), [0.0], 0.5, mdp.initial_dist)
    assert np.all(nominal_value(zero, ce_policy(0.3), 1) == 0)
    assert np.all(nominal_q(zero, ce_policy(0.3), 0) == 0)


def test_single_state_q():
    mdp = TabularRCMDP(np.ones((1, 3, 1)), np.ones((1, 1, 3)), [], 0.8, [1.0])
    assert np.allclose(nominal_q(mdp, np.full((1, 3), 1 / 3)), 5.0)


def test_monte_carlo_agreement():
    rng = np.random.default_rng(2)
    mdp = random_mdp(rng, S=3, A=2, gamma=0.8)
    pi = random_policy(rng, 3, 2)
    exact = mdp.initial_dist @ nominal_value(mdp, pi, 0)
    horizon = int(math.ceil(math.log(1e-4) / math.log(mdp.discount)))
    n = 100_000
    s = rng.choice(3, size=n, p=mdp.initial_dist)
    total = np.zeros(n)
    for t in range(horizon):
        a = (rng.random(n)[:, None] > np.cumsum(pi[s], axis=1)).sum(axis=1)
        total += mdp.discount**t * mdp.rewards[0, s, a]
        cdf = np.cumsum(mdp.nominal_kernel[s, a], axis=1)
        s = np.minimum((rng.random(n)[:, None] > cdf).sum(axis=1), 2)
    se = total.std() / math.sqrt(n)
    assert abs(total.mean() - exact) < 3 * se + 1e-4


def test_validation_errors():
    P = np.full((2, 1, 2), 0.5)
    R = np.zeros((1, 2, 1))
    with pytest.raises(InvalidInputError):
        TabularRCMDP(P * 1.1, R, [], 0.9, [1, 0])
    with pytest.raises(InvalidInputError):
        TabularRCMDP(P, R, [], 1.0, [1, 0])
    with pytest.raises(InvalidInputError):
        TabularRCMDP(P, R, [], 0.9, [0.7, 0.7])
    with pytest.raises(InvalidInputError):
        TabularRCMDP(P, R, [0.0], 0.9, [1, 0])


def test_immutable(counterexample):
    mdp, _ = counterexample
    with pytest.raises(ValueError):
        mdp.nominal_kernel[0, 0, 0] = 0.3


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_serialization_round_trip(tmp_path_factory, seed):
    mdp = random_mdp(np.random.default_rng(seed), S=3, A=2)
    back = loads_mdp(dumps_mdp(mdp))
    assert np.array_equal(back.nominal_kernel, mdp.nominal_kernel)
    assert np.array_equal(back.rewards, mdp.rewards)
    assert np.array_equal(back.thresholds, mdp.thresholds)
    assert back.discount == mdp.discount
    path = tmp_path_factory.mktemp("mdp") / "m.txt"
    save_mdp(mdp, path)
    assert np.array_equal(load_mdp(path).initial_dist, mdp.initial_dist)


def test_load_missing_key():
    with pytest.raises(InvalidInputError):
        loads_mdp("num_states = 2\n")
