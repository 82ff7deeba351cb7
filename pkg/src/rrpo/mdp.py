"""Finite constrained MDPs, softmax policies and non-robust evaluation.

Kernels are stored as ``P[s, a, s']``. Policy-induced state matrices returned by
:func:`transition_under_policy` are column-stochastic (``P_pi[s', s]``), i.e.
column ``j`` holds the next-state distribution from source state ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import keyvalue
from .errors import InvalidInputError

ROW_TOL = 1e-12


def _readonly(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TabularRCMDP:
    """Finite robust constrained MDP (nominal part).

    ``rewards[0]`` is the objective; ``rewards[i]`` for ``i >= 1`` are constraint
    rewards with thresholds ``thresholds[i - 1]`` (constraint: ``V_i(mu) >= d_i``).
    """

    nominal_kernel: np.ndarray
    rewards: np.ndarray
    thresholds: np.ndarray
    discount: float
    initial_dist: np.ndarray
    bounded_rewards: bool = field(init=False)

    def __post_init__(self):
        P = _readonly(self.nominal_kernel)
        R = _readonly(self.rewards)
        d = _readonly(np.atleast_1d(self.thresholds))
        mu = _readonly(self.initial_dist)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
            raise InvalidInputError(f"kernel must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if R.ndim == 2:
            R = _readonly(R[None])
        if R.ndim != 3 or R.shape[1:] != (S, A):
            raise InvalidInputError(f"rewards must have shape (I+1, {S}, {A}), got {R.shape}")
        if d.shape != (R.shape[0] - 1,):
            raise InvalidInputError(f"expected {R.shape[0] - 1} thresholds, got {d.shape[0]}")
        if mu.shape != (S,):
            raise InvalidInputError(f"initial_dist must have shape ({S},), got {mu.shape}")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(R)) and np.all(np.isfinite(mu))):
            raise InvalidInputError("kernel, rewards and initial_dist must be finite")
        if np.any(np.isnan(d)):
            raise InvalidInputError("thresholds must not be NaN")
        check_kernel(P)
        check_distribution(mu, "initial_dist")
        gamma = float(self.discount)
        if not 0.0 <= gamma < 1.0:
            raise InvalidInputError(f"discount must lie in [0, 1), got {gamma}")
        object.__setattr__(self, "nominal_kernel", P)
        object.__setattr__(self, "rewards", R)
        object.__setattr__(self, "thresholds", d)
        object.__setattr__(self, "initial_dist", mu)
        object.__setattr__(self, "discount", gamma)
        object.__setattr__(self, "bounded_rewards", bool(np.all((R >= 0) & (R <= 1))))

    @property
    def num_states(self) -> int:
        return self.nominal_kernel.shape[0]

    @property
    def num_actions(self) -> int:
        return self.nominal_kernel.shape[1]

    @property
    def num_constraints(self) -> int:
        return self.rewards.shape[0] - 1

    def with_kernel(self, kernel) -> "TabularRCMDP":
        return TabularRCMDP(kernel, self.rewards, self.thresholds, self.discount, self.initial_dist)

    def with_thresholds(self, thresholds) -> "TabularRCMDP":
        return TabularRCMDP(self.nominal_kernel, self.rewards, thresholds, self.discount, self.initial_dist)


def check_distribution(x: np.ndarray, name: str, tol: float = ROW_TOL) -> None:
    if np.any(x < 0) or abs(x.sum() - 1.0) > tol:
        raise InvalidInputError(f"{name} must be a probability distribution")


def check_kernel(P: np.ndarray, tol: float = ROW_TOL) -> None:
    if np.any(P < 0):
        raise InvalidInputError("kernel has negative entries")
    bad = np.abs(P.sum(axis=-1) - 1.0) > tol
    if np.any(bad):
        s, a = np.argwhere(bad)[0]
        raise InvalidInputError(f"kernel row (s={s}, a={a}) does not sum to 1")


# --------------------------------------------------------------------------- policies


def policy_from_logits(logits) -> np.ndarray:
    """Per-state softmax of a logit table ``theta[s, a]``."""
    theta = np.asarray(logits, dtype=float)
    if theta.ndim != 2:
        raise InvalidInputError(f"logits must be a (S, A) table, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise InvalidInputError("logits must be finite")
    z = theta - theta.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class SoftmaxPolicy:
    logits: np.ndarray

    def __post_init__(self):
        theta = _readonly(self.logits)
        if theta.ndim != 2:
            raise InvalidInputError(f"logits must be a (S, A) table, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise InvalidInputError("logits must be finite")
        object.__setattr__(self, "logits", theta)

    @property
    def probs(self) -> np.ndarray:
        return policy_from_logits(self.logits)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "SoftmaxPolicy":
        return cls(np.zeros((num_states, num_actions)))


def policy_probs(policy) -> np.ndarray:
    """Accept a :class:`SoftmaxPolicy` or an explicit ``pi[s, a]`` table."""
    if isinstance(policy, SoftmaxPolicy):
        return policy.probs
    pi = np.asarray(policy, dtype=float)
    if pi.ndim != 2:
        raise InvalidInputError(f"policy table must be (S, A), got shape {pi.shape}")
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > 1e-9):
        raise InvalidInputError("policy rows must be probability distributions")
    return pi


def _kernel_of(mdp_or_kernel) -> np.ndarray:
    if isinstance(mdp_or_kernel, TabularRCMDP):
        return mdp_or_kernel.nominal_kernel
    return np.asarray(mdp_or_kernel, dtype=float)


def state_matrix(kernel, policy) -> np.ndarray:
    """Row-stochastic ``M[s, s'] = sum_a pi(a|s) P(s'|s, a)``."""
    P = _kernel_of(kernel)
    pi = policy_probs(policy)
    if P.ndim != 3 or pi.shape != P.shape[:2]:
        raise InvalidInputError(f"policy shape {pi.shape} does not match kernel shape {P.shape}")
    return np.einsum("sa,sat->st", pi, P)


def transition_under_policy(kernel, policy) -> np.ndarray:
    """Column-stochastic policy transition matrix ``P_pi[s', s]``."""
    return state_matrix(kernel, policy).T


# --------------------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class OccupancyMeasure:
    values: np.ndarray
    normalized: bool


def discounted_visitation(kernel, policy, mu, gamma: float, normalized: bool = False) -> OccupancyMeasure:
    """Solve ``(I - gamma P_pi) d = mu``; the normalized form is ``(1 - gamma) d``."""
    if not 0.0 <= gamma < 1.0:
        raise InvalidInputError(f"gamma must lie in [0, 1), got {gamma}")
    P_pi = transition_under_policy(kernel, policy)
    mu = np.asarray(mu, dtype=float)
    d = np.linalg.solve(np.eye(P_pi.shape[0]) - gamma * P_pi, mu)
    if normalized:
        d = (1.0 - gamma) * d
    return OccupancyMeasure(d, normalized)


def expected_reward(mdp: TabularRCMDP, policy, reward_index: int = 0) -> np.ndarray:
    return np.einsum("sa,sa->s", policy_probs(policy), mdp.rewards[reward_index])


def evaluate_kernel(kernel, reward, policy, gamma: float) -> np.ndarray:
    """Value of ``policy`` for a reward table under an arbitrary kernel (may be signed)."""
    pi = policy_probs(policy)
    M = state_matrix(kernel, pi)
    r_pi = np.einsum("sa,sa->s", pi, reward)
    return np.linalg.solve(np.eye(M.shape[0]) - gamma * M, r_pi)


def nominal_value(mdp: TabularRCMDP, policy, reward_index: int = 0) -> np.ndarray:
    return evaluate_kernel(mdp.nominal_kernel, mdp.rewards[reward_index], policy, mdp.discount)


def nominal_q(mdp: TabularRCMDP, policy, reward_index: int = 0) -> np.ndarray:
    V = nominal_value(mdp, policy, reward_index)
    return mdp.rewards[reward_index] + mdp.discount * mdp.nominal_kernel @ V


# --------------------------------------------------------------------------- text format

MDP_HEADER = "rrpo tabular constrained MDP"


def dumps_mdp(mdp: TabularRCMDP) -> str:
    entries = {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "num_rewards": mdp.rewards.shape[0],
        "discount": mdp.discount,
        "initial_dist": mdp.initial_dist,
        "thresholds": mdp.thresholds,
        # row-major over (s, a, s')
        "kernel": mdp.nominal_kernel,
    }
    for i in range(mdp.rewards.shape[0]):
        entries[f"reward.{i}"] = mdp.rewards[i]
    return keyvalue.dump(entries, header=MDP_HEADER)


def loads_mdp(text: str) -> TabularRCMDP:
    kv = keyvalue.parse(text)
    try:
        S = int(kv["num_states"])
        A = int(kv["num_actions"])
        n_rewards = int(kv["num_rewards"])
        gamma = float(kv["discount"])
        mu = keyvalue.as_float_array(kv["initial_dist"], S, "initial_dist")
        thresholds = keyvalue.as_float_array(kv.get("thresholds", ""), n_rewards - 1, "thresholds")
        P = keyvalue.as_float_array(kv["kernel"], S * A * S, "kernel").reshape(S, A, S)
        R = np.stack([
            keyvalue.as_float_array(kv[f"reward.{i}"], S * A, f"reward.{i}").reshape(S, A)
            for i in range(n_rewards)
        ])
    except KeyError as exc:
        raise InvalidInputError(f"missing key {exc.args[0]!r} in MDP file") from exc
    return TabularRCMDP(P, R, thresholds, gamma, mu)


def save_mdp(mdp: TabularRCMDP, path) -> None:
    Path(path).write_text(dumps_mdp(mdp), encoding="utf-8")


def load_mdp(path) -> TabularRCMDP:
    return loads_mdp(Path(path).read_text(encoding="utf-8"))
