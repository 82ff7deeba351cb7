"""Robust policy evaluation under p-norm rectangular uncertainty."""
from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InvalidInputError
from .mdp import TabularRCMDP, evaluate_kernel, policy_probs
from .uncertainty import PNormUncertainty, centering, unit_direction


@dataclass(frozen=True)
class RobustValueTable:
    values: np.ndarray
    residual: float
    iterations: int
    reward_index: int = 0

    def at(self, mu) -> float:
        return float(np.dot(mu, self.values))


@dataclass(frozen=True)
class RobustQTable:
    q: np.ndarray
    reward_index: int = 0


def _penalty_rows(mdp: TabularRCMDP, uset: PNormUncertainty, V: np.ndarray) -> np.ndarray:
    kappa = centering(V, uset.q)[1]
    return uset.radii(mdp.num_states, mdp.num_actions) * kappa


def robust_q_values(mdp: TabularRCMDP, uset: PNormUncertainty, V, reward_index: int = 0) -> np.ndarray:
    """``Q(s,a) = r(s,a) + gamma * (P0(.|s,a) . V - beta(s,a) * kappa_q(V))``."""
    V = np.asarray(V, dtype=float)
    return mdp.rewards[reward_index] + mdp.discount * (
        mdp.nominal_kernel @ V - _penalty_rows(mdp, uset, V)
    )


def robust_bellman_backup(mdp, policy, uset, V_in, reward_index: int = 0) -> np.ndarray:
    pi = policy_probs(policy)
    Q = robust_q_values(mdp, uset, V_in, reward_index)
    return np.einsum("sa,sa->s", pi, Q)


def robust_value_fixed_point(
    mdp: TabularRCMDP,
    policy,
    uset: PNormUncertainty,
    reward_index: int = 0,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    method: str = "iterate",
) -> RobustValueTable:
    """Robust value of ``policy`` for one reward index.

    ``method="iterate"`` applies the robust backup from ``V = 0`` until the
    sup-norm residual drops below ``tol``. ``method="newton"`` alternates between
    the worst-case kernel of the current iterate and an exact linear solve under
    that kernel (policy iteration for the adversary); it reaches the same fixed
    point in a handful of solves and falls back to plain iteration if it stalls.
    """
    pi = policy_probs(policy)
    if method == "newton":
        table = _newton_fixed_point(mdp, pi, uset, reward_index, tol)
        if table is not None:
            return table
        method = "iterate"
    if method != "iterate":
        raise InvalidInputError(f"unknown evaluation method {method!r}")

    V = np.zeros(mdp.num_states)
    residual = math.inf
    for it in range(1, max_iter + 1):
        V_next = robust_bellman_backup(mdp, pi, uset, V, reward_index)
        residual = float(np.max(np.abs(V_next - V)))
        V = V_next
        if residual <= tol:
            return RobustValueTable(V, residual, it, reward_index)
    raise ConvergenceError(
        f"robust evaluation did not reach tol={tol:g} in {max_iter} iterations "
        f"(residual {residual:.3g})",
        last_iterate=V,
        residual=residual,
    )


def _newton_fixed_point(mdp, pi, uset, reward_index, tol, max_steps: int = 100):
    P0 = mdp.nominal_kernel
    reward = mdp.rewards[reward_index]
    radii = uset.radii(mdp.num_states, mdp.num_actions)
    V = evaluate_kernel(P0, reward, pi, mdp.discount)
    for step in range(1, max_steps + 1):
        _, _, unit = unit_direction(V, uset.q)
        V = evaluate_kernel(P0 - radii[:, :, None] * unit, reward, pi, mdp.discount)
        residual = float(np.max(np.abs(robust_bellman_backup(mdp, pi, uset, V, reward_index) - V)))
        if residual <= tol:
            return RobustValueTable(V, residual, step, reward_index)
    return None


def robust_q_from_v(mdp: TabularRCMDP, uset: PNormUncertainty, V: RobustValueTable, reward_index=None) -> RobustQTable:
    i = V.reward_index if reward_index is None else reward_index
    return RobustQTable(robust_q_values(mdp, uset, V.values, i), i)


def robust_advantage(q: RobustQTable, v: RobustValueTable, policy=None) -> np.ndarray:
    if q.q.shape[0] != v.values.shape[0]:
        raise InvalidInputError("Q and V tables have inconsistent state dimensions")
    return q.q - v.values[:, None]


def induced_worst_case_kernel(mdp: TabularRCMDP, uset: PNormUncertainty, V) -> np.ndarray:
    """Kernel ``P_+`` built from the certificate of a (converged) value vector."""
    _, _, unit = unit_direction(np.asarray(V, dtype=float), uset.q)
    return mdp.nominal_kernel - uset.radii(mdp.num_states, mdp.num_actions)[:, :, None] * unit


# --------------------------------------------------------------------------- robust TD


@dataclass(frozen=True)
class TDEstimate:
    values: np.ndarray
    steps: int
    gap: float | None = None


def step_size(k: int, a0: float, k0: float) -> float:
    return a0 / (k + k0)


def robust_td_learning(
    mdp: TabularRCMDP,
    policy,
    uset: PNormUncertainty,
    reward_index: int = 0,
    steps: int = 100_000,
    a0: float = 1.0,
    k0: float = 100.0,
    seed: int = 0,
    restart_prob: float | None = None,
    restart_dist=None,
    compare_exact: bool = False,
) -> TDEstimate:
    """Tabular robust TD(0) along a single simulated trajectory of the nominal kernel.

    Each update subtracts the full robust correction ``gamma * beta(s,a) * kappa_q(V)``
    (the expectation of the sampled correction term). After every transition the
    trajectory restarts from ``restart_dist`` (uniform by default) with probability
    ``restart_prob`` (default ``1 - gamma``) so that absorbing states do not end
    exploration.
    """
    if steps < 0:
        raise InvalidInputError("steps must be >= 0")
    pi = policy_probs(policy)
    S, A = pi.shape
    gamma = mdp.discount
    restart_prob = 1.0 - gamma if restart_prob is None else float(restart_prob)
    restart = np.full(S, 1.0 / S) if restart_dist is None else np.asarray(restart_dist, dtype=float)

    rng = random.Random(seed)
    pi_cdf = [list(np.cumsum(row)) for row in pi]
    P_cdf = [[list(np.cumsum(mdp.nominal_kernel[s, a])) for a in range(A)] for s in range(S)]
    restart_cdf = list(np.cumsum(restart))
    reward = mdp.rewards[reward_index].tolist()
    radii = uset.radii(S, A).tolist()
    q = uset.q

    def draw(cdf):
        return min(bisect.bisect_right(cdf, rng.random() * cdf[-1]), len(cdf) - 1)

    V = [0.0] * S
    total, total_sq = 0.0, 0.0
    s = draw(list(np.cumsum(mdp.initial_dist)))
    for k in range(steps):
        a = draw(pi_cdf[s])
        s_next = draw(P_cdf[s][a])
        if uset.beta > 0 and radii[s][a] > 0:
            if q == 2:
                kappa = math.sqrt(max(total_sq - total * total / S, 0.0))
            elif math.isinf(q):
                kappa = 0.5 * (max(V) - min(V))
            elif q == 1:
                srt = sorted(V)
                mid = 0.5 * (srt[(S - 1) // 2] + srt[S // 2])
                kappa = sum(abs(v - mid) for v in srt)
            else:
                kappa = centering(np.array(V), q)[1]
            correction = gamma * radii[s][a] * kappa
        else:
            correction = 0.0
        alpha = a0 / (k + k0)
        old = V[s]
        new = old + alpha * (reward[s][a] + gamma * V[s_next] - correction - old)
        V[s] = new
        total += new - old
        total_sq += new * new - old * old
        s = draw(restart_cdf) if rng.random() < restart_prob else s_next

    values = np.array(V)
    gap = None
    if compare_exact:
        exact = robust_value_fixed_point(mdp, pi, uset, reward_index, method="newton")
        gap = float(np.max(np.abs(values - exact.values)))
    return TDEstimate(values, steps, gap)


# --------------------------------------------------------------------------- brute force oracle

MAX_BRUTE_FORCE_STATES = 6


def random_ball_directions(rng: np.random.Generator, num: int, n: int, p: float) -> np.ndarray:
    """``num`` random zero-sum vectors in R^n scaled onto the unit p-norm sphere."""
    g = rng.standard_normal((num, n))
    g -= g.mean(axis=1, keepdims=True)
    if math.isinf(p):
        norms = np.max(np.abs(g), axis=1)
    else:
        norms = np.sum(np.abs(g) ** p, axis=1) ** (1.0 / p)
    return g / norms[:, None]


def brute_force_robust_value(
    mdp: TabularRCMDP,
    policy,
    uset: PNormUncertainty,
    reward_index: int = 0,
    num_samples: int = 10_000,
    seed: int = 0,
    include_analytic: bool = True,
) -> float:
    """Minimum of ``V(mu)`` over sampled stationary kernels of the rectangular set.

    By default the sample also contains the analytic worst-case kernel, so the
    result is an upper envelope of the true robust value that is tight whenever
    the analytic kernel is optimal. ``include_analytic=False`` gives the purely
    sampled minimum.
    """
    S, A = mdp.num_states, mdp.num_actions
    if S > MAX_BRUTE_FORCE_STATES:
        raise InvalidInputError(f"brute force oracle limited to {MAX_BRUTE_FORCE_STATES} states, got {S}")
    pi = policy_probs(policy)
    radii = uset.radii(S, A)
    reward = mdp.rewards[reward_index]
    r_pi = np.einsum("sa,sa->s", pi, reward)
    mu = mdp.initial_dist
    gamma = mdp.discount

    best = math.inf
    if include_analytic or uset.beta == 0:
        exact = robust_value_fixed_point(mdp, pi, uset, reward_index, method="newton")
        P_plus = induced_worst_case_kernel(mdp, uset, exact.values)
        best = float(mu @ evaluate_kernel(P_plus, reward, pi, gamma))
    if uset.beta == 0 or num_samples == 0:
        return best

    rng = np.random.default_rng(seed)
    batch = 2000
    remaining = num_samples
    while remaining > 0:
        n = min(batch, remaining)
        remaining -= n
        u = random_ball_directions(rng, n * S * A, S, uset.p).reshape(n, S, A, S)
        kernels = mdp.nominal_kernel[None] + radii[None, :, :, None] * u
        M = np.einsum("sa,nsat->nst", pi, kernels)
        V = np.linalg.solve(np.eye(S)[None] - gamma * M, np.broadcast_to(r_pi, (n, S))[..., None])[..., 0]
        best = min(best, float(np.min(V @ mu)))
    return best


def robust_value_at(mdp: TabularRCMDP, policy, uset: PNormUncertainty, reward_index: int = 0, tol=1e-10, method="newton") -> float:
    return robust_value_fixed_point(mdp, policy, uset, reward_index, tol=tol, method=method).at(mdp.initial_dist)
