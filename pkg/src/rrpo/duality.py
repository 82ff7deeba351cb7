"""Two-state constrained robust MDP with a strictly positive duality gap.

State ``s0`` has a safe action ``a0`` (stay, reward 1) and a risky action ``a1``
that stays with probability ``p`` and otherwise moves to ``s1``, which pays the
constraint reward and returns to ``s0``. Only ``p`` is uncertain, ranging over
``[p_lo, p_hi]``. A policy is summarised by ``pi1 = pi(a1 | s0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .mdp import TabularRCMDP
from .uncertainty import PNormUncertainty

NO_FEASIBLE = -math.inf


@dataclass(frozen=True)
class CounterexampleParams:
    p_lo: float = 0.25
    p_hi: float = 0.75
    gamma: float = 0.5
    rho: float = 1.0
    p: float | None = None

    def __post_init__(self):
        if self.p is None:
            object.__setattr__(self, "p", 0.5 * (self.p_lo + self.p_hi))
        if not 0 < self.p_lo <= self.p <= self.p_hi < 1:
            raise InvalidInputError(
                f"need 0 < p_lo <= p <= p_hi < 1, got p_lo={self.p_lo}, p={self.p}, p_hi={self.p_hi}"
            )
        if not 0 < self.gamma < 1:
            raise InvalidInputError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.rho < 1 / (1 - self.gamma):
            raise InvalidInputError(f"rho must be below 1/(1-gamma) = {1 / (1 - self.gamma)}, got {self.rho}")

    @property
    def radius(self) -> float:
        return 0.5 * (self.p_hi - self.p_lo)


@dataclass(frozen=True)
class DualityReport:
    primal: float
    dual: float
    lambda_hat: float
    gap: float
    pi1_star: float
    pi1_feasible: bool


@dataclass(frozen=True)
class NumericDuality:
    primal: float
    dual: float
    primal_feasible: bool
    pi1_argmax: float
    lambda_argmin: float


def build_counterexample(params: CounterexampleParams) -> tuple[TabularRCMDP, PNormUncertainty]:
    """Nominal MDP plus the interval on ``p`` written as an l-inf ball on row ``(s0, a1)``."""
    if abs(params.p - 0.5 * (params.p_lo + params.p_hi)) > 1e-12:
        raise InvalidInputError("the l-inf ball representation needs p at the midpoint of [p_lo, p_hi]")
    p = params.p
    P = np.zeros((2, 2, 2))
    P[0, 0] = [1.0, 0.0]
    P[0, 1] = [p, 1.0 - p]
    P[1, 0] = [1.0, 0.0]
    P[1, 1] = [1.0, 0.0]
    rewards = np.array([
        [[1.0, 1.0], [0.0, 0.0]],
        [[0.0, 0.0], [1.0, 1.0]],
    ])
    mdp = TabularRCMDP(P, rewards, [params.rho], params.gamma, [1.0, 0.0])
    support = np.array([[False, True], [False, False]])
    return mdp, PNormUncertainty(params.radius, math.inf, support)


def counterexample_policy(pi1: float) -> np.ndarray:
    """Policy table for ``pi(a1|s0) = pi1``; the action at ``s1`` is irrelevant."""
    if not 0.0 <= pi1 <= 1.0:
        raise InvalidInputError(f"pi1 must lie in [0, 1], got {pi1}")
    return np.array([[1.0 - pi1, pi1], [0.5, 0.5]])


def _v0(pi1, p, gamma):
    return 1.0 / (1.0 - gamma + pi1 * (1.0 - p) * (gamma - gamma**2))


def _v1(pi1, p, gamma):
    return gamma * pi1 * (1.0 - p) / (1.0 - gamma + pi1 * (1.0 - p) * (gamma - gamma**2))


def nominal_values_analytic(pi1, p: float, gamma: float):
    """Non-robust ``(V_0(s0), V_1(s0))`` for stay probability ``p``."""
    return _v0(pi1, p, gamma), _v1(pi1, p, gamma)


def robust_values_analytic(params: CounterexampleParams, pi1):
    """Worst case over the interval: ``V_0`` is minimised at ``p_lo``, ``V_1`` at ``p_hi``."""
    return _v0(pi1, params.p_lo, params.gamma), _v1(pi1, params.p_hi, params.gamma)


def lagrangian_value(params: CounterexampleParams, pi1, lam):
    v0, v1 = robust_values_analytic(params, pi1)
    return v0 - lam * (params.rho - v1)


def lambda_hat(params: CounterexampleParams) -> float:
    g = params.gamma
    ratio = (1 - params.p_lo) / (1 - params.p_hi)
    return ratio * (1 + (1 - params.p_hi) * g) / (1 + (1 - params.p_lo) * g)


def primal_dual_analytic(params: CounterexampleParams) -> DualityReport:
    g, rho = params.gamma, params.rho
    ratio = (1 - params.p_lo) / (1 - params.p_hi)
    lam = lambda_hat(params)
    primal = 1 / (1 - g) - rho * ratio / (1 - rho * (1 - g) + rho * (1 - g) * ratio)
    dual = 1 / (1 - g) - lam * rho
    pi1_star = rho * (1 - g) / ((1 - rho * (1 - g)) * g * (1 - params.p_hi))
    return DualityReport(primal, dual, lam, primal - dual, pi1_star, bool(pi1_star <= 1))


def numeric_oracle(
    params: CounterexampleParams,
    pi_grid_size: int = 10_000,
    lambda_grid_size: int = 10_000,
    lambda_max: float | None = None,
) -> NumericDuality:
    """Grid search of max-min and min-max over ``pi1 in [0, 1]`` and ``lambda in [0, lambda_max]``."""
    if pi_grid_size < 100 or lambda_grid_size < 100:
        raise InvalidInputError("grid sizes must be >= 100")
    if lambda_max is None:
        lambda_max = 4.0 * lambda_hat(params)
    pis = np.linspace(0.0, 1.0, pi_grid_size)
    v0, v1 = robust_values_analytic(params, pis)

    feasible = v1 >= params.rho
    if feasible.any():
        k = int(np.argmax(np.where(feasible, v0, -np.inf)))
        primal, pi_arg = float(v0[k]), float(pis[k])
    else:
        primal, pi_arg = NO_FEASIBLE, math.nan

    lams = np.linspace(0.0, lambda_max, lambda_grid_size)
    slack = params.rho - v1
    inner = np.empty(lambda_grid_size)
    chunk = max(1, 4_000_000 // pi_grid_size)
    for start in range(0, lambda_grid_size, chunk):
        lam = lams[start:start + chunk, None]
        inner[start:start + chunk] = np.max(v0[None, :] - lam * slack[None, :], axis=1)
    j = int(np.argmin(inner))
    return NumericDuality(primal, float(inner[j]), bool(feasible.any()), pi_arg, float(lams[j]))


def constrained_optimum(params: CounterexampleParams) -> tuple[float, float]:
    """Best robust objective over ``pi1 in [0, 1]`` subject to the robust constraint.

    ``V_1`` increases and ``V_0`` decreases in ``pi1``, so the optimum sits at the
    smallest feasible ``pi1``. Returns ``(pi1, V_0)``; raises if nothing is feasible.
    """
    pi1 = primal_dual_analytic(params).pi1_star
    if pi1 > 1:
        raise InvalidInputError("no pi1 in [0, 1] satisfies the robust constraint")
    pi1 = max(pi1, 0.0)
    return pi1, float(robust_values_analytic(params, pi1)[0])
