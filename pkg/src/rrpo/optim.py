"""Robust natural policy gradient, RRPO and the CRPO baseline."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NoFeasiblePolicyError
from .mdp import SoftmaxPolicy, TabularRCMDP
from .robust_eval import robust_q_values, robust_td_learning, robust_value_fixed_point
from .uncertainty import PNormUncertainty

log = logging.getLogger(__name__)

THRESHOLD = "threshold"
CONSTRAINT = "constraint"
OBJECTIVE = "objective"


# --------------------------------------------------------------------------- NPG


def npg_step(policy: SoftmaxPolicy, q, eta: float, gamma: float) -> SoftmaxPolicy:
    """Logit-space robust NPG update ``theta += eta * Q / (1 - gamma)``.

    Logits are re-centred per state afterwards, which leaves the policy unchanged.
    """
    if eta <= 0:
        raise InvalidInputError(f"eta must be positive, got {eta}")
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise InvalidInputError("Q table must be finite")
    theta = policy.logits + eta * q / (1.0 - gamma)
    theta = theta - theta.max(axis=1, keepdims=True)
    return SoftmaxPolicy(theta)


def npg_step_probs(pi, q, eta: float, gamma: float) -> np.ndarray:
    """Multiplicative form ``pi * exp(eta Q / (1 - gamma)) / Z``."""
    pi = np.asarray(pi, dtype=float)
    w = eta * np.asarray(q, dtype=float) / (1.0 - gamma)
    w = w - w.max(axis=1, keepdims=True)
    new = pi * np.exp(w)
    return new / new.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------- branch selection


@dataclass(frozen=True)
class Branch:
    kind: str
    index: int | None = None

    def label(self) -> str:
        if self.kind == CONSTRAINT:
            return f"constraint-rectify({self.index})"
        if self.kind == OBJECTIVE:
            return "objective-rectify"
        return THRESHOLD


def select_update_index(values, thresholds, d0: float, delta: float, rule: str = "lowest", rng=None) -> Branch:
    """Pick the RRPO branch from values ``V_0..V_I`` and thresholds ``d_1..d_I``."""
    values = np.asarray(values, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    violated = [i + 1 for i in range(thresholds.size) if values[i + 1] < thresholds[i] - delta]
    objective_ok = values[0] >= d0 - delta
    if not violated and objective_ok:
        return Branch(THRESHOLD)
    if violated:
        if rule == "lowest":
            return Branch(CONSTRAINT, violated[0])
        if rule == "random":
            if rng is None:
                raise InvalidInputError("random constraint pick needs an rng")
            return Branch(CONSTRAINT, int(rng.choice(violated)))
        raise InvalidInputError(f"unknown constraint pick rule {rule!r}")
    return Branch(OBJECTIVE, 0)


# --------------------------------------------------------------------------- training


@dataclass(frozen=True)
class RRPOConfig:
    eta: float = 1e-4
    delta: float = 1e-2
    T: int = 1000
    d0_init: float = -math.inf
    constraint_pick: str = "lowest"
    seed: int = 0
    eval_mode: str = "exact"
    eval_tol: float = 1e-8
    eval_method: str = "newton"
    eval_max_iter: int = 100_000
    td_steps: int = 100_000
    td_a0: float = 1.0
    td_k0: float = 100.0
    init_scale: float = 0.0
    # also take an objective step on threshold iterations; without it the policy freezes
    threshold_step: bool = True

    def __post_init__(self):
        if not self.eta > 0:
            raise InvalidInputError(f"eta must be > 0, got {self.eta}")
        if not self.delta > 0:
            raise InvalidInputError(f"delta must be > 0, got {self.delta}")
        if self.T < 1:
            raise InvalidInputError(f"T must be >= 1, got {self.T}")
        if self.eval_mode not in ("exact", "td"):
            raise InvalidInputError(f"eval_mode must be 'exact' or 'td', got {self.eval_mode!r}")
        if self.constraint_pick not in ("lowest", "random"):
            raise InvalidInputError(f"constraint_pick must be 'lowest' or 'random', got {self.constraint_pick!r}")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    branch: str
    values: tuple
    d0: float
    feasible: bool


@dataclass
class TrainingTrace:
    records: list = field(default_factory=list)
    feasible_iterations: list = field(default_factory=list)
    output_iteration: int | None = None

    def d0_series(self) -> np.ndarray:
        return np.array([r.d0 for r in self.records])

    def branches(self) -> list:
        return [r.branch for r in self.records]


def initial_policy(mdp: TabularRCMDP, config: RRPOConfig) -> SoftmaxPolicy:
    rng = np.random.default_rng(config.seed)
    theta = config.init_scale * rng.standard_normal((mdp.num_states, mdp.num_actions))
    return SoftmaxPolicy(theta)


class _Evaluator:
    """Robust V(mu) for every reward index and robust Q tables on demand."""

    def __init__(self, mdp, uset, config: RRPOConfig):
        self.mdp, self.uset, self.config = mdp, uset, config
        self.calls = 0

    def __call__(self, policy: SoftmaxPolicy):
        mdp, cfg = self.mdp, self.config
        pi = policy.probs
        tables = []
        for i in range(mdp.rewards.shape[0]):
            if cfg.eval_mode == "exact":
                V = robust_value_fixed_point(
                    mdp, pi, self.uset, i, tol=cfg.eval_tol, max_iter=cfg.eval_max_iter, method=cfg.eval_method,
                ).values
            else:
                V = robust_td_learning(
                    mdp, pi, self.uset, i, steps=cfg.td_steps, a0=cfg.td_a0, k0=cfg.td_k0,
                    seed=hash((cfg.seed, self.calls, i)) & 0x7FFFFFFF,
                ).values
            tables.append(V)
        self.calls += 1
        values = np.array([mdp.initial_dist @ V for V in tables])
        return values, tables

    def q(self, V, index):
        return robust_q_values(self.mdp, self.uset, V, index)


def _constraints_hold(values, thresholds, delta) -> bool:
    return bool(np.all(values[1:] >= thresholds - delta))


def rrpo_train(mdp: TabularRCMDP, uset: PNormUncertainty, config: RRPOConfig, policy: SoftmaxPolicy | None = None):
    """Rectified Robust Policy Optimization.

    Returns ``(pi_out, trace)`` where ``pi_out`` is the feasible iterate with the
    largest robust objective. The objective threshold ``d0`` only moves upward.
    """
    if mdp.num_constraints < 1:
        raise InvalidInputError("RRPO needs at least one constraint")
    policy = initial_policy(mdp, config) if policy is None else policy
    evaluate = _Evaluator(mdp, uset, config)
    rng = np.random.default_rng(config.seed)
    trace = TrainingTrace()
    d0 = config.d0_init
    best, best_v0 = None, -math.inf

    for t in range(config.T):
        values, tables = evaluate(policy)
        branch = select_update_index(values, mdp.thresholds, d0, config.delta, config.constraint_pick, rng)
        feasible = _constraints_hold(values, mdp.thresholds, config.delta)
        step_index = branch.index
        if branch.kind == THRESHOLD:
            trace.feasible_iterations.append(t)
            if values[0] > best_v0:
                best, best_v0 = policy, float(values[0])
                trace.output_iteration = t
            d0 = max(d0, float(values[0]))
            step_index = 0 if config.threshold_step else None
        trace.records.append(TraceRecord(t, branch.label(), tuple(float(v) for v in values), d0, feasible))
        if step_index is not None:
            policy = npg_step(policy, evaluate.q(tables[step_index], step_index), config.eta, mdp.discount)

    if best is None:
        raise NoFeasiblePolicyError(
            f"no iterate satisfied all constraints within delta={config.delta} in {config.T} iterations",
            final_policy=policy,
            trace=trace,
        )
    return best, trace


def crpo_train(mdp: TabularRCMDP, uset: PNormUncertainty, config: RRPOConfig, policy: SoftmaxPolicy | None = None):
    """Robust CRPO: objective step when constraints hold, otherwise rectify a constraint.

    The output is drawn uniformly from the iterates that satisfied the constraints.
    """
    if mdp.num_constraints < 1:
        raise InvalidInputError("CRPO needs at least one constraint")
    policy = initial_policy(mdp, config) if policy is None else policy
    evaluate = _Evaluator(mdp, uset, config)
    rng = np.random.default_rng(config.seed)
    trace = TrainingTrace()
    pool = []

    for t in range(config.T):
        values, tables = evaluate(policy)
        branch = select_update_index(values, mdp.thresholds, math.inf, config.delta, config.constraint_pick, rng)
        feasible = branch.kind != CONSTRAINT
        if feasible:
            branch = Branch(OBJECTIVE, 0)
            trace.feasible_iterations.append(t)
            pool.append(policy)
        trace.records.append(TraceRecord(t, branch.label(), tuple(float(v) for v in values), math.nan, feasible))
        policy = npg_step(policy, evaluate.q(tables[branch.index], branch.index), config.eta, mdp.discount)

    if not pool:
        raise NoFeasiblePolicyError(
            f"no iterate satisfied all constraints within delta={config.delta} in {config.T} iterations",
            final_policy=policy,
            trace=trace,
        )
    k = int(rng.integers(len(pool)))
    trace.output_iteration = trace.feasible_iterations[k]
    return pool[k], trace


def train(mdp, uset, config: RRPOConfig, algo: str = "rrpo", policy=None):
    if algo == "rrpo":
        return rrpo_train(mdp, uset, config, policy)
    if algo == "crpo":
        return crpo_train(mdp, uset, config, policy)
    raise InvalidInputError(f"unknown algorithm {algo!r}")
