"""(s,a)-rectangular p-norm uncertainty sets.

Each row of the nominal kernel may move by a zero-sum perturbation ``u`` with
``||u||_p <= beta``. The inner minimisation ``min_u <P0 + u, V>`` has the closed
form ``<P0, V> - beta * kappa_q(V)`` where ``kappa_q(V) = min_w ||V - w 1||_q`` and
``1/p + 1/q = 1``. The minimising perturbation is ``-direction`` with ``direction``
the certificate vector below; rows are not intersected with the simplex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

BISECTION_ITERS = 200


def dual_order(p: float) -> float:
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


@dataclass(frozen=True)
class PNormUncertainty:
    """Zero-sum p-norm ball of radius ``beta`` around every nominal row.

    ``support`` optionally restricts the ball to a subset of rows: a boolean
    ``(S, A)`` mask, rows outside it are certain.
    """

    beta: float
    p: float = 2.0
    support: np.ndarray | None = None

    def __post_init__(self):
        beta, p = float(self.beta), float(self.p)
        if not (beta >= 0 and math.isfinite(beta)):
            raise InvalidInputError(f"beta must be finite and >= 0, got {beta}")
        if not p >= 1:
            raise InvalidInputError(f"p must be >= 1, got {p}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "p", p)
        if self.support is not None:
            mask = np.array(self.support, dtype=bool)
            mask.setflags(write=False)
            object.__setattr__(self, "support", mask)

    @property
    def q(self) -> float:
        return dual_order(self.p)

    def radii(self, num_states: int, num_actions: int) -> np.ndarray:
        """Per-row radius table ``beta[s, a]``."""
        if self.support is None:
            return np.full((num_states, num_actions), self.beta)
        if self.support.shape != (num_states, num_actions):
            raise InvalidInputError(
                f"support mask shape {self.support.shape} != ({num_states}, {num_actions})"
            )
        return np.where(self.support, self.beta, 0.0)


@dataclass(frozen=True)
class WorstCaseCertificate:
    omega: float
    kappa: float
    direction: np.ndarray


def _norm(x: np.ndarray, q: float) -> float:
    if math.isinf(q):
        return float(np.max(np.abs(x)))
    return float(np.linalg.norm(x, ord=q))


def centering(V, q: float) -> tuple[float, float]:
    """Return ``(omega_q, kappa_q)``: the minimiser and minimum of ``||V - w 1||_q``."""
    V = np.asarray(V, dtype=float)
    if V.ndim != 1 or V.size == 0:
        raise InvalidInputError("V must be a non-empty vector")
    if not np.all(np.isfinite(V)):
        raise InvalidInputError("V must be finite")
    lo, hi = float(V.min()), float(V.max())
    if lo == hi:
        return lo, 0.0
    if q == 2:
        omega = float(V.mean())
    elif math.isinf(q):
        omega = 0.5 * (lo + hi)
    elif q == 1:
        # np.median takes the midpoint of the minimising interval for even counts
        omega = float(np.median(V))
    else:
        omega = _bisect_center(V, q, lo, hi)
    return omega, _norm(V - omega, q)


def _bisect_center(V: np.ndarray, q: float, lo: float, hi: float) -> float:
    # d/dw ||V - w||_q^q is increasing in w, negative at min(V), positive at max(V)
    scale = hi - lo
    x = (V - lo) / scale
    a, b = 0.0, 1.0
    for _ in range(BISECTION_ITERS):
        m = 0.5 * (a + b)
        r = x - m
        g = -np.sum(np.sign(r) * np.abs(r) ** (q - 1))
        if g < 0:
            a = m
        else:
            b = m
        if b - a <= 1e-16:
            break
    return lo + scale * 0.5 * (a + b)


def unit_direction(V, q: float) -> tuple[float, float, np.ndarray]:
    """Certificate at ``beta = 1``: ``(omega, kappa, direction)``."""
    V = np.asarray(V, dtype=float)
    omega, kappa = centering(V, q)
    n = V.size
    scale = max(1.0, float(np.max(np.abs(V))))
    if kappa <= 1e-14 * scale:
        return omega, 0.0, np.zeros(n)
    r = V - omega
    if q == 2:
        return omega, kappa, r / kappa
    # ties are judged relative to the spread so argmax and argmin sets never overlap
    tol = 1e-12 * float(V.max() - V.min())
    if math.isinf(q):
        # p = 1: half the budget on the argmax states, half (negative) on the argmin states
        top = V >= V.max() - tol
        bottom = V <= V.min() + tol
        out = np.zeros(n)
        out[top] = 0.5 / top.sum()
        out[bottom] = -0.5 / bottom.sum()
        return omega, kappa, out
    if q == 1:
        # p = inf: +-1 away from the median; entries tied at the median absorb the imbalance
        out = np.sign(r)
        out[np.abs(r) <= tol] = 0.0
        ties = np.abs(r) <= tol
        if ties.any():
            out[ties] = -out.sum() / ties.sum()
        return omega, kappa, out
    out = np.sign(r) * (np.abs(r) / kappa) ** (q - 1)
    return omega, kappa, out


def worst_case_certificate(V, uset: PNormUncertainty) -> WorstCaseCertificate:
    omega, kappa, unit = unit_direction(V, uset.q)
    return WorstCaseCertificate(omega, kappa, uset.beta * unit)


def worst_case_kernel(P0_row, certificate: WorstCaseCertificate) -> tuple[np.ndarray, bool]:
    """Adversarial row ``P0_row - direction`` and whether it stays inside the simplex."""
    row = np.asarray(P0_row, dtype=float) - certificate.direction
    in_simplex = bool(np.all(row >= -1e-15) and np.all(row <= 1 + 1e-15))
    return row, in_simplex


def worst_case_full_kernel(P0, uset: PNormUncertainty, V) -> np.ndarray:
    """Worst-case kernel ``P_+[s, a, :]`` for every row, given the value vector ``V``."""
    P0 = np.asarray(P0, dtype=float)
    S, A, _ = P0.shape
    _, _, unit = unit_direction(V, uset.q)
    return P0 - uset.radii(S, A)[:, :, None] * unit[None, None, :]


def support_penalty(V, uset: PNormUncertainty) -> float:
    """``beta * kappa_q(V)``: the drop in ``<P, V>`` the adversary can force per unit radius row."""
    return uset.beta * centering(V, uset.q)[1]


def tv_diameter_bound(uset: PNormUncertainty, num_states: int) -> float:
    if math.isinf(uset.p):
        return uset.beta * num_states
    return uset.beta * num_states ** (1.0 - 1.0 / uset.p)


def rows_near_simplex_boundary(P0, uset: PNormUncertainty) -> np.ndarray:
    """Rows where a radius-beta perturbation can push some entry below zero."""
    P0 = np.asarray(P0, dtype=float)
    S, A, _ = P0.shape
    radii = uset.radii(S, A)
    return (radii > 0) & (P0.min(axis=-1) < radii)
