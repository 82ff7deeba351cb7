"""FrozenLake-style 4x6 gridworld with hazard ("brown") blocks.

Cells are 1-indexed ``(row, col)`` with ``(1, 1)`` the top-left corner. Default
layout (``S`` start, ``T`` target, ``B`` brown block)::

    S . B B . .
    . . . . T .
    . . . . . .
    . . . . . .

Going right along row 2 reaches the target in five moves but passes under the
brown blocks; dropping to row 3 and coming back up takes seven moves and never
borders a hazard once the agent has left the start corner.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import keyvalue
from .errors import InvalidInputError
from .mdp import TabularRCMDP, discounted_visitation
from .robust_eval import induced_worst_case_kernel, robust_value_fixed_point
from .uncertainty import PNormUncertainty, tv_diameter_bound

UP, DOWN, LEFT, RIGHT = range(4)
ACTION_NAMES = ("UP", "DOWN", "LEFT", "RIGHT")
MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}
PERPENDICULAR = {UP: (LEFT, RIGHT), DOWN: (LEFT, RIGHT), LEFT: (UP, DOWN), RIGHT: (UP, DOWN)}


@dataclass(frozen=True)
class GridworldSpec:
    rows: int = 4
    cols: int = 6
    start: tuple = (1, 1)
    target: tuple = (2, 5)
    obstacles: tuple = ((1, 3), (1, 4))
    slip: float = 0.2
    slip_mode: str = "perpendicular"
    step_reward: float = -0.1
    target_reward: float = 1.0
    hazard_reward: float = -1.0
    hazard_cost: float = 1.0
    cost_limit: float = 0.2
    discount: float = 0.99
    absorbing_target: bool = True

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(int(v) for v in self.start))
        object.__setattr__(self, "target", tuple(int(v) for v in self.target))
        object.__setattr__(self, "obstacles", tuple(tuple(int(v) for v in c) for c in self.obstacles))
        if self.rows < 1 or self.cols < 1:
            raise InvalidInputError("grid must have at least one row and column")
        for name, cell in (("start", self.start), ("target", self.target)):
            if not self.in_bounds(cell):
                raise InvalidInputError(f"{name} {cell} is outside the {self.rows}x{self.cols} grid")
            if cell in self.obstacles:
                raise InvalidInputError(f"{name} {cell} is a brown block")
        for cell in self.obstacles:
            if not self.in_bounds(cell):
                raise InvalidInputError(f"obstacle {cell} is outside the grid")
        if not 0.0 <= self.slip < 1.0:
            raise InvalidInputError(f"slip probability must lie in [0, 1), got {self.slip}")
        if self.slip_mode not in ("perpendicular", "uniform"):
            raise InvalidInputError(f"slip_mode must be 'perpendicular' or 'uniform', got {self.slip_mode!r}")
        if not 0.0 <= self.discount < 1.0:
            raise InvalidInputError(f"discount must lie in [0, 1), got {self.discount}")

    @property
    def num_states(self) -> int:
        return self.rows * self.cols

    def in_bounds(self, cell) -> bool:
        return 1 <= cell[0] <= self.rows and 1 <= cell[1] <= self.cols

    def index(self, cell) -> int:
        return (cell[0] - 1) * self.cols + (cell[1] - 1)

    def cell(self, index: int) -> tuple:
        return index // self.cols + 1, index % self.cols + 1


def move_outcome(spec: GridworldSpec, cell, action):
    """Deterministic result of executing ``action``: ``(next_cell, r0, r1)``."""
    if spec.absorbing_target and cell == spec.target:
        return cell, 0.0, 0.0
    dr, dc = MOVES[action]
    nxt = (cell[0] + dr, cell[1] + dc)
    if not spec.in_bounds(nxt):
        return cell, spec.step_reward, -spec.hazard_cost
    if nxt in spec.obstacles:
        return spec.start, spec.hazard_reward, -spec.hazard_cost
    if nxt == spec.target:
        return nxt, spec.target_reward, 0.0
    return nxt, spec.step_reward, 0.0


def executed_moves(spec: GridworldSpec, action: int, slip: float):
    """Distribution over executed moves when ``action`` is chosen."""
    if slip == 0.0:
        return [(action, 1.0)]
    if spec.slip_mode == "perpendicular":
        a, b = PERPENDICULAR[action]
        return [(action, 1.0 - slip), (a, slip / 2), (b, slip / 2)]
    others = [m for m in MOVES if m != action]
    return [(action, 1.0 - slip)] + [(m, slip / len(others)) for m in others]


def build_gridworld(spec: GridworldSpec = GridworldSpec(), mode: str = "train") -> TabularRCMDP:
    """Gridworld MDP; ``train`` is deterministic, ``test`` applies the slip model.

    Rewards depend on the landing cell, so the stored ``r_i(s, a)`` tables are
    expectations over the mode's own kernel.
    """
    if mode not in ("train", "test"):
        raise InvalidInputError(f"mode must be 'train' or 'test', got {mode!r}")
    slip = spec.slip if mode == "test" else 0.0
    S, A = spec.num_states, len(MOVES)
    P = np.zeros((S, A, S))
    R = np.zeros((2, S, A))
    for s in range(S):
        cell = spec.cell(s)
        for a in range(A):
            for move, prob in executed_moves(spec, a, slip):
                nxt, r0, r1 = move_outcome(spec, cell, move)
                P[s, a, spec.index(nxt)] += prob
                R[0, s, a] += prob * r0
                R[1, s, a] += prob * r1
    mu = np.zeros(S)
    mu[spec.index(spec.start)] = 1.0
    return TabularRCMDP(P, R, [-spec.cost_limit], spec.discount, mu)


@dataclass(frozen=True)
class AssumptionReport:
    min_visitation: float
    argmin_state: int
    diameter_bound: float
    unreachable_states: tuple = field(default_factory=tuple)

    @property
    def exploration_ok(self) -> bool:
        return self.min_visitation > 0


def assumption_diagnostics(mdp: TabularRCMDP, uset: PNormUncertainty, policy, tol: float = 1e-10) -> AssumptionReport:
    """Witnesses for worst-case exploration (min normalized visitation) and set diameter."""
    V0 = robust_value_fixed_point(mdp, policy, uset, 0, tol=tol, method="newton").values
    P_plus = induced_worst_case_kernel(mdp, uset, V0)
    d = discounted_visitation(P_plus, policy, mdp.initial_dist, mdp.discount, normalized=True).values
    k = int(np.argmin(d))
    unreachable = tuple(int(s) for s in np.flatnonzero(d <= 1e-12))
    return AssumptionReport(float(d[k]), k, tv_diameter_bound(uset, mdp.num_states), unreachable)


# --------------------------------------------------------------------------- spec files

_FLOAT_KEYS = {
    "grid.slip": "slip",
    "grid.step_reward": "step_reward",
    "grid.target_reward": "target_reward",
    "grid.hazard_reward": "hazard_reward",
    "grid.hazard_cost": "hazard_cost",
    "grid.cost_limit": "cost_limit",
    "grid.discount": "discount",
}


def _cell(value: str, key: str) -> tuple:
    parts = value.replace(",", " ").split()
    if len(parts) != 2:
        raise InvalidInputError(f"{key}: expected 'row col', got {value!r}")
    return int(parts[0]), int(parts[1])


def spec_from_entries(kv: dict) -> GridworldSpec:
    """Build a spec from ``grid.*`` entries; missing keys keep their defaults.

    ``grid.obstacles`` is a ``;``-separated list of ``row col`` cells.
    """
    kwargs = {}
    try:
        if "grid.rows" in kv:
            kwargs["rows"] = int(kv["grid.rows"])
        if "grid.cols" in kv:
            kwargs["cols"] = int(kv["grid.cols"])
        if "grid.start" in kv:
            kwargs["start"] = _cell(kv["grid.start"], "grid.start")
        if "grid.target" in kv:
            kwargs["target"] = _cell(kv["grid.target"], "grid.target")
        if "grid.obstacles" in kv:
            cells = [c for c in kv["grid.obstacles"].split(";") if c.strip()]
            kwargs["obstacles"] = tuple(_cell(c, "grid.obstacles") for c in cells)
        for key, attr in _FLOAT_KEYS.items():
            if key in kv:
                kwargs[attr] = float(kv[key])
        if "grid.slip_mode" in kv:
            kwargs["slip_mode"] = kv["grid.slip_mode"]
        if "grid.absorbing_target" in kv:
            kwargs["absorbing_target"] = keyvalue.as_bool(kv["grid.absorbing_target"], "grid.absorbing_target")
    except ValueError as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"bad gridworld entry: {exc}") from exc
    return GridworldSpec(**kwargs)


def spec_to_entries(spec: GridworldSpec) -> dict:
    entries = {
        "grid.rows": spec.rows,
        "grid.cols": spec.cols,
        "grid.start": f"{spec.start[0]} {spec.start[1]}",
        "grid.target": f"{spec.target[0]} {spec.target[1]}",
        "grid.obstacles": "; ".join(f"{r} {c}" for r, c in spec.obstacles),
        "grid.slip_mode": spec.slip_mode,
        "grid.absorbing_target": spec.absorbing_target,
    }
    for key, attr in _FLOAT_KEYS.items():
        entries[key] = getattr(spec, attr)
    return entries


def render(spec: GridworldSpec, policy=None) -> str:
    """ASCII map; with a policy, each free cell shows its most likely action."""
    arrows = "^v<>"
    pi = None if policy is None else np.asarray(policy)
    lines = []
    for r in range(1, spec.rows + 1):
        row = []
        for c in range(1, spec.cols + 1):
            cell = (r, c)
            if cell in spec.obstacles:
                row.append("B")
            elif cell == spec.target:
                row.append("T")
            elif pi is not None:
                row.append(arrows[int(np.argmax(pi[spec.index(cell)]))])
            elif cell == spec.start:
                row.append("S")
            else:
                row.append(".")
        lines.append(" ".join(row))
    return "\n".join(lines)
