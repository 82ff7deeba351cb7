"""Experiment configuration and multi-seed training/evaluation runs."""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import keyvalue
from .duality import CounterexampleParams, build_counterexample
from .errors import InvalidInputError, NoFeasiblePolicyError
from .gridworld import GridworldSpec, build_gridworld, spec_from_entries
from .mdp import SoftmaxPolicy, TabularRCMDP, nominal_value
from .optim import RRPOConfig, initial_policy, train
from .robust_eval import robust_value_fixed_point
from .uncertainty import PNormUncertainty

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID_CONFIG = 2
EXIT_PARTIAL_FAILURE = 3
EXIT_NO_FEASIBLE = 4

KERNELS = ("nominal", "worst-case", "slippery-test")

SUMMARY_COLUMNS = (
    "seed", "algo", "V_0_nominal", "V_0_worst",
    "cost_nominal", "cost_worst", "cost_slippery", "feasible_flag",
)


@dataclass(frozen=True)
class ExperimentConfig:
    env: str = "gridworld"
    algo: str = "rrpo"
    p: float = 2.0
    beta: float = 0.05
    eta: float = 1e-4
    delta: float = 1e-2
    T: int = 2000
    eval_mode: str = "exact"
    constraint_pick: str = "lowest"
    init_scale: float = 0.5
    seeds: tuple = (0,)
    tol: float = 1e-8
    max_iter: int = 100_000
    td_steps: int = 100_000
    td_a0: float = 1.0
    td_k0: float = 100.0
    kernels: tuple = KERNELS
    output_dir: str = "runs"
    workers: int = 1
    grid: GridworldSpec = field(default_factory=GridworldSpec)
    counterexample: CounterexampleParams = field(default_factory=lambda: CounterexampleParams(rho=0.2))

    def __post_init__(self):
        if self.env not in ("gridworld", "counterexample"):
            raise InvalidInputError(f"env must be 'gridworld' or 'counterexample', got {self.env!r}")
        if self.algo not in ("rrpo", "crpo"):
            raise InvalidInputError(f"train.algo must be 'rrpo' or 'crpo', got {self.algo!r}")
        if not self.seeds:
            raise InvalidInputError("at least one seed is required")
        if self.T < 0:
            raise InvalidInputError("train.T must be >= 0")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")
        for k in self.kernels:
            if k not in KERNELS:
                raise InvalidInputError(f"unknown evaluation kernel {k!r}; choose from {KERNELS}")
        PNormUncertainty(self.beta, self.p)
        if self.T > 0:
            self.rrpo_config(self.seeds[0])

    def rrpo_config(self, seed: int) -> RRPOConfig:
        return RRPOConfig(
            eta=self.eta, delta=self.delta, T=max(self.T, 1), seed=seed,
            constraint_pick=self.constraint_pick, eval_mode=self.eval_mode, eval_tol=self.tol,
            eval_max_iter=self.max_iter,
            td_steps=self.td_steps, td_a0=self.td_a0, td_k0=self.td_k0, init_scale=self.init_scale,
        )


# key in config files -> (field, parser)
_SCALAR_KEYS = {
    "env": ("env", str),
    "train.algo": ("algo", str),
    "uncertainty.p": ("p", float),
    "uncertainty.beta": ("beta", float),
    "train.eta": ("eta", float),
    "train.delta": ("delta", float),
    "train.T": ("T", int),
    "train.eval_mode": ("eval_mode", str),
    "train.constraint_pick": ("constraint_pick", str),
    "train.init_scale": ("init_scale", float),
    "eval.tol": ("tol", float),
    "eval.max_iter": ("max_iter", int),
    "eval.td_steps": ("td_steps", int),
    "eval.td_a0": ("td_a0", float),
    "eval.td_k0": ("td_k0", float),
    "output_dir": ("output_dir", str),
    "workers": ("workers", int),
}
_CE_KEYS = {
    "counterexample.p_lo": "p_lo",
    "counterexample.p_hi": "p_hi",
    "counterexample.gamma": "gamma",
    "counterexample.rho": "rho",
}

ENV_DEFAULTS = {
    "gridworld": {},
    "counterexample": {"eta": 0.2, "T": 1000, "p": math.inf},
}


def config_from_entries(entries: dict) -> ExperimentConfig:
    """Build a config from dotted ``key -> string`` entries (file values merged with flags)."""
    known = set(_SCALAR_KEYS) | set(_CE_KEYS) | {"train.seed", "train.seeds", "eval.kernels"}
    unknown = [k for k in entries if k not in known and not k.startswith("grid.")]
    if unknown:
        raise InvalidInputError(f"unknown config keys: {', '.join(sorted(unknown))}")
    kwargs = {}
    env = entries.get("env", "gridworld")
    kwargs.update(ENV_DEFAULTS.get(env, {}))
    try:
        for key, (attr, parse) in _SCALAR_KEYS.items():
            if key in entries:
                kwargs[attr] = parse(entries[key])
        if "train.seeds" in entries:
            kwargs["seeds"] = tuple(int(s) for s in entries["train.seeds"].replace(",", " ").split())
        elif "train.seed" in entries:
            kwargs["seeds"] = (int(entries["train.seed"]),)
        if "eval.kernels" in entries:
            kwargs["kernels"] = tuple(k for k in entries["eval.kernels"].replace(",", " ").split())
        ce = {attr: float(entries[key]) for key, attr in _CE_KEYS.items() if key in entries}
    except ValueError as exc:
        raise InvalidInputError(f"bad config value: {exc}") from exc
    if ce:
        base = asdict(CounterexampleParams(rho=0.2))
        base.pop("p")
        base.update(ce)
        kwargs["counterexample"] = CounterexampleParams(**base)
    grid_entries = {k: v for k, v in entries.items() if k.startswith("grid.")}
    if grid_entries:
        kwargs["grid"] = spec_from_entries(grid_entries)
    return ExperimentConfig(**kwargs)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    entries = keyvalue.read(path) if path else {}
    entries.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_entries(entries)


# --------------------------------------------------------------------------- environments


@dataclass(frozen=True)
class Environment:
    train_mdp: TabularRCMDP
    uset: PNormUncertainty
    test_mdp: TabularRCMDP | None


def make_environment(config: ExperimentConfig) -> Environment:
    if config.env == "counterexample":
        mdp, uset = build_counterexample(config.counterexample)
        return Environment(mdp, uset, None)
    return Environment(
        build_gridworld(config.grid, "train"),
        PNormUncertainty(config.beta, config.p),
        build_gridworld(config.grid, "test"),
    )


@dataclass(frozen=True)
class PolicyEvaluation:
    V_0_nominal: float
    V_0_worst: float
    cost_nominal: float
    cost_worst: float
    cost_slippery: float
    max_violation: float

    def feasible(self, delta: float) -> bool:
        return self.max_violation <= delta


def evaluate_policy(env: Environment, policy, tol: float = 1e-10, kernels=KERNELS) -> PolicyEvaluation:
    """Objective and constraint-1 cost under the nominal, worst-case and slippery kernels.

    ``max_violation`` is ``max_i (d_i - V_i(mu))`` over the robust constraint values.
    """
    mdp, mu = env.train_mdp, env.train_mdp.initial_dist
    nan = math.nan
    v0_nom = cost_nom = v0_worst = cost_worst = cost_slip = nan
    if "nominal" in kernels:
        v0_nom = float(mu @ nominal_value(mdp, policy, 0))
        cost_nom = -float(mu @ nominal_value(mdp, policy, 1))
    robust = [
        robust_value_fixed_point(mdp, policy, env.uset, i, tol=tol, method="newton").at(mu)
        for i in range(mdp.rewards.shape[0])
    ]
    if "worst-case" in kernels:
        v0_worst, cost_worst = robust[0], -robust[1]
    if "slippery-test" in kernels and env.test_mdp is not None:
        cost_slip = -float(env.test_mdp.initial_dist @ nominal_value(env.test_mdp, policy, 1))
    violation = float(np.max(mdp.thresholds - np.array(robust[1:])))
    return PolicyEvaluation(v0_nom, v0_worst, cost_nom, cost_worst, cost_slip, violation)


# --------------------------------------------------------------------------- runs


@dataclass
class SeedResult:
    seed: int
    algo: str
    policy: SoftmaxPolicy
    evaluation: PolicyEvaluation
    trace_rows: list
    trained: bool
    feasible: bool
    error: str | None = None

    def summary_row(self) -> dict:
        ev = self.evaluation
        return {
            "seed": self.seed,
            "algo": self.algo,
            "V_0_nominal": ev.V_0_nominal,
            "V_0_worst": ev.V_0_worst,
            "cost_nominal": ev.cost_nominal,
            "cost_worst": ev.cost_worst,
            "cost_slippery": ev.cost_slippery,
            "feasible_flag": self.feasible,
        }


def trace_rows(trace, num_rewards: int) -> list:
    rows = []
    for rec in trace.records:
        row = {"iter": rec.iteration, "branch": rec.branch}
        for i in range(num_rewards):
            row[f"V_{i}"] = rec.values[i]
        row["d_0"] = rec.d0
        rows.append(row)
    return rows


def run_seed(config: ExperimentConfig, seed: int) -> SeedResult:
    env = make_environment(config)
    mdp = env.train_mdp
    rcfg = config.rrpo_config(seed)
    if config.T == 0:
        policy = initial_policy(mdp, rcfg)
        ev = evaluate_policy(env, policy, kernels=config.kernels)
        return SeedResult(seed, config.algo, policy, ev, [], True, ev.feasible(config.delta))
    try:
        policy, trace = train(mdp, env.uset, rcfg, config.algo)
        trained, error = True, None
    except NoFeasiblePolicyError as exc:
        policy, trace = exc.final_policy, exc.trace
        trained, error = False, str(exc)
        log.warning("seed %d: %s", seed, exc)
    ev = evaluate_policy(env, policy, kernels=config.kernels)
    rows = trace_rows(trace, mdp.rewards.shape[0])
    return SeedResult(seed, config.algo, policy, ev, rows, trained, trained and ev.feasible(config.delta), error)


def run_seeds(config: ExperimentConfig) -> list:
    if config.workers == 1 or len(config.seeds) == 1:
        return [run_seed(config, s) for s in config.seeds]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(run_seed, config, s) for s in config.seeds]
        # merge in seed order regardless of completion order
        return [f.result() for f in futures]


def exit_code(results) -> int:
    n_ok = sum(r.feasible for r in results)
    if n_ok == len(results):
        return EXIT_OK
    if n_ok == 0:
        return EXIT_NO_FEASIBLE
    return EXIT_PARTIAL_FAILURE


# --------------------------------------------------------------------------- CSV


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if math.isnan(v) else repr(v)
    return str(value)


def to_csv(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def trace_columns(num_rewards: int) -> list:
    return ["iter", "branch"] + [f"V_{i}" for i in range(num_rewards)] + ["d_0"]


def write_run(config: ExperimentConfig, results, outdir=None) -> Path:
    out = Path(outdir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    num_rewards = make_environment(config).train_mdp.rewards.shape[0]
    for r in results:
        stem = f"{r.algo}_seed{r.seed}"
        (out / f"trace_{stem}.csv").write_text(to_csv(r.trace_rows, trace_columns(num_rewards)), encoding="utf-8")
        save_policy(r.policy, out / f"policy_{stem}.txt")
    summary = to_csv([r.summary_row() for r in results], SUMMARY_COLUMNS)
    (out / "summary.csv").write_text(summary, encoding="utf-8")
    return out


def run_training(config: ExperimentConfig, outdir=None) -> tuple[int, list]:
    results = run_seeds(config)
    write_run(config, results, outdir)
    return exit_code(results), results


# --------------------------------------------------------------------------- policy files


def save_policy(policy: SoftmaxPolicy, path) -> None:
    S, A = policy.logits.shape
    text = keyvalue.dump({"num_states": S, "num_actions": A, "logits": policy.logits}, header="rrpo softmax policy")
    Path(path).write_text(text, encoding="utf-8")


def load_policy(path) -> SoftmaxPolicy:
    kv = keyvalue.read(path)
    try:
        S, A = int(kv["num_states"]), int(kv["num_actions"])
        logits = keyvalue.as_float_array(kv["logits"], S * A, "logits").reshape(S, A)
    except KeyError as exc:
        raise InvalidInputError(f"policy file missing key {exc.args[0]!r}") from exc
    return SoftmaxPolicy(logits)


def config_entries(config: ExperimentConfig) -> dict:
    """Inverse of :func:`config_from_entries` for the scalar keys (used in run metadata)."""
    out = {key: getattr(config, attr) for key, (attr, _) in _SCALAR_KEYS.items()}
    out["train.seeds"] = " ".join(str(s) for s in config.seeds)
    out["eval.kernels"] = " ".join(config.kernels)
    return out
