"""Command-line driver: ``rrpo duality-gap | train | evaluate | diagnostics``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import keyvalue
from .duality import CounterexampleParams, numeric_oracle, primal_dual_analytic
from .errors import InvalidInputError
from .experiment import (
    EXIT_INVALID_CONFIG,
    EXIT_OK,
    SUMMARY_COLUMNS,
    evaluate_policy,
    load_config,
    load_policy,
    make_environment,
    run_training,
    to_csv,
)
from .gridworld import assumption_diagnostics
from .mdp import SoftmaxPolicy
from .uncertainty import rows_near_simplex_boundary

log = logging.getLogger("rrpo")

DUALITY_COLUMNS = ("primal", "dual", "lambda_hat", "gap", "pi1_star", "pi1_feasible", "primal_num", "dual_num")

# flag dest -> config key
_CONFIG_FLAGS = {
    "env": "env",
    "algo": "train.algo",
    "p": "uncertainty.p",
    "beta": "uncertainty.beta",
    "eta": "train.eta",
    "delta": "train.delta",
    "T": "train.T",
    "eval_mode": "train.eval_mode",
    "constraint_pick": "train.constraint_pick",
    "init_scale": "train.init_scale",
    "seed": "train.seed",
    "seeds": "train.seeds",
    "tol": "eval.tol",
    "max_iter": "eval.max_iter",
    "kernels": "eval.kernels",
    "output_dir": "output_dir",
    "workers": "workers",
    "slip": "grid.slip",
    "rho": "counterexample.rho",
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file; flags override its entries")
    parser.add_argument("--env", choices=("gridworld", "counterexample"))
    parser.add_argument("--algo", choices=("rrpo", "crpo"))
    parser.add_argument("--p", help="uncertainty norm order (use 'inf' for the max-norm)")
    parser.add_argument("--beta")
    parser.add_argument("--eta")
    parser.add_argument("--delta")
    parser.add_argument("-T", "--T", dest="T")
    parser.add_argument("--eval-mode", choices=("exact", "td"))
    parser.add_argument("--constraint-pick", choices=("lowest", "random"))
    parser.add_argument("--init-scale")
    parser.add_argument("--seed")
    parser.add_argument("--seeds", help="comma or space separated list")
    parser.add_argument("--tol")
    parser.add_argument("--max-iter")
    parser.add_argument("--kernels", help="subset of nominal,worst-case,slippery-test")
    parser.add_argument("--output-dir")
    parser.add_argument("--workers")
    parser.add_argument("--slip", help="gridworld test-time slip probability")
    parser.add_argument("--rho", help="counterexample constraint threshold")


def _config(args):
    overrides = {key: getattr(args, dest) for dest, key in _CONFIG_FLAGS.items()}
    return load_config(args.config, overrides)


def _write(text: str, path) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------- subcommands


def cmd_duality_gap(args) -> int:
    params = CounterexampleParams(args.p_lo, args.p_hi, args.gamma, args.rho)
    report = primal_dual_analytic(params)
    num = numeric_oracle(params, args.pi_grid, args.lambda_grid, args.lambda_max)
    row = {
        "primal": report.primal,
        "dual": report.dual,
        "lambda_hat": report.lambda_hat,
        "gap": report.gap,
        "pi1_star": report.pi1_star,
        "pi1_feasible": report.pi1_feasible,
        "primal_num": num.primal,
        "dual_num": num.dual,
    }
    _write(to_csv([row], DUALITY_COLUMNS), args.output)
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config(args)
    code, results = run_training(config, config.output_dir)
    for r in results:
        status = "ok" if r.feasible else f"infeasible ({r.error or 'constraint violated at evaluation'})"
        log.info("seed %d %s: V_0_worst=%.4f cost_worst=%.4f %s",
                 r.seed, r.algo, r.evaluation.V_0_worst, r.evaluation.cost_worst, status)
    print(f"wrote {len(results)} run(s) to {config.output_dir}", file=sys.stderr)
    return code


def cmd_evaluate(args) -> int:
    config = _config(args)
    env = make_environment(config)
    rows = []
    for path in args.policy:
        policy = load_policy(path)
        if policy.logits.shape != (env.train_mdp.num_states, env.train_mdp.num_actions):
            raise InvalidInputError(f"{path}: policy shape {policy.logits.shape} does not match the environment")
        ev = evaluate_policy(env, policy, tol=config.tol, kernels=config.kernels)
        rows.append({
            "policy": str(path),
            **{c: getattr(ev, c) for c in SUMMARY_COLUMNS[2:-1]},
            "feasible_flag": ev.feasible(config.delta),
        })
    columns = ("policy",) + SUMMARY_COLUMNS[2:]
    _write(to_csv(rows, columns), args.output)
    return EXIT_OK


def cmd_diagnostics(args) -> int:
    config = _config(args)
    env = make_environment(config)
    mdp = env.train_mdp
    if args.policy:
        policy = load_policy(args.policy)
    else:
        policy = SoftmaxPolicy.uniform(mdp.num_states, mdp.num_actions)
    report = assumption_diagnostics(mdp, env.uset, policy.probs, tol=config.tol)
    boundary = rows_near_simplex_boundary(mdp.nominal_kernel, env.uset)
    entries = {
        "min_visitation": report.min_visitation,
        "argmin_state": report.argmin_state,
        "exploration_ok": report.exploration_ok,
        "unreachable_states": " ".join(str(s) for s in report.unreachable_states) or "none",
        "diameter_bound": report.diameter_bound,
        "rows_near_simplex_boundary": int(np.count_nonzero(boundary)),
    }
    _write(keyvalue.dump(entries), args.output)
    return EXIT_OK


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrpo", description="Robust constrained policy optimization toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    dg = sub.add_parser("duality-gap", help="closed-form and grid duality gap of the two-state example")
    dg.add_argument("--p-lo", type=float, default=0.25)
    dg.add_argument("--p-hi", type=float, default=0.75)
    dg.add_argument("--gamma", type=float, default=0.5)
    dg.add_argument("--rho", type=float, default=1.0)
    dg.add_argument("--pi-grid", type=int, default=10_000)
    dg.add_argument("--lambda-grid", type=int, default=10_000)
    dg.add_argument("--lambda-max", type=float, default=None)
    dg.add_argument("-o", "--output", default=None, help="CSV path (stdout if omitted)")
    dg.set_defaults(func=cmd_duality_gap)

    tr = sub.add_parser("train", help="train RRPO or CRPO over seeds and write trace/summary CSVs")
    _add_config_flags(tr)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="evaluate saved policies under nominal, worst-case and slippery kernels")
    _add_config_flags(ev)
    ev.add_argument("policy", nargs="+", help="policy files written by 'train'")
    ev.add_argument("-o", "--output", default=None)
    ev.set_defaults(func=cmd_evaluate)

    dx = sub.add_parser("diagnostics", help="exploration and set-diameter checks for a policy")
    _add_config_flags(dx)
    dx.add_argument("--policy", default=None, help="policy file (uniform policy if omitted)")
    dx.add_argument("-o", "--output", default=None)
    dx.set_defaults(func=cmd_diagnostics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InvalidInputError, FileNotFoundError) as exc:
        print(f"rrpo: error: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG


if __name__ == "__main__":
    sys.exit(main())
