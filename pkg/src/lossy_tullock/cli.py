"""Command-line interface for the contest solvers and the case study.

Exit codes: 0 success, 2 bad arguments or spec, 3 solver failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .blotto import BUDGET_TOL, benchmark_methods, solve_semi_analytical
from .casestudy import CaseStudyConfig, emit_results, run_case_study
from .centralized import (
    CentralizedConfig,
    price_of_anarchy,
    solve_proportional_fair,
    solve_system_optimum,
    welfare,
)
from .analysis import uniqueness_test
from .errors import (
    DomainError,
    GameError,
    InfeasibleError,
    NumericalError,
    SamplingError,
    SpecificationError,
    UnboundedError,
)
from .game import total_profits
from .io import load_spec, write_json
from .rhg import RHG_SOLVER_CONFIG, run_receding_horizon
from .solver import SolverConfig, solve_ne

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
DEFAULT_SEED = 0


class SolverFailure(GameError):
    """A solver returned without meeting its tolerance."""


def _solver_config(args, base=None) -> SolverConfig:
    base = base or SolverConfig()
    over = {"tol": args.tol, "gamma_bar": args.gamma_bar, "eta": args.eta, "t_out": args.t_out}
    return dataclasses.replace(base, **{k: v for k, v in over.items() if v is not None})


def _load(args, need: str):
    if args.spec is None:
        raise SpecificationError(f"{args.command} needs --spec")
    spec = load_spec(args.spec, theta=args.theta if args.theta is not None else 1.0,
                     epsilon=args.epsilon)
    missing = {"game": spec.game is None, "blotto": spec.blotto is None,
               "rhg": spec.rhg_players is None}[need]
    if missing:
        raise SpecificationError(f"{args.spec}: spec has no '{need}' section")
    return spec


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve_ne(args):
    game = _load(args, "game").game
    rep = solve_ne(game, _solver_config(args), best_effort=args.best_effort, seed=args.seed)
    write_json(_out(args) / "ne.json", {
        "strategy": rep.strategy.values.tolist(),
        "profits": total_profits(game, rep.strategy).tolist(),
        "converged": rep.converged,
        "max_residual": rep.certificate.max_residual,
        "outer_iterations": rep.outer_iterations,
        "inner_iterations": rep.inner_iterations_total,
        "final_step": rep.final_step,
    })
    if not rep.converged:
        raise SolverFailure(f"no equilibrium within tolerance (residual "
                            f"{rep.certificate.max_residual:.3g})")


def cmd_solve_blotto(args):
    spec = _load(args, "blotto").blotto
    sol = solve_semi_analytical(spec)
    x = sol.strategy
    drift = float(np.max(np.abs(x.sum(axis=1) - spec.budgets)))
    if np.any(x < 0) or drift > BUDGET_TOL * max(1.0, float(spec.budgets.max())):
        raise SolverFailure(f"solution fails re-validation (budget drift {drift:.3g})")
    write_json(_out(args) / "blotto.json", {
        "strategy": x.tolist(),
        "budgets": spec.budgets.tolist(),
        "budget_drift": drift,
        "profits": sol.profits(spec).tolist(),
        "zero_set": [list(z) for z in sol.configuration.zero_set],
        "route": sol.route,
        "verified": sol.verified,
        "max_residual": sol.certificate.max_residual if sol.certificate else None,
        "configurations_tried": sol.configurations_tried,
        "function_evaluations": sol.function_evaluations,
    })


def _centralized(args, solve, name):
    game = _load(args, "game").game
    cfg = CentralizedConfig(seed=args.seed, **({"tol": args.tol} if args.tol else {}))
    sol = solve(game, cfg)
    out = {
        "strategy": sol.strategy.values.tolist(),
        "objective": sol.objective_value,
        "welfare": welfare(game, sol.strategy),
        "profits": total_profits(game, sol.strategy).tolist(),
        "kkt_residual": sol.kkt_residual,
        "converged": sol.converged,
        "iterations": sol.iterations,
    }
    if name == "so":
        ne = solve_ne(game, _solver_config(args), best_effort=True)
        try:
            out["poa"] = price_of_anarchy(game, sol, ne)
        except DomainError:
            out["poa"] = None
    write_json(_out(args) / f"{name}.json", out)
    if not sol.converged:
        raise SolverFailure(f"ascent stopped at residual {sol.kkt_residual:.3g}")


def cmd_solve_so(args):
    _centralized(args, solve_system_optimum, "so")


def cmd_solve_pf(args):
    _centralized(args, solve_proportional_fair, "pf")


def cmd_check_unique(args):
    game = _load(args, "game").game
    rep = uniqueness_test(game, sample_count=args.samples, seed=args.seed,
                          force_sampling=args.force_sampling)
    write_json(_out(args) / "uniqueness.json", {
        "verdict": rep.verdict.value,
        "samples_checked": rep.samples_checked,
        "min_eigenvalue_seen": None if np.isnan(rep.min_eigenvalue_seen) else rep.min_eigenvalue_seen,
        "max_eigenvalue_seen": None if np.isnan(rep.max_eigenvalue_seen) else rep.max_eigenvalue_seen,
        "witness": None if rep.witness is None else rep.witness.values.tolist(),
    })
    print(rep.verdict.value)


def cmd_run_rhg(args):
    spec = _load(args, "rhg")
    T = args.horizon or spec.rhg_horizon
    tr = run_receding_horizon(spec.rhg_players, spec.rhg_market, T,
                              _solver_config(args, RHG_SOLVER_CONFIG))
    out = _out(args)
    write_json(out / "rhg.json", {
        "horizon": T, "profits": tr.profits.tolist(), "lost_profit": tr.lost_profit,
        "stage_losses": tr.losses.tolist(),
    })
    with (out / "rhg_trajectory.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        mu = tr.inputs.shape[2]
        w.writerow(["player", "step", *[f"u_{j}" for j in range(mu)], "participation",
                    "payoff", "cost"])
        for i in range(tr.inputs.shape[0]):
            for k in range(tr.total_steps):
                w.writerow([i + 1, k + 1, *map(repr, map(float, tr.inputs[i, k])),
                            repr(float(tr.participations[i, k])), repr(float(tr.payoffs[i, k])),
                            repr(float(tr.costs[i, k]))])


def cmd_case_study(args):
    over = {"seed": args.seed, "theta": args.theta, "region_epsilon": args.epsilon,
            "theta_points": args.theta_grid}
    if args.spec:
        import json
        with open(args.spec, encoding="utf-8") as fh:
            cfg = CaseStudyConfig.from_dict(json.load(fh), **over)
    else:
        cfg = CaseStudyConfig.default(**over)
    parts = ("poa", "fleet", "horizon") if args.part == "all" else (args.part,)
    files = emit_results(run_case_study(cfg, parts), args.out)
    for f in files:
        print(Path(args.out) / f)


def cmd_benchmark(args):
    spec = _load(args, "blotto").blotto
    rep = benchmark_methods(spec, _solver_config(args), repeats=args.repeats)
    write_json(_out(args) / "benchmark.json", {
        "semi_analytical_seconds": rep.semi_analytical_time,
        "iterative_seconds": rep.iterative_time,
        "speedup": rep.speedup,
        "semi_analytical_evaluations": rep.semi_analytical_evaluations,
        "iterative_inner_steps": rep.iterative_inner_steps,
        "configurations_tried": rep.configurations_tried,
        "agreement": rep.agreement,
    })
    print(f"speedup {rep.speedup:.1f}x, agreement {rep.agreement:.2e}")


COMMANDS = {
    "solve-ne": cmd_solve_ne, "solve-blotto": cmd_solve_blotto, "solve-so": cmd_solve_so,
    "solve-pf": cmd_solve_pf, "check-unique": cmd_check_unique, "run-rhg": cmd_run_rhg,
    "case-study": cmd_case_study, "benchmark": cmd_benchmark,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="input JSON spec")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--tol", type=float)
    common.add_argument("--gamma-bar", type=float)
    common.add_argument("--eta", type=float)
    common.add_argument("--t-out", type=int)
    common.add_argument("--theta", type=float, help="scale of the Blotto unit costs")
    common.add_argument("--epsilon", type=float, help="override every Blotto epsilon")

    parser = argparse.ArgumentParser(prog="lossy-tullock", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "solve-ne":
            p.add_argument("--best-effort", action="store_true",
                           help="run even when uniqueness is not guaranteed")
        elif name == "check-unique":
            p.add_argument("--samples", type=int, default=50)
            p.add_argument("--force-sampling", action="store_true")
        elif name == "run-rhg":
            p.add_argument("--horizon", type=int)
        elif name == "case-study":
            p.add_argument("part", choices=["poa", "fleet", "horizon", "all"])
            p.add_argument("--theta-grid", type=int, help="number of theta grid points")
        elif name == "benchmark":
            p.add_argument("--repeats", type=int, default=5)
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        COMMANDS[args.command](args)
    except OSError as exc:
        name = getattr(exc, "filename", None)
        print(f"error [io]: {exc.strerror or exc}" + (f": {name}" if name else ""), file=sys.stderr)
        return EXIT_IO
    except (SpecificationError, ValueError) as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, NumericalError, InfeasibleError, UnboundedError, SamplingError,
            GameError) as exc:
        print(f"error [solver]: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())
