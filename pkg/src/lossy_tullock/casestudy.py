"""Bi-level ride-hailing case study: fleet split across regions, then charging.

The upper level is a Blotto game between fleet operators over regions.  Each
operator's allocation to one region becomes its fleet size in a lower-level
receding-horizon game over battery categories.  Results are emitted as CSV
files plus a manifest.
"""
from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy
from joblib import Parallel, delayed

from .blotto import BlottoSpec, solve_semi_analytical
from .centralized import price_of_anarchy, solve_system_optimum, welfare
from .errors import SpecificationError
from .game import total_profits
from .rhg import RHG_SOLVER_CONFIG, RhgMarket, battery_player, run_receding_horizon
from .solver import SolverConfig, solve_ne

PARTS = ("poa", "fleet", "horizon")


@dataclass(frozen=True)
class CaseStudyConfig:
    budgets: tuple = (200.0, 500.0, 1000.0)
    region_prizes: tuple = (220e3, 100e3, 50e3, 35e3)
    cost_template: tuple = (12.0, 9.0, 6.0, 3.0)
    region_epsilon: float = 1.0
    theta: float = 1.0
    theta_min: float = 0.1
    theta_max: float = 12.0
    theta_points: int = 20
    compare_methods: bool = True
    fleet_region: int = 0
    horizons: tuple = (3, 6, 9)
    total_steps: int = 9
    shares: tuple = (0.05, 0.10, 0.85)
    discharge: float = 0.5
    charge_cap: float = 0.95
    step_prizes: tuple = ()
    step_epsilons: tuple = ()
    step_alphas: tuple = ()
    seed: int = 0
    n_jobs: int = 1
    profile_label: str = ""

    def __post_init__(self):
        for name in ("budgets", "region_prizes", "cost_template", "horizons", "shares",
                     "step_prizes", "step_epsilons", "step_alphas"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if len(self.region_prizes) != len(self.cost_template):
            raise SpecificationError("region_prizes and cost_template differ in length")
        if abs(sum(self.shares) - 1.0) > 1e-9:
            raise SpecificationError(f"battery shares sum to {sum(self.shares)}, not 1")
        if self.theta_points < 1 or not self.horizons:
            raise SpecificationError("theta grid and horizon list must be nonempty")
        if not 0 < self.theta_min <= self.theta_max:
            raise SpecificationError("need 0 < theta_min <= theta_max")
        for name in ("step_prizes", "step_epsilons", "step_alphas"):
            if len(getattr(self, name)) != self.total_steps:
                raise SpecificationError(f"{name} needs {self.total_steps} entries")
        if max(self.horizons) > self.total_steps or min(self.horizons) < 1:
            raise SpecificationError("horizons must lie in [1, total_steps]")
        if not 0 <= self.fleet_region < len(self.region_prizes):
            raise SpecificationError("fleet_region out of range")

    @property
    def theta_grid(self) -> np.ndarray:
        return np.linspace(self.theta_min, self.theta_max, self.theta_points)

    def blotto(self, theta: Optional[float] = None) -> BlottoSpec:
        th = self.theta if theta is None else theta
        w = np.asarray(self.region_prizes)
        return BlottoSpec(self.budgets, w, th * np.asarray(self.cost_template),
                          np.full(w.shape, self.region_epsilon))

    def market(self) -> RhgMarket:
        return RhgMarket(self.step_prizes, self.step_epsilons, self.step_alphas,
                         np.zeros((self.total_steps, 3)))

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "CaseStudyConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known - {"version", "description"}
        if unknown:
            raise SpecificationError(f"unknown case-study fields: {sorted(unknown)}")
        kw = {k: v for k, v in d.items() if k in known}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    @classmethod
    def default(cls, **overrides) -> "CaseStudyConfig":
        text = resources.files("lossy_tullock").joinpath("data/case_study.json").read_text()
        return cls.from_dict(json.loads(text), **overrides)


@dataclass
class CaseStudyResult:
    config: CaseStudyConfig
    poa_rows: list = field(default_factory=list)
    profit_rows: list = field(default_factory=list)
    method_rows: list = field(default_factory=list)
    fleet_rows: list = field(default_factory=list)
    fleets: Optional[np.ndarray] = None
    horizon_rows: list = field(default_factory=list)
    stage_loss_rows: list = field(default_factory=list)
    trajectory_rows: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def _theta_point(cfg: CaseStudyConfig, theta: float):
    spec = cfg.blotto(theta)
    game = spec.to_game_spec()
    sa = solve_semi_analytical(spec)
    x_ne = sa.strategy[:, :, None]
    gap, steps = np.nan, 0
    if cfg.compare_methods:
        rep = solve_ne(game, SolverConfig(tol=1e-7))
        gap = float(np.max(np.abs(rep.strategy.values - x_ne)))
        steps = rep.inner_iterations_total
    so = solve_system_optimum(game, x0=x_ne)
    return dict(theta=float(theta), welf_ne=welfare(game, x_ne), welf_so=welfare(game, so.strategy),
                poa=price_of_anarchy(game, so, x_ne),
                ne_profits=total_profits(game, x_ne), so_profits=total_profits(game, so.strategy),
                gap=gap, sa_evals=sa.function_evaluations, configs=sa.configurations_tried,
                it_steps=steps)


def run_poa(cfg: CaseStudyConfig, result: CaseStudyResult) -> None:
    points = Parallel(n_jobs=cfg.n_jobs)(delayed(_theta_point)(cfg, th) for th in cfg.theta_grid)
    for p in points:
        result.poa_rows.append([p["theta"], p["welf_so"], p["welf_ne"], p["poa"]])
        for i, (u_ne, u_so) in enumerate(zip(p["ne_profits"], p["so_profits"])):
            result.profit_rows.append([p["theta"], i + 1, u_ne, u_so])
        result.method_rows.append([p["theta"], p["gap"], p["sa_evals"], p["configs"], p["it_steps"]])


def upper_level_fleets(cfg: CaseStudyConfig) -> np.ndarray:
    """Equilibrium allocations at ``cfg.theta``, shape (companies, regions)."""
    return solve_semi_analytical(cfg.blotto()).strategy


def run_fleet(cfg: CaseStudyConfig, result: CaseStudyResult) -> None:
    spec = cfg.blotto()
    sa = solve_semi_analytical(spec)
    game = spec.to_game_spec()
    so = solve_system_optimum(game, x0=sa.strategy[:, :, None])
    result.fleets = sa.strategy
    for i in range(spec.n_players):
        for j in range(spec.n_battlefields):
            result.fleet_rows.append([i + 1, j + 1, sa.strategy[i, j],
                                      so.strategy.values[i, j, 0]])


def _horizon_run(cfg: CaseStudyConfig, fleets, T: int):
    players = [battery_player(f, cfg.shares, cfg.discharge, cfg.charge_cap, cfg.total_steps)
               for f in fleets]
    return run_receding_horizon(players, cfg.market(), T, RHG_SOLVER_CONFIG, total_steps=cfg.total_steps)


def run_horizon(cfg: CaseStudyConfig, result: CaseStudyResult) -> None:
    if result.fleets is None:
        result.fleets = upper_level_fleets(cfg)
    fleets = result.fleets[:, cfg.fleet_region]
    traces = Parallel(n_jobs=cfg.n_jobs)(delayed(_horizon_run)(cfg, fleets, T) for T in cfg.horizons)
    for T, tr in zip(cfg.horizons, traces):
        result.horizon_rows.append([T, *tr.profits, tr.lost_profit])
        for k in range(tr.total_steps):
            result.stage_loss_rows.append([T, k + 1, tr.losses[k]])
            for i in range(len(fleets)):
                result.trajectory_rows.append(
                    [T, i + 1, k + 1, *tr.states[i, k], *tr.inputs[i, k], tr.participations[i, k],
                     tr.payoffs[i, k], tr.costs[i, k]])


def run_case_study(cfg: CaseStudyConfig, parts: Sequence[str] = PARTS) -> CaseStudyResult:
    bad = set(parts) - set(PARTS)
    if bad:
        raise SpecificationError(f"unknown case-study parts {sorted(bad)}; choose from {PARTS}")
    result = CaseStudyResult(cfg)
    runners = {"poa": run_poa, "fleet": run_fleet, "horizon": run_horizon}
    for part in PARTS:
        if part in parts:
            t0 = time.perf_counter()
            runners[part](cfg, result)
            result.timings[part] = time.perf_counter() - t0
    return result


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def emit_results(result: CaseStudyResult, out_dir) -> list:
    """Write one CSV per table, ``manifest.json`` and ``timings.json``.

    The manifest holds only run-invariant data (files and their hashes,
    config hash, seed, versions) so repeated runs produce identical bytes;
    wall times go to ``timings.json``, which the manifest lists unhashed.
    """
    from . import __version__

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_comp = len(result.config.budgets)
    comp = [f"company_{i + 1}" for i in range(n_comp)]
    tables = [
        ("poa.csv", ["theta", "welf_so", "welf_ne", "poa"], result.poa_rows),
        ("profits_vs_theta.csv", ["theta", "company", "ne_profit", "so_profit"], result.profit_rows),
        ("ne_methods.csv", ["theta", "max_abs_diff", "root_evaluations", "configurations",
                            "iterative_steps"], result.method_rows),
        ("fleet.csv", ["company", "region", "ne_allocation", "so_allocation"], result.fleet_rows),
        ("horizon_profits.csv", ["horizon", *comp, "lost_profit"], result.horizon_rows),
        ("stage_loss.csv", ["horizon", "step", "stage_loss"], result.stage_loss_rows),
        ("rhg_trajectories.csv",
         ["horizon", "company", "step", "y_red", "y_yellow", "y_green", "u_red", "u_yellow",
          "u_green", "participation", "payoff", "cost"], result.trajectory_rows),
    ]
    written = []
    for name, header, rows in tables:
        if rows:
            _write_csv(out / name, header, rows)
            written.append(name)
    with (out / "timings.json").open("w", encoding="utf-8") as fh:
        json.dump({k: round(v, 6) for k, v in result.timings.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest = {
        "files": {name: _sha256(out / name) for name in written},
        "timings_file": "timings.json",
        "config": result.config.to_dict(),
        "config_sha256": result.config.digest(),
        "seed": result.config.seed,
        "versions": {"artifact": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    with (out / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [*written, "timings.json", "manifest.json"]
