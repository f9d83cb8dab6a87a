"""Semi-analytical equilibrium of the lossy Blotto game.

Each player splits a budget ``R_i`` over ``K`` battlefields and pays a linear
cost ``beta_k`` per unit.  For a guessed zero pattern (a *configuration*) the
KKT system collapses to one monotone scalar equation in the summed budget
multipliers; its root gives every battlefield's ``Phi_k + eps_k`` in closed
form, and the allocations follow by back-substitution.  Configurations are
tried from the smallest zero set upwards and the first one whose point
passes the stationarity certificate is returned.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq, root

from .errors import DomainError, NumericalError, SpecificationError
from .game import GameSpec, LinearCost, PlayerConstraints, total_profits
from .solver import OptimalityCertificate, SolverConfig, optimality_test, solve_ne

ROOT_RTOL = 1e-12
SUPPORT_TOL = 1e-10
BUDGET_TOL = 1e-8
CERT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class BlottoSpec:
    budgets: np.ndarray
    prizes: np.ndarray
    unit_costs: np.ndarray
    fictitious: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.budgets, dtype=float).ravel()
        w = np.asarray(self.prizes, dtype=float).ravel()
        b = np.asarray(self.unit_costs, dtype=float).ravel()
        e = np.asarray(self.fictitious, dtype=float).ravel()
        if r.size < 1 or w.size < 1:
            raise SpecificationError("need at least one player and one battlefield")
        if b.shape != w.shape or e.shape != w.shape:
            raise SpecificationError("prizes, unit_costs and fictitious need one entry per battlefield")
        if np.any(r <= 0):
            raise SpecificationError("budgets must be positive")
        if np.any(e <= 0):
            raise SpecificationError("fictitious participations must be positive")
        if np.any(w < 0):
            raise SpecificationError("prizes must be non-negative")
        for name, val in (("budgets", r), ("prizes", w), ("unit_costs", b), ("fictitious", e)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_players(self) -> int:
        return self.budgets.size

    @property
    def n_battlefields(self) -> int:
        return self.prizes.size

    def to_game_spec(self) -> GameSpec:
        k = self.n_battlefields
        return GameSpec(
            n_players=self.n_players, n_stages=k, n_categories=1,
            stage_prizes=self.prizes, fictitious_participations=self.fictitious,
            participation_weights=np.ones(1), cost_model=LinearCost(self.unit_costs),
            constraints=[PlayerConstraints.budget(k, r) for r in self.budgets])


@dataclass(frozen=True)
class Configuration:
    """Set of ``(player, battlefield)`` pairs pinned to zero."""

    n_players: int
    n_battlefields: int
    zero_set: frozenset = frozenset()

    def __post_init__(self):
        zs = frozenset((int(i), int(k)) for i, k in self.zero_set)
        for i, k in zs:
            if not (0 <= i < self.n_players and 0 <= k < self.n_battlefields):
                raise SpecificationError(f"pair {(i, k)} out of range")
        object.__setattr__(self, "zero_set", zs)
        if any(len(z) >= self.n_battlefields for z in self.zeroed_per_player):
            raise SpecificationError("configuration zeroes every battlefield of some player")

    @property
    def mask(self) -> np.ndarray:
        """Boolean ``(N, K)`` array, True where the player participates."""
        m = np.ones((self.n_players, self.n_battlefields), dtype=bool)
        for i, k in self.zero_set:
            m[i, k] = False
        return m

    @property
    def participants(self) -> np.ndarray:
        return self.mask.sum(axis=0)

    @property
    def zeroed_per_player(self) -> list:
        return [sorted(k for (j, k) in self.zero_set if j == i) for i in range(self.n_players)]

    def __len__(self):
        return len(self.zero_set)


def enumerate_configurations(n_players: int, n_battlefields: int, limit: Optional[int] = None):
    """Feasible configurations by zero-set size, then lexicographically.

    Pairs are ordered ``(i, k)`` row-major; a configuration is skipped when
    it zeroes all battlefields of some player.
    """
    pairs = [(i, k) for i in range(n_players) for k in range(n_battlefields)]
    produced = 0
    for r in range(len(pairs) + 1):
        for combo in itertools.combinations(pairs, r):
            counts = np.zeros(n_players, dtype=int)
            for i, _ in combo:
                counts[i] += 1
            if np.any(counts >= n_battlefields):
                continue
            yield Configuration(n_players, n_battlefields, frozenset(combo))
            produced += 1
            if limit is not None and produced >= limit:
                return


def _t_bar(t, cfg, spec, supported=None):
    n = cfg.participants
    if supported is None:
        supported = n > 0
    w = spec.prizes[supported]
    e = spec.fictitious[supported]
    nk = n[supported]
    delta = t + nk * spec.unit_costs[supported]
    if np.any(delta <= 0):
        raise DomainError(f"t = {t:.6g} is below the domain bound {np.max(-nk * spec.unit_costs[supported]):.6g}")
    wt = w * (nk - 1)
    return (wt + np.sqrt(wt ** 2 + 4.0 * w * e * delta)) / (2.0 * delta)


def f_tilde(t: float, cfg: Configuration, spec: BlottoSpec) -> float:
    """Aggregate budget residual as a function of the summed multiplier ``t``.

    Only battlefields with at least one participant enter; their fictitious
    participations are the ones subtracted, since an empty battlefield keeps
    ``Phi_k + eps_k = eps_k`` and contributes nothing to the budgets.
    """
    supported = cfg.participants > 0
    return float(_t_bar(t, cfg, spec).sum() - spec.budgets.sum()
                 - spec.fictitious[supported].sum())


def _domain_bound(cfg, spec):
    n = cfg.participants
    supported = n > 0
    return float(np.max(-n[supported] * spec.unit_costs[supported]))


class _Counter:
    def __init__(self):
        self.n = 0


def find_root(cfg: Configuration, spec: BlottoSpec, counter: Optional[_Counter] = None) -> float:
    """Unique zero of :func:`f_tilde` to the right of the domain bound."""
    counter = counter or _Counter()

    def f(t):
        counter.n += 1
        return f_tilde(t, cfg, spec)

    bound = _domain_bound(cfg, spec)
    scale = max(1.0, abs(bound))
    offset = 1e-12 * scale
    lo = bound + offset
    f_lo = f(lo)
    shrink = 0
    while f_lo <= 0 and shrink < 20:
        # f blows up at the bound, so a non-positive value means the offset is too coarse
        offset *= 1e-2
        lo = bound + offset
        if lo <= bound:
            break
        f_lo = f(lo)
        shrink += 1
    if f_lo <= 0:
        raise NumericalError("no sign change at the lower end of the bracket", residual=f_lo)
    base = max(lo, 0.0)
    step = 1.0
    hi = base + step
    f_hi = f(hi)
    while f_hi >= 0:
        step *= 2.0
        if step > 1e300:
            raise NumericalError("could not bracket the root from above", residual=f_hi)
        hi = base + step
        f_hi = f(hi)
    t = brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    val = f(t)
    target = ROOT_RTOL * (spec.budgets.sum() + spec.fictitious[cfg.participants > 0].sum())
    if abs(val) > target:
        # last resort: step to the adjacent float with the smaller residual
        for cand in (np.nextafter(t, -np.inf), np.nextafter(t, np.inf)):
            if cand > bound:
                cv = f(cand)
                if abs(cv) < abs(val):
                    t, val = cand, cv
    if abs(val) > target:
        raise NumericalError(f"root residual {val:.3g} above {target:.3g}", residual=val)
    return float(t)


@dataclass(frozen=True)
class BlottoSolution:
    strategy: np.ndarray
    configuration: Configuration
    t_bar: np.ndarray
    nu: np.ndarray
    t_nu_root: float
    verified: bool
    certificate: Optional[OptimalityCertificate] = None
    route: str = "scalar"
    configurations_tried: int = 0
    function_evaluations: int = 0
    diagnostics: tuple = ()

    def profits(self, spec: BlottoSpec) -> np.ndarray:
        return total_profits(spec.to_game_spec(), self.strategy[:, :, None])


class BlottoSearchError(NumericalError):
    """No configuration produced a certified equilibrium."""

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = tuple(diagnostics)


def _back_substitute(t_bar, cfg, spec):
    """Multipliers and allocations for given ``Phi_k + eps_k`` values."""
    mask = cfg.mask
    w = spec.prizes
    b = spec.unit_costs
    q = np.where(mask, (t_bar ** 2 / np.where(w > 0, w, 1.0))[None, :], 0.0)
    num = np.where(mask, t_bar[None, :], 0.0).sum(axis=1) - spec.budgets - (q * b).sum(axis=1)
    nu = num / q.sum(axis=1)
    x = np.where(mask, t_bar[None, :] - (nu[:, None] + b[None, :]) * q, 0.0)
    return nu, x


def _coupled_solve(cfg, spec, t_guess):
    """Solve the KKT system with battlefield-specific multiplier sums.

    Unknowns are ``Phi_k + eps_k`` on supported battlefields and the budget
    multipliers; equations are the battlefield totals and the budgets.
    """
    mask = cfg.mask
    supported = cfg.participants > 0
    w = spec.prizes
    b = spec.unit_costs
    eps = spec.fictitious
    ks = np.flatnonzero(supported)
    n = spec.n_players

    def alloc(z):
        tb = np.array(eps, dtype=float)
        tb[ks] = z[:ks.size]
        nu = z[ks.size:]
        x = np.where(mask, tb[None, :] - (nu[:, None] + b[None, :]) * tb[None, :] ** 2
                     / np.where(w > 0, w, 1.0)[None, :], 0.0)
        return tb, nu, x

    def resid(z):
        tb, nu, x = alloc(z)
        r1 = (x.sum(axis=0) - (tb - eps))[ks] / np.maximum(1.0, tb[ks])
        r2 = (x.sum(axis=1) - spec.budgets) / np.maximum(1.0, spec.budgets)
        return np.concatenate([r1, r2])

    nu0, _ = _back_substitute(t_guess, cfg, spec)
    z0 = np.concatenate([t_guess[ks], nu0])
    sol = root(resid, z0, method="hybr", options={"xtol": 1e-14})
    tb, nu, x = alloc(sol.x)
    return tb, nu, x, float(np.max(np.abs(resid(sol.x))))


def solve_configuration(cfg: Configuration, spec: BlottoSpec, game: Optional[GameSpec] = None,
                        refine: bool = True, counter: Optional[_Counter] = None,
                        notes: Optional[list] = None) -> Optional[BlottoSolution]:
    """Candidate equilibrium for one zero pattern, or None if it fails the gate.

    The scalar route follows the closed form directly.  It is exact when all
    supported battlefields share the same participant set; otherwise the
    multiplier sums differ per battlefield and, with ``refine``, the coupled
    KKT system is solved from the scalar candidate.
    """
    counter = counter or _Counter()
    notes = notes if notes is not None else []
    game = game or spec.to_game_spec()
    supported = cfg.participants > 0
    if np.any(spec.prizes[supported] <= 0):
        notes.append((cfg, "supported battlefield with zero prize"))
        return None
    t_star = find_root(cfg, spec, counter)
    t_bar = np.array(spec.fictitious, dtype=float)
    t_bar[supported] = _t_bar(t_star, cfg, spec)
    nu, x = _back_substitute(t_bar, cfg, spec)

    candidates = [("scalar", t_bar, nu, x)]
    part_sets = {tuple(cfg.mask[:, k]) for k in np.flatnonzero(supported)}
    if refine and len(part_sets) > 1:
        try:
            tb2, nu2, x2, res = _coupled_solve(cfg, spec, t_bar)
            if res < 1e-10 and np.all(tb2 > 0):
                candidates.append(("coupled", tb2, nu2, x2))
        except (ArithmeticError, ValueError):
            pass

    mask = cfg.mask
    for route, tb, nu_c, xc in candidates:
        if np.any(xc[mask] < -SUPPORT_TOL):
            notes.append((cfg, f"{route}: negative allocation {xc[mask].min():.3g}"))
            continue
        xc = np.where(mask, np.maximum(xc, 0.0), 0.0)
        if np.max(np.abs(xc.sum(axis=1) - spec.budgets)) > BUDGET_TOL * max(1.0, spec.budgets.max()):
            notes.append((cfg, f"{route}: budget mismatch"))
            continue
        cert = optimality_test(game, xc[:, :, None])
        if cert.max_residual >= CERT_TOL:
            notes.append((cfg, f"{route}: certificate {cert.max_residual:.3g}"))
            continue
        return BlottoSolution(strategy=xc, configuration=cfg, t_bar=tb, nu=nu_c,
                              t_nu_root=t_star, verified=True, certificate=cert, route=route,
                              function_evaluations=counter.n)
    return None


def solve_semi_analytical(spec: BlottoSpec, max_configs: Optional[int] = None,
                          refine: bool = True) -> BlottoSolution:
    """First verified configuration in enumeration order.

    ``max_configs`` defaults to ``(2**K - 1)**N``, the number of feasible
    configurations; uniqueness of the equilibrium justifies stopping early.
    """
    n, k = spec.n_players, spec.n_battlefields
    cap = (2 ** k - 1) ** n if max_configs is None else max_configs
    game = spec.to_game_spec()
    counter = _Counter()
    notes = []
    tried = 0
    for cfg in enumerate_configurations(n, k, limit=cap):
        tried += 1
        try:
            sol = solve_configuration(cfg, spec, game, refine=refine, counter=counter, notes=notes)
        except (NumericalError, DomainError) as exc:
            notes.append((cfg, f"root failure: {exc}"))
            continue
        if sol is not None:
            return BlottoSolution(**{**sol.__dict__, "configurations_tried": tried,
                                     "function_evaluations": counter.n,
                                     "diagnostics": tuple(notes)})
    raise BlottoSearchError(
        f"no configuration out of {tried} passed verification; "
        "consider the iterative solver", notes)


@dataclass(frozen=True)
class BenchmarkReport:
    semi_analytical_time: float
    iterative_time: float
    semi_analytical_evaluations: int
    iterative_inner_steps: int
    configurations_tried: int
    agreement: float
    semi_analytical: BlottoSolution = field(repr=False, default=None)
    iterative_strategy: np.ndarray = field(repr=False, default=None)

    @property
    def speedup(self) -> float:
        return self.iterative_time / self.semi_analytical_time


def benchmark_methods(spec: BlottoSpec, solver_config: Optional[SolverConfig] = None,
                      repeats: int = 5) -> BenchmarkReport:
    """Wall-clock and evaluation counts of both equilibrium solvers.

    The semi-analytical time is the best of ``repeats`` runs to damp timer
    noise on a sub-millisecond measurement.
    """
    times = []
    sol = None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        sol = solve_semi_analytical(spec)
        times.append(time.perf_counter() - t0)
    rep = solve_ne(spec.to_game_spec(), solver_config)
    x_it = rep.strategy.values[:, :, 0]
    return BenchmarkReport(
        semi_analytical_time=min(times),
        iterative_time=rep.wall_time,
        semi_analytical_evaluations=sol.function_evaluations,
        iterative_inner_steps=rep.inner_iterations_total,
        configurations_tried=sol.configurations_tried,
        agreement=float(np.max(np.abs(sol.strategy - x_it))),
        semi_analytical=sol,
        iterative_strategy=x_it,
    )
