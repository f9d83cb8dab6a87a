"""System-optimal and proportionally fair joint strategies, welfare and PoA."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .analysis import check_prop3_class, sample_feasible
from .errors import DomainError
from .game import (
    DynamicPriceCost,
    GameSpec,
    JointStrategy,
    as_array,
    profit_jacobian,
    stage_losses,
    total_profits,
    welfare_gradient,
)
from .projection import Projector, project_players
from .solver import SolverConfig, default_start, solve_ne

POSITIVITY_FLOOR = 1e-12
START_CONFIG = SolverConfig(t_out=2000, max_outer=10)


class Kind(enum.Enum):
    SYSTEM_OPTIMUM = "SystemOptimum"
    PROPORTIONAL_FAIR = "ProportionalFair"


@dataclass(frozen=True)
class CentralizedConfig:
    tol: float = 1e-9
    max_iter: int = 200000
    initial_step: float = 1.0
    armijo: float = 1e-4
    restarts: int = 10
    seed: int = 0


@dataclass(frozen=True)
class CentralizedSolution:
    strategy: JointStrategy
    objective_value: float
    kind: Kind
    kkt_residual: float
    converged: bool
    iterations: int


def welfare(spec: GameSpec, x) -> float:
    """Sum of all players' total profits."""
    return float(total_profits(spec, x).sum())


def system_objective(spec: GameSpec, x) -> float:
    """``-(total loss) - (total cost)``; equals welfare minus the prize pool."""
    arr = as_array(spec, x)
    cost = 0.0
    for k in range(spec.n_stages):
        cost += float(spec.cost_model.stage_costs(arr[:, k, :], k).sum())
    return -float(stage_losses(spec, arr).sum()) - cost


def system_objective_remainder(spec: GameSpec, x, y) -> float:
    """Exact second-order part of the system objective change from x to y.

    ``f(y) - f(x) - grad f(x) . (y - x)`` equals ``-W eps d^2 / (S^2 (S + d))``
    per stage for the loss (``d`` the change of total participation) plus
    ``-alpha |D dX|^2`` for dynamic prices.  Forming it directly avoids
    subtracting two objective values of size ``W``.
    """
    ax, ay = as_array(spec, x), as_array(spec, y)
    diff = ay - ax
    w = spec.participation_weights
    s = np.einsum("ikj,j->k", ax, w) + spec.fictitious_participations
    d = np.einsum("ikj,j->k", diff, w)
    rem = -np.sum(spec.stage_prizes * spec.fictitious_participations * d ** 2 / (s ** 2 * (s + d)))
    cost = spec.cost_model
    if isinstance(cost, DynamicPriceCost):
        dx = diff.sum(axis=0)
        rem -= float(np.sum(cost.alphas[:, None] * cost.priced * dx ** 2))
    return float(rem)


def profit_changes(spec: GameSpec, x, y) -> np.ndarray:
    """``u_i(y) - u_i(x)`` for every player, formed from differences only."""
    ax, ay = as_array(spec, x), as_array(spec, y)
    diff = ay - ax
    w = spec.participation_weights
    eps = spec.fictitious_participations
    phi_x = np.einsum("ikj,j->ik", ax, w)
    dphi = np.einsum("ikj,j->ik", diff, w)
    sx = phi_x.sum(axis=0) + eps
    ds = dphi.sum(axis=0)
    sy = sx + ds
    dpay = spec.stage_prizes * (dphi * sx - phi_x * ds) / (sx * sy)
    cost = spec.cost_model
    if isinstance(cost, DynamicPriceCost):
        ty = ay.sum(axis=0)
        dtot = diff.sum(axis=0)
        price_y = cost.priced * (cost.alphas[:, None] * ty + cost.offsets)
        dcost = (np.einsum("ikj,kj->ik", diff, price_y)
                 + np.einsum("ikj,kj->ik", ax, cost.priced * cost.alphas[:, None] * dtot))
    else:
        dcost = cost.betas * diff.sum(axis=2)
    return (dpay - dcost).sum(axis=1)


def _equality_nullspace_projectors(spec):
    """Per-player orthogonal projectors onto the null space of the equality rows."""
    out = []
    for cons in spec.constraints:
        p = np.eye(cons.dim)
        if cons.n_eq:
            u, sv, _ = np.linalg.svd(cons.eq_matrix.T, full_matrices=False)
            u = u[:, sv > sv.max() * 1e-12]
            p -= u @ u.T
        out.append(p)
    return out


def price_of_anarchy(spec: GameSpec, so, ne) -> float:
    """``Welf(SO) / Welf(NE)``; undefined when the equilibrium welfare is not positive."""
    so_x = so.strategy if isinstance(so, CentralizedSolution) else so
    ne_x = getattr(ne, "strategy", ne)
    w_ne = welfare(spec, ne_x)
    if w_ne <= 0:
        raise DomainError(f"equilibrium welfare {w_ne:.6g} is not positive; PoA undefined")
    return welfare(spec, so_x) / w_ne


def _ascent(spec, x0, f: Callable, grad: Callable, cfg: CentralizedConfig, admissible=None,
            remainder: Optional[Callable] = None):
    """Projected-gradient ascent with Armijo backtracking and step doubling.

    The directional term ``g . (y - x)`` uses the gradient with its
    equality-row component removed; that component is orthogonal to every
    feasible move but, being large, would turn the rounding error of the
    projection into spurious gains or losses.  ``remainder(x, y)`` may give
    ``f(y) - f(x) - g . (y - x)`` exactly; by default it is formed by
    subtraction.

    Returns ``(x, f(x), residual, iterations, floor)``.  ``floor`` is the
    residual that counts as converged: ``cfg.tol``, or, when the line search
    stalls, the level below which the gain of a projected step (about
    ``residual**2``) drowns in the rounding of ``g . (y - x)``.
    """
    projectors = [Projector(c) for c in spec.constraints]
    nulls = _equality_nullspace_projectors(spec)
    n, d = spec.n_players, spec.player_dim

    def proj(y):
        return project_players(y.reshape(n, d), projectors).reshape(spec.shape)

    def reduce(g):
        flat = g.reshape(n, d)
        return np.stack([p @ gi for p, gi in zip(nulls, flat)]).reshape(spec.shape)

    x = proj(as_array(spec, x0))
    fx = f(x)
    step = cfg.initial_step
    residual = np.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        g = grad(x)
        residual = float(np.max(np.abs(proj(x + g) - x)))
        if residual < cfg.tol:
            break
        g_red = reduce(g)
        while True:
            y = proj(x + step * g)
            ok = admissible is None or admissible(y)
            if ok:
                lin = float(np.sum(g_red * (y - x)))
                rem = remainder(x, y) if remainder else f(y) - fx - float(np.sum(g * (y - x)))
                if lin + rem >= cfg.armijo * lin and lin > 0:
                    break
            step *= 0.5
            if step < 1e-20:
                scale = float(np.max(np.abs(g))) * max(1.0, float(np.max(np.abs(x))))
                floor = np.sqrt(64.0 * np.finfo(float).eps * scale * x.size)
                return x, fx, residual, it, max(cfg.tol, floor)
        x, fx = y, f(y)
        step *= 2.0
    return x, fx, residual, it, cfg.tol


def solve_system_optimum(spec: GameSpec, config: Optional[CentralizedConfig] = None,
                         x0=None) -> CentralizedSolution:
    """Maximise ``-(sum of losses) - (sum of costs)`` over the product of player sets.

    The objective is concave, so the start point (by default the projection
    of zero) only affects speed.  Every accepted step increases the
    objective, so the result is never worse than ``x0``.
    """
    cfg = config or CentralizedConfig()
    if x0 is None:
        x0 = default_start(spec)
    x, fx, res, it, floor = _ascent(spec, x0, lambda z: system_objective(spec, z),
                                    lambda z: welfare_gradient(spec, z), cfg,
                                    remainder=lambda a, b: system_objective_remainder(spec, a, b))
    return CentralizedSolution(JointStrategy(x), fx, Kind.SYSTEM_OPTIMUM, res,
                               res <= floor, it)


def _equilibrium_start(spec):
    """Cheap approximate NE; only used as a starting point."""
    if check_prop3_class(spec):
        return solve_ne(spec, START_CONFIG).strategy.values
    return default_start(spec)


def log_profit_gradient(spec: GameSpec, x) -> np.ndarray:
    u = total_profits(spec, x)
    jac = profit_jacobian(spec, x)
    return np.einsum("i,ijkm->jkm", 1.0 / u, jac)


def solve_proportional_fair(spec: GameSpec, config: Optional[CentralizedConfig] = None,
                            x0=None) -> CentralizedSolution:
    """Maximise ``sum_i log u_i`` keeping every profit strictly positive.

    The default start is an approximate NE.  Positivity is only enforced
    along the iterates; if the start point has a non-positive profit, seeded
    random feasible points are tried instead.
    """
    cfg = config or CentralizedConfig()
    start = _equilibrium_start(spec) if x0 is None else as_array(spec, x0)

    def positive(z):
        return bool(np.all(total_profits(spec, z) > POSITIVITY_FLOOR))

    if not positive(start):
        rng = np.random.default_rng(cfg.seed)
        for _ in range(cfg.restarts):
            cand = sample_feasible(spec, rng)
            if positive(cand):
                start = cand
                break
        else:
            raise DomainError(
                "no feasible point with strictly positive profits for every player was found; "
                "proportional fairness requires u_i > 0")

    def objective(z):
        u = total_profits(spec, z)
        return float(np.sum(np.log(u))) if np.all(u > POSITIVITY_FLOOR) else -np.inf

    def remainder(a, b):
        u = total_profits(spec, a)
        gain = float(np.sum(np.log1p(profit_changes(spec, a, b) / u)))
        return gain - float(np.sum(log_profit_gradient(spec, a) * (b - a)))

    x, fx, res, it, floor = _ascent(spec, start, objective,
                                    lambda z: log_profit_gradient(spec, z),
                                    cfg, admissible=positive, remainder=remainder)
    return CentralizedSolution(JointStrategy(x), fx, Kind.PROPORTIONAL_FAIR, res,
                               res <= floor, it)
