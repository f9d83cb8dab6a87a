"""Receding-horizon games with linear state dynamics.

A player's state evolves as ``y[k+1] = A y[k] + B u[k]`` under stage
constraints ``G y[k] + H u[k] <= d[k]``.  Its market participation is the
affine function ``p_y' y[k] + p_u' u[k]``, which is carried as an explicit
first coordinate of the stage allocation ``x[k] = [phi[k], u[k]]`` and tied
to the inputs by equality rows.  The states are eliminated, so the game over
a horizon ``T`` is a lossy Tullock game with polytopic strategy sets and
weights ``w = [1, 0, ..., 0]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import GameError, InfeasibleError, NumericalError, SpecificationError, UnboundedError
from .game import DynamicPriceCost, GameSpec, PlayerConstraints
from .solver import SolveReport, SolverConfig, solve_ne

# Price curvature makes unit steps overshoot; halve the initial step and give
# up on a diverging step size sooner than the general default.
RHG_SOLVER_CONFIG = SolverConfig(gamma_bar=0.5, t_out=5000)


@dataclass(frozen=True, eq=False)
class RhgPlayerSpec:
    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    H: np.ndarray
    d: np.ndarray
    y0: np.ndarray
    p_y: np.ndarray
    p_u: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_2d(np.asarray(self.B, dtype=float))
        my, mu = b.shape
        if a.shape != (my, my):
            raise SpecificationError(f"A must be {my}x{my}")
        g = np.asarray(self.G, dtype=float).reshape(-1, my)
        h = np.asarray(self.H, dtype=float).reshape(-1, mu)
        if g.shape[0] != h.shape[0]:
            raise SpecificationError("G and H need the same number of rows")
        d = np.asarray(self.d, dtype=float)
        d = d.reshape(-1, g.shape[0]) if d.ndim == 2 else d.reshape(1, g.shape[0])
        y0 = np.asarray(self.y0, dtype=float).ravel()
        p_y = np.asarray(self.p_y, dtype=float).ravel()
        p_u = np.asarray(self.p_u, dtype=float).ravel()
        if y0.shape != (my,) or p_y.shape != (my,) or p_u.shape != (mu,):
            raise SpecificationError("y0, p_y and p_u have inconsistent lengths")
        for name, val in (("A", a), ("B", b), ("G", g), ("H", h), ("d", d),
                          ("y0", y0), ("p_y", p_y), ("p_u", p_u)):
            object.__setattr__(self, name, val)

    @property
    def m_y(self) -> int:
        return self.A.shape[0]

    @property
    def m_u(self) -> int:
        return self.B.shape[1]

    @property
    def m_d(self) -> int:
        return self.G.shape[0]

    def d_at(self, k: int) -> np.ndarray:
        """Constraint right-hand side at absolute step ``k`` (last row repeats)."""
        return self.d[min(k, self.d.shape[0] - 1)]

    def with_state(self, y0) -> "RhgPlayerSpec":
        return RhgPlayerSpec(self.A, self.B, self.G, self.H, self.d, y0, self.p_y, self.p_u)


@dataclass(frozen=True, eq=False)
class RhgMarket:
    """Per-step market parameters: prizes, fictitious participations, prices."""

    prizes: np.ndarray
    epsilons: np.ndarray
    alphas: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.prizes, dtype=float).ravel()
        n = w.size
        e = np.broadcast_to(np.asarray(self.epsilons, dtype=float), (n,)).copy()
        a = np.broadcast_to(np.asarray(self.alphas, dtype=float), (n,)).copy()
        r = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        if r.shape[0] == 1 and n > 1:
            r = np.repeat(r, n, axis=0)
        if r.shape[0] != n:
            raise SpecificationError("offsets need one row per step")
        for name, val in (("prizes", w), ("epsilons", e), ("alphas", a), ("offsets", r)):
            object.__setattr__(self, name, val)

    @property
    def n_steps(self) -> int:
        return self.prizes.size

    def window(self, start: int, length: int) -> "RhgMarket":
        if start + length > self.n_steps:
            raise SpecificationError(
                f"market profile has {self.n_steps} steps, window needs {start + length}")
        sl = slice(start, start + length)
        return RhgMarket(self.prizes[sl], self.epsilons[sl], self.alphas[sl], self.offsets[sl])


def _powers(a: np.ndarray, n: int) -> list:
    out = [np.eye(a.shape[0])]
    for _ in range(n):
        out.append(a @ out[-1])
    return out


def lifting_matrices(p: RhgPlayerSpec, T: int, t0: int = 0):
    """Equality and inequality rows of the lifted strategy set.

    Returns ``(a_eq, b_eq, a_in, b_in)`` over ``x = col(phi_k, u_k)``.  Row
    ``k`` of the equalities reads ``p_y' Sigma_k U + p_u' u_k - phi_k =
    -p_y' A^k y0`` and the inequality block ``k`` reads ``G Sigma_k U + H u_k
    <= d_k - G A^k y0``, where ``Sigma_k U = sum_{l<k} A^(k-l-1) B u_l``.
    """
    if T < 1:
        raise SpecificationError("horizon must be at least 1")
    my, mu, md = p.m_y, p.m_u, p.m_d
    m = mu + 1
    pw = _powers(p.A, T)
    a_eq = np.zeros((T, T * m))
    b_eq = np.zeros(T)
    a_in = np.zeros((T * md, T * m))
    b_in = np.zeros(T * md)
    for k in range(T):
        # state response of y_k to u_l for l < k
        for l in range(k):
            resp = pw[k - l - 1] @ p.B
            a_eq[k, l * m + 1:(l + 1) * m] = p.p_y @ resp
            a_in[k * md:(k + 1) * md, l * m + 1:(l + 1) * m] = p.G @ resp
        a_eq[k, k * m] = -1.0
        a_eq[k, k * m + 1:(k + 1) * m] = p.p_u
        free = pw[k] @ p.y0
        b_eq[k] = -p.p_y @ free
        a_in[k * md:(k + 1) * md, k * m + 1:(k + 1) * m] = p.H
        b_in[k * md:(k + 1) * md] = p.d_at(t0 + k) - p.G @ free
    return a_eq, b_eq, a_in, b_in


def lift_constraints(p: RhgPlayerSpec, T: int, t0: int = 0) -> PlayerConstraints:
    """Polytope of lifted strategies over the horizon, checked for validity.

    On failure the shortest horizon prefix that is already empty or
    unbounded is reported.
    """
    a_eq, b_eq, a_in, b_in = lifting_matrices(p, T, t0)
    cons = PlayerConstraints(T * (p.m_u + 1), a_in, b_in, a_eq, b_eq)
    try:
        return cons.verify()
    except (InfeasibleError, UnboundedError) as exc:
        for k in range(1, T + 1):
            try:
                a, b, c, e = lifting_matrices(p, k, t0)
                PlayerConstraints(k * (p.m_u + 1), c, e, a, b).verify()
            except (InfeasibleError, UnboundedError):
                raise type(exc)(f"lifted constraints fail at step {k - 1}: {exc}") from exc
        raise


def simulate(p: RhgPlayerSpec, inputs: np.ndarray, y0=None) -> np.ndarray:
    """States ``y_0 .. y_T`` under the given ``(T, m_u)`` input sequence."""
    y = np.asarray(p.y0 if y0 is None else y0, dtype=float)
    out = [y]
    for u in np.atleast_2d(inputs):
        y = p.A @ y + p.B @ u
        out.append(y)
    return np.array(out)


def decode(p: RhgPlayerSpec, x, T: int):
    """Split a lifted strategy into participation slots, inputs and states."""
    arr = np.asarray(x, dtype=float).reshape(T, p.m_u + 1)
    phi, u = arr[:, 0], arr[:, 1:]
    return phi, u, simulate(p, u)


def encode(p: RhgPlayerSpec, inputs: np.ndarray) -> np.ndarray:
    """Lifted strategy for an input sequence (participation from the dynamics)."""
    u = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = simulate(p, u)
    phi = y[:-1] @ p.p_y + u @ p.p_u
    return np.column_stack([phi, u]).ravel()


def build_game(players: Sequence[RhgPlayerSpec], market: RhgMarket, T: int,
               t0: int = 0) -> GameSpec:
    """Lossy Tullock game over steps ``t0 .. t0+T-1`` from the players' current states."""
    win = market.window(t0, T)
    mu = players[0].m_u
    if any(p.m_u != mu for p in players):
        raise SpecificationError("all players need the same input dimension")
    m = mu + 1
    w = np.zeros(m)
    w[0] = 1.0
    priced = np.ones(m)
    priced[0] = 0.0
    offsets = np.column_stack([np.zeros(T), win.offsets])
    return GameSpec(
        n_players=len(players), n_stages=T, n_categories=m,
        stage_prizes=win.prizes, fictitious_participations=win.epsilons,
        participation_weights=w,
        cost_model=DynamicPriceCost(win.alphas, offsets, priced),
        constraints=[lift_constraints(p, T, t0) for p in players])


def solve_open_loop(players: Sequence[RhgPlayerSpec], market: RhgMarket, T: int,
                    config: Optional[SolverConfig] = None, t0: int = 0) -> SolveReport:
    """Equilibrium input plan over one horizon."""
    return solve_ne(build_game(players, market, T, t0), config or RHG_SOLVER_CONFIG)


@dataclass
class RhgTrace:
    """Realized closed-loop rollout.

    Arrays are indexed ``[player, step, ...]``; ``states`` has one more step
    than ``inputs`` (the terminal state).
    """

    horizon: int
    total_steps: int
    states: np.ndarray
    inputs: np.ndarray
    participations: np.ndarray
    payoffs: np.ndarray
    costs: np.ndarray
    losses: np.ndarray
    reports: list = field(default_factory=list)
    completed_steps: int = 0

    @property
    def profits(self) -> np.ndarray:
        """Total realized profit per player."""
        return (self.payoffs - self.costs).sum(axis=1)

    @property
    def lost_profit(self) -> float:
        return float(self.losses.sum())


class RecedingHorizonAbort(NumericalError):
    """A per-step solve failed; ``trace`` holds the steps completed so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def _realize(trace, players, market, k, inputs_k):
    """Apply step-``k`` inputs with realized market parameters."""
    n = len(players)
    y = trace.states[:, k]
    phi = np.array([p.p_y @ y[i] + p.p_u @ inputs_k[i] for i, p in enumerate(players)])
    total = phi.sum()
    s = total + market.epsilons[k]
    trace.participations[:, k] = phi
    trace.payoffs[:, k] = market.prizes[k] * phi / s
    trace.losses[k] = market.prizes[k] * market.epsilons[k] / s
    price = market.alphas[k] * inputs_k.sum(axis=0) + market.offsets[k]
    trace.costs[:, k] = inputs_k @ price
    for i, p in enumerate(players):
        trace.inputs[i, k] = inputs_k[i]
        trace.states[i, k + 1] = p.A @ y[i] + p.B @ inputs_k[i]
    trace.completed_steps = k + 1


def run_receding_horizon(players: Sequence[RhgPlayerSpec], market: RhgMarket, T: int,
                         config: Optional[SolverConfig] = None,
                         realized: Optional[RhgMarket] = None,
                         total_steps: Optional[int] = None) -> RhgTrace:
    """Closed-loop rollout: solve, apply the first input, advance, repeat.

    ``market`` is the forecast used for planning and ``realized`` (default:
    the same profile) the one used to score each step.  The last solve's
    whole plan is applied open loop.
    """
    realized = realized or market
    t_total = market.n_steps if total_steps is None else total_steps
    if not 1 <= T <= t_total:
        raise SpecificationError(f"horizon {T} must lie in [1, {t_total}]")
    n = len(players)
    my, mu = players[0].m_y, players[0].m_u
    trace = RhgTrace(
        horizon=T, total_steps=t_total,
        states=np.zeros((n, t_total + 1, my)), inputs=np.zeros((n, t_total, mu)),
        participations=np.zeros((n, t_total)), payoffs=np.zeros((n, t_total)),
        costs=np.zeros((n, t_total)), losses=np.zeros(t_total))
    trace.states[:, 0] = [p.y0 for p in players]
    n_solves = t_total - T + 1
    for step in range(n_solves):
        current = [p.with_state(trace.states[i, step]) for i, p in enumerate(players)]
        try:
            rep = solve_open_loop(current, market, T, config, t0=step)
        except GameError as exc:
            raise RecedingHorizonAbort(f"solve at step {step} failed: {exc}", trace) from exc
        trace.reports.append(rep)
        if not rep.converged:
            raise RecedingHorizonAbort(
                f"solve at step {step} did not converge "
                f"(residual {rep.certificate.max_residual:.3g})", trace)
        plan = rep.strategy.values[:, :, 1:]
        last = step == n_solves - 1
        for j in range(T if last else 1):
            _realize(trace, players, realized, step + j, plan[:, j])
    return trace


def battery_matrices(discharge: float = 0.5):
    """Three-level state-of-charge model ``[red, yellow, green]``.

    Vehicles left in service drop one level with probability ``discharge``
    (red ones stay red); vehicles sent to charge come back green.  Both
    matrices have unit column sums, so the fleet size ``1'y`` is conserved.
    """
    r = float(discharge)
    a = np.array([[1.0, r, 0.0],
                  [0.0, 1.0 - r, r],
                  [0.0, 0.0, 1.0 - r]])
    green = np.zeros((3, 3))
    green[2, :] = 1.0
    return a, green - a


def battery_player(fleet: float, shares=(0.05, 0.10, 0.85), discharge: float = 0.5,
                   charge_cap: float = 0.95, n_steps: int = 1) -> RhgPlayerSpec:
    """Fleet that can charge at most ``charge_cap`` of each level per step.

    Participation counts vehicles in service: yellow and green ones not
    sent to charge.  A cap below one keeps every level strictly populated,
    so the lifted strategy set stays full-dimensional along a rollout.
    """
    if not 0 < charge_cap <= 1:
        raise SpecificationError("charge_cap must lie in (0, 1]")
    a, b = battery_matrices(discharge)
    shares = np.asarray(shares, dtype=float)
    return RhgPlayerSpec(
        A=a, B=b, G=-charge_cap * np.eye(3), H=np.eye(3), d=np.zeros((n_steps, 3)),
        y0=fleet * shares, p_y=np.array([0.0, 1.0, 1.0]), p_u=np.array([0.0, -1.0, -1.0]))
