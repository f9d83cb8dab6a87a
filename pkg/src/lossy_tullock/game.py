"""Data model and first/second order evaluation of lossy Tullock games.

A game has ``N`` players competing over ``K`` stages.  At stage ``k`` player
``i`` allocates a non-negative vector ``x[i, k]`` of ``m`` categories; its
participation is ``w @ x[i, k]`` and it receives the share

    p[i, k] = W[k] * phi[i, k] / (Phi[k] + eps[k])

of the stage prize, while ``W[k] * eps[k] / (Phi[k] + eps[k])`` is forfeited.
Strategies are handled as ``(N, K, m)`` arrays; :class:`JointStrategy` is a
thin wrapper for callers that want named accessors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np
from scipy.optimize import linprog

from .errors import (
    InfeasibleError,
    InvalidSpecError,
    SpecificationError,
    UnboundedError,
)

# Slack below which a constraint set is considered to lack a Slater point.
SLATER_TOL = 1e-9


def _as_matrix(a, n_cols: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, n_cols))
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((0, n_cols))
    a = np.atleast_2d(a)
    if a.shape[1] != n_cols:
        raise SpecificationError(f"{name} has {a.shape[1]} columns, expected {n_cols}")
    return a


@dataclass(frozen=True, eq=False)
class PlayerConstraints:
    """Polytope ``{x >= 0 : ineq_matrix x <= ineq_rhs, eq_matrix x = eq_rhs}``.

    Non-negativity is implicit and never stored as rows.
    """

    dim: int
    ineq_matrix: np.ndarray = None
    ineq_rhs: np.ndarray = None
    eq_matrix: np.ndarray = None
    eq_rhs: np.ndarray = None

    def __post_init__(self):
        if self.dim < 1:
            raise SpecificationError("constraint dimension must be positive")
        a_in = _as_matrix(self.ineq_matrix, self.dim, "ineq_matrix")
        a_eq = _as_matrix(self.eq_matrix, self.dim, "eq_matrix")
        b_in = np.asarray(self.ineq_rhs if self.ineq_rhs is not None else [], dtype=float).ravel()
        b_eq = np.asarray(self.eq_rhs if self.eq_rhs is not None else [], dtype=float).ravel()
        if b_in.shape[0] != a_in.shape[0]:
            raise SpecificationError("ineq_rhs length does not match ineq_matrix rows")
        if b_eq.shape[0] != a_eq.shape[0]:
            raise SpecificationError("eq_rhs length does not match eq_matrix rows")
        for name, val in (("ineq_matrix", a_in), ("ineq_rhs", b_in),
                          ("eq_matrix", a_eq), ("eq_rhs", b_eq)):
            if not np.all(np.isfinite(val)):
                raise SpecificationError(f"{name} contains non-finite entries")
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def budget(cls, dim: int, total: float) -> "PlayerConstraints":
        """Scaled simplex ``{x >= 0, sum(x) = total}``."""
        return cls(dim, eq_matrix=np.ones((1, dim)), eq_rhs=[float(total)])

    @property
    def n_ineq(self) -> int:
        return self.ineq_matrix.shape[0]

    @property
    def n_eq(self) -> int:
        return self.eq_matrix.shape[0]

    @cached_property
    def simplex_budget(self) -> float | None:
        """Budget ``R`` when the set is exactly ``{x >= 0, 1'x = R}``, else None."""
        if self.n_ineq or self.n_eq != 1:
            return None
        row = self.eq_matrix[0]
        if row[0] <= 0 or not np.all(row == row[0]):
            return None
        budget = self.eq_rhs[0] / row[0]
        return budget if budget > 0 else None

    @cached_property
    def all_ineq(self) -> tuple[np.ndarray, np.ndarray]:
        """Explicit rows followed by ``-x <= 0`` for every coordinate."""
        a = np.vstack([self.ineq_matrix, -np.eye(self.dim)])
        b = np.concatenate([self.ineq_rhs, np.zeros(self.dim)])
        return a, b

    def row_name(self, j: int) -> str:
        if j < self.n_ineq:
            return f"ineq[{j}]"
        return f"nonneg[{j - self.n_ineq}]"

    def violation(self, x) -> tuple[float, str]:
        """Largest constraint violation of ``x`` and the offending row."""
        x = np.asarray(x, dtype=float)
        a, b = self.all_ineq
        worst, name = 0.0, ""
        if a.shape[0]:
            v = a @ x - b
            j = int(np.argmax(v))
            if v[j] > worst:
                worst, name = float(v[j]), self.row_name(j)
        if self.n_eq:
            v = np.abs(self.eq_matrix @ x - self.eq_rhs)
            j = int(np.argmax(v))
            if v[j] > worst:
                worst, name = float(v[j]), f"eq[{j}]"
        return worst, name

    def contains(self, x, tol: float = 1e-9) -> bool:
        return self.violation(x)[0] <= tol

    @cached_property
    def interior_point(self) -> np.ndarray:
        """Point maximising the smallest inequality slack (a Slater point).

        Solving this LP also proves the set is non-empty.
        """
        n = self.dim
        if self.simplex_budget is not None:
            return np.full(n, self.simplex_budget / n)
        a, b = self.all_ineq
        # variables (x, s): maximise s subject to a x + s <= b, s <= 1
        c = np.zeros(n + 1)
        c[-1] = -1.0
        a_ub = np.hstack([a, np.ones((a.shape[0], 1))])
        a_eq = np.hstack([self.eq_matrix, np.zeros((self.n_eq, 1))]) if self.n_eq else None
        res = linprog(c, A_ub=a_ub, b_ub=b,
                      A_eq=a_eq, b_eq=self.eq_rhs if self.n_eq else None,
                      bounds=[(None, None)] * n + [(None, 1.0)], method="highs")
        if res.status != 0:
            raise InfeasibleError(f"interior-point LP failed: {res.message}")
        if res.x[-1] < -1e-9:
            raise InfeasibleError("constraint set is empty")
        return np.asarray(res.x[:n])

    @cached_property
    def slater_slack(self) -> float:
        a, b = self.all_ineq
        return float(np.min(b - a @ self.interior_point))

    @cached_property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate lower and upper bounds of the polytope."""
        if self.simplex_budget is not None:
            return np.zeros(self.dim), np.full(self.dim, self.simplex_budget)
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for j in range(self.dim):
            for sign, out in ((1.0, lo), (-1.0, hi)):
                c = np.zeros(self.dim)
                c[j] = sign
                res = self._lp(c)
                out[j] = sign * res.fun
        return lo, hi

    def _lp(self, c):
        res = linprog(c, A_ub=self.ineq_matrix if self.n_ineq else None,
                      b_ub=self.ineq_rhs if self.n_ineq else None,
                      A_eq=self.eq_matrix if self.n_eq else None,
                      b_eq=self.eq_rhs if self.n_eq else None,
                      bounds=[(0, None)] * self.dim, method="highs")
        if res.status == 3:
            raise UnboundedError("constraint set is unbounded")
        if res.status == 2:
            raise InfeasibleError("constraint set is empty")
        if res.status != 0:
            raise InfeasibleError(f"bounding LP failed: {res.message}")
        return res

    def verify(self) -> "PlayerConstraints":
        """Check non-emptiness, boundedness and the Slater condition."""
        self.interior_point
        # x >= 0, so the set is bounded iff sum(x) is bounded above
        if self.simplex_budget is None:
            self._lp(-np.ones(self.dim))
        if self.slater_slack <= SLATER_TOL:
            raise InfeasibleError(
                f"no strictly feasible point (max min-slack {self.slater_slack:.3g})")
        return self


@dataclass(frozen=True)
class LinearCost:
    """Stage cost ``beta[k] * sum(x[i, k])``."""

    betas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "betas", np.asarray(self.betas, dtype=float).ravel())

    def stage_costs(self, xk: np.ndarray, k: int) -> np.ndarray:
        return self.betas[k] * xk.sum(axis=1)

    def own_gradient(self, xk: np.ndarray, k: int) -> np.ndarray:
        return np.full_like(xk, self.betas[k])

    def cross_gradient(self, xk: np.ndarray, k: int) -> np.ndarray:
        # d c_i / d x_j for j != i
        return np.zeros_like(xk)

    def own_hessian(self, k: int, m: int) -> np.ndarray:
        return np.zeros((m, m))

    def cross_hessian(self, k: int, m: int) -> np.ndarray:
        return np.zeros((m, m))


@dataclass(frozen=True)
class DynamicPriceCost:
    """Stage cost ``x[i, k] @ D (alpha[k] * sum_j x[j, k] + r[k])``.

    ``D = diag(priced)`` masks coordinates that carry no price (for instance
    the participation slot of a receding-horizon decision vector).
    """

    alphas: np.ndarray
    offsets: np.ndarray
    priced: np.ndarray = None

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float).ravel()
        offsets = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        if offsets.shape[0] != alphas.shape[0]:
            raise SpecificationError("offsets must have one row per stage")
        m = offsets.shape[1]
        priced = np.ones(m) if self.priced is None else np.asarray(self.priced, dtype=float).ravel()
        if priced.shape != (m,) or not np.all(np.isin(priced, (0.0, 1.0))):
            raise SpecificationError("priced must be a 0/1 vector of length m")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "offsets", offsets * priced)
        object.__setattr__(self, "priced", priced)

    def stage_costs(self, xk, k):
        price = self.priced * (self.alphas[k] * xk.sum(axis=0) + self.offsets[k])
        return xk @ price

    def own_gradient(self, xk, k):
        total = xk.sum(axis=0)
        return self.priced * (self.alphas[k] * (total + xk) + self.offsets[k])

    def cross_gradient(self, xk, k):
        return self.priced * self.alphas[k] * xk

    def own_hessian(self, k, m):
        return 2.0 * self.alphas[k] * np.diag(self.priced)

    def cross_hessian(self, k, m):
        return self.alphas[k] * np.diag(self.priced)


CostModel = Union[LinearCost, DynamicPriceCost]


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Complete description of a K-stage, N-player lossy Tullock game."""

    n_players: int
    n_stages: int
    n_categories: int
    stage_prizes: np.ndarray
    fictitious_participations: np.ndarray
    participation_weights: np.ndarray
    cost_model: CostModel
    constraints: tuple = field(default=())

    def __post_init__(self):
        n, k, m = self.n_players, self.n_stages, self.n_categories
        if min(n, k, m) < 1:
            raise SpecificationError("n_players, n_stages and n_categories must be positive")
        prizes = np.asarray(self.stage_prizes, dtype=float).ravel()
        eps = np.asarray(self.fictitious_participations, dtype=float).ravel()
        w = np.asarray(self.participation_weights, dtype=float)
        if prizes.shape != (k,) or eps.shape != (k,):
            raise SpecificationError("stage_prizes and fictitious_participations need length K")
        if w.ndim != 1:
            raise InvalidSpecError(
                "participation weights must be one vector shared by all players")
        if w.shape != (m,):
            raise SpecificationError(f"participation_weights must have length {m}")
        if np.any(eps <= 0):
            raise InvalidSpecError("fictitious participations must be strictly positive")
        if np.any(prizes < 0):
            raise InvalidSpecError("stage prizes must be non-negative")
        if np.any(w < 0) or not np.linalg.norm(w) > 0:
            raise InvalidSpecError("participation weights must be non-negative and non-zero")
        cost = self.cost_model
        if isinstance(cost, LinearCost):
            if cost.betas.shape != (k,):
                raise SpecificationError("LinearCost needs one beta per stage")
        elif isinstance(cost, DynamicPriceCost):
            if cost.alphas.shape != (k,) or cost.offsets.shape != (k, m):
                raise SpecificationError("DynamicPriceCost needs (K,) alphas and (K, m) offsets")
            if np.any(cost.alphas <= 0):
                raise InvalidSpecError("dynamic price scaling alpha must be positive")
        else:
            raise SpecificationError(f"unknown cost model {type(cost).__name__}")
        cons = tuple(self.constraints)
        if len(cons) != n:
            raise SpecificationError(f"expected {n} constraint sets, got {len(cons)}")
        for i, c in enumerate(cons):
            if c.dim != k * m:
                raise SpecificationError(f"constraints of player {i} have dim {c.dim}, expected {k * m}")
            try:
                c.verify()
            except (InfeasibleError, UnboundedError) as exc:
                raise type(exc)(f"player {i}: {exc}") from exc
        for name, val in (("stage_prizes", prizes), ("fictitious_participations", eps),
                          ("participation_weights", w)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "constraints", cons)

    @classmethod
    def unchecked(cls, **fields) -> "GameSpec":
        """Build a spec without validation.

        Only meant for probing the analysis routines with specs outside the
        supported class (negative price scaling, per-player weights, ...).
        """
        obj = object.__new__(cls)
        for name in ("stage_prizes", "fictitious_participations", "participation_weights"):
            fields[name] = np.asarray(fields[name], dtype=float)
        fields.setdefault("constraints", ())
        fields["constraints"] = tuple(fields["constraints"])
        for name, val in fields.items():
            object.__setattr__(obj, name, val)
        return obj

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.n_players, self.n_stages, self.n_categories

    @property
    def player_dim(self) -> int:
        return self.n_stages * self.n_categories

    @property
    def weights(self) -> np.ndarray:
        """Per-player weights as an ``(N, m)`` array."""
        w = self.participation_weights
        if w.ndim == 1:
            return np.broadcast_to(w, (self.n_players, self.n_categories))
        return w


@dataclass(frozen=True)
class JointStrategy:
    """Concatenated allocations of all players, stored as ``(N, K, m)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 3:
            raise SpecificationError("JointStrategy values must be (N, K, m)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_players(cls, per_player: Sequence, n_stages: int, n_categories: int):
        return cls(np.stack([np.asarray(p, dtype=float).reshape(n_stages, n_categories)
                             for p in per_player]))

    @property
    def per_player(self) -> list[np.ndarray]:
        n = self.values.shape[0]
        return [self.values[i].ravel() for i in range(n)]

    def player(self, i: int) -> np.ndarray:
        return self.values[i].ravel()

    def at(self, i: int, k: int, j: int = 0) -> float:
        return float(self.values[i, k, j])

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()


StrategyLike = Union[JointStrategy, np.ndarray, Sequence]


def as_array(spec: GameSpec, x: StrategyLike) -> np.ndarray:
    """Coerce ``x`` to a float ``(N, K, m)`` array consistent with ``spec``."""
    if isinstance(x, JointStrategy):
        arr = x.values
    else:
        arr = np.asarray(x, dtype=float)
    if arr.size != spec.n_players * spec.player_dim:
        raise SpecificationError(
            f"strategy has {arr.size} entries, expected {spec.n_players * spec.player_dim}")
    return arr.reshape(spec.shape)


@dataclass(frozen=True)
class StageEvaluation:
    participations: np.ndarray
    total_participation: float
    payoffs: np.ndarray
    loss: float
    costs: np.ndarray


def _check_eps(spec: GameSpec, k: int) -> float:
    if not 0 <= k < spec.n_stages:
        raise SpecificationError(f"stage index {k} out of range")
    eps = spec.fictitious_participations[k]
    if eps <= 0:
        raise InvalidSpecError(f"fictitious participation at stage {k} must be positive")
    return eps


def evaluate_stage(spec: GameSpec, x: StrategyLike, k: int) -> StageEvaluation:
    arr = as_array(spec, x)
    eps = _check_eps(spec, k)
    xk = arr[:, k, :]
    phi = np.einsum("ij,ij->i", xk, spec.weights)
    total = float(phi.sum())
    prize = spec.stage_prizes[k]
    denom = total + eps
    return StageEvaluation(
        participations=phi,
        total_participation=total,
        payoffs=prize * phi / denom,
        # computed directly rather than as prize - sum(payoffs)
        loss=prize * eps / denom,
        costs=spec.cost_model.stage_costs(xk, k),
    )


def stage_profits(spec: GameSpec, x: StrategyLike) -> np.ndarray:
    """``(N, K)`` array of ``p[i, k] - c[i, k]``."""
    arr = as_array(spec, x)
    out = np.empty((spec.n_players, spec.n_stages))
    for k in range(spec.n_stages):
        ev = evaluate_stage(spec, arr, k)
        out[:, k] = ev.payoffs - ev.costs
    return out


def stage_losses(spec: GameSpec, x: StrategyLike) -> np.ndarray:
    arr = as_array(spec, x)
    return np.array([evaluate_stage(spec, arr, k).loss for k in range(spec.n_stages)])


def total_profits(spec: GameSpec, x: StrategyLike) -> np.ndarray:
    return stage_profits(spec, x).sum(axis=1)


def total_profit(spec: GameSpec, x: StrategyLike, i: int) -> float:
    return float(total_profits(spec, x)[i])


def _stage_terms(spec, arr):
    """Participations ``(N, K)``, denominators ``(K,)`` and prizes."""
    phi = np.einsum("ikj,ij->ik", arr, spec.weights)
    denom = phi.sum(axis=0) + spec.fictitious_participations
    return phi, denom, spec.stage_prizes


def all_profit_gradients(spec: GameSpec, x: StrategyLike) -> np.ndarray:
    """Own-strategy gradients of every player, shape ``(N, K, m)``."""
    arr = as_array(spec, x)
    phi, denom, prizes = _stage_terms(spec, arr)
    # f1[i, k] = W_k (Phi_k - phi_ik + eps_k) / (Phi_k + eps_k)^2
    f1 = prizes * (denom - phi) / denom ** 2
    grad = f1[:, :, None] * spec.weights[:, None, :]
    for k in range(spec.n_stages):
        grad[:, k, :] -= spec.cost_model.own_gradient(arr[:, k, :], k)
    return grad


def profit_gradient(spec: GameSpec, x: StrategyLike, i: int) -> np.ndarray:
    return all_profit_gradients(spec, x)[i].ravel()


def pseudo_gradient(spec: GameSpec, x: StrategyLike) -> np.ndarray:
    return -all_profit_gradients(spec, x).ravel()


def profit_jacobian(spec: GameSpec, x: StrategyLike) -> np.ndarray:
    """``J[i, j] = d u_i / d x_j`` with shape ``(N, N, K, m)``."""
    arr = as_array(spec, x)
    n = spec.n_players
    phi, denom, prizes = _stage_terms(spec, arr)
    w = spec.weights
    # d p_i / d phi_j for j != i is -W phi_i / S^2
    cross = -prizes * phi / denom ** 2
    jac = cross[:, None, :, None] * w[None, :, None, :]
    own = all_profit_gradients(spec, arr)
    for k in range(spec.n_stages):
        cg = spec.cost_model.cross_gradient(arr[:, k, :], k)
        jac[:, :, k, :] -= cg[:, None, :]
    jac[np.arange(n), np.arange(n)] = own
    return jac


def welfare_gradient(spec: GameSpec, x: StrategyLike) -> np.ndarray:
    """Gradient of ``-sum(loss) - sum(costs)`` assembled from the loss/cost terms."""
    arr = as_array(spec, x)
    _, denom, prizes = _stage_terms(spec, arr)
    eps = spec.fictitious_participations
    dloss = -prizes * eps / denom ** 2
    grad = -dloss[None, :, None] * spec.weights[:, None, :]
    cost = spec.cost_model
    for k in range(spec.n_stages):
        xk = arr[:, k, :]
        if isinstance(cost, LinearCost):
            grad[:, k, :] -= cost.betas[k]
        else:
            total = xk.sum(axis=0)
            grad[:, k, :] -= cost.priced * (2.0 * cost.alphas[k] * total + cost.offsets[k])
    return grad


def profit_hessian(spec: GameSpec, x: StrategyLike, i: int) -> np.ndarray:
    """Full Hessian of ``u_i`` with respect to the joint strategy.

    Returned as a dense ``(N*K*m, N*K*m)`` matrix with player-major,
    stage-minor ordering (the layout of :attr:`JointStrategy.flat`).
    """
    arr = as_array(spec, x)
    n, K, m = spec.shape
    phi, denom, prizes = _stage_terms(spec, arr)
    w = spec.weights
    cost = spec.cost_model
    h = np.zeros((n, K, m, n, K, m))
    for k in range(K):
        s, W, p = denom[k], prizes[k], phi[i, k]
        own = -2.0 * W * (s - p) / s ** 3          # d2 p_i / d phi_i^2
        mixed = -W * (s - 2.0 * p) / s ** 3         # d2 p_i / d phi_i d phi_j
        others = 2.0 * W * p / s ** 3               # d2 p_i / d phi_j d phi_l
        for a in range(n):
            for b in range(n):
                if a == i and b == i:
                    coef = own
                elif a == i or b == i:
                    coef = mixed
                else:
                    coef = others
                h[a, k, :, b, k, :] = coef * np.outer(w[a], w[b])
        h[i, k, :, i, k, :] -= cost.own_hessian(k, m)
        for j in range(n):
            if j != i:
                h[i, k, :, j, k, :] -= cost.cross_hessian(k, m)
                h[j, k, :, i, k, :] -= cost.cross_hessian(k, m)
    size = n * K * m
    return h.reshape(size, size)


def aggregate_cost_loss_hessian(spec: GameSpec, x: StrategyLike) -> np.ndarray:
    """Hessian of ``C(x) + sum_k Psi_k`` built from the aggregate terms only."""
    arr = as_array(spec, x)
    n, K, m = spec.shape
    _, denom, prizes = _stage_terms(spec, arr)
    eps = spec.fictitious_participations
    w = spec.weights
    cost = spec.cost_model
    h = np.zeros((n, K, m, n, K, m))
    for k in range(K):
        curv = 2.0 * prizes[k] * eps[k] / denom[k] ** 3
        if isinstance(cost, DynamicPriceCost):
            # sum_i c_i = alpha |D xbar|^2 + r' D xbar  ->  2 alpha D per block pair
            cblock = 2.0 * cost.alphas[k] * np.diag(cost.priced)
        else:
            cblock = np.zeros((m, m))
        for a in range(n):
            for b in range(n):
                h[a, k, :, b, k, :] = curv * np.outer(w[a], w[b]) + cblock
    size = n * K * m
    return h.reshape(size, size)
