"""Euclidean projection onto per-player feasible sets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, NumericalError, PreconditionError
from .game import PlayerConstraints

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class ProjectionProblem:
    target: np.ndarray
    constraints: PlayerConstraints


def project_simplex(target, budget):
    """Project onto ``{y >= 0, sum(y) = budget}`` by sorting and thresholding.

    ``target`` may be a single vector or a 2-d batch (one row per problem),
    in which case ``budget`` is a scalar or one budget per row.
    """
    v = np.asarray(target, dtype=float)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    z = np.broadcast_to(np.asarray(budget, dtype=float), (v.shape[0],))
    if np.any(z <= 0):
        raise PreconditionError("simplex budget must be positive")
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - z[:, None]
    ind = np.arange(1, v.shape[1] + 1)
    rho = np.count_nonzero(u - css / ind > 0, axis=1)
    theta = css[np.arange(v.shape[0]), rho - 1] / rho
    out = np.maximum(v - theta[:, None], 0.0)
    return out[0] if single else out


def _independent_rows(rows: np.ndarray, candidates, base: np.ndarray) -> list:
    """Greedy lowest-index subset of ``candidates`` independent of ``base``.

    One unpivoted QR of ``[base; rows[candidates]]'``: a column adds rank
    exactly when its diagonal entry of R is non-negligible.
    """
    candidates = list(candidates)
    if not candidates:
        return []
    m = np.vstack([base, rows[candidates]]).T
    r = np.linalg.qr(m, mode="r")
    diag = np.abs(np.diag(r)) if r.shape[0] >= r.shape[1] else np.abs(
        np.concatenate([np.diag(r), np.zeros(r.shape[1] - r.shape[0])]))
    tol = 1e-10 * max(1.0, float(np.max(np.abs(m))))
    nb = base.shape[0]
    return [j for j, v in zip(candidates, diag[nb:]) if v > tol]


def project_active_set(target, constraints: PlayerConstraints, start=None,
                       working=None, max_iter: int = 500):
    """Primal active-set solve of ``min ||y - target||^2`` over the polytope.

    ``start`` must be feasible (defaults to the Slater point of the set) and
    ``working`` optionally seeds the working set with inequality row indices
    (rows of ``constraints.all_ineq``).  Returns ``(y, working_set)`` so the
    caller can warm start the next projection.
    """
    t = np.asarray(target, dtype=float)
    a_in, b_in = constraints.all_ineq
    a_eq = constraints.eq_matrix
    x = constraints.interior_point.copy() if start is None else np.array(start, dtype=float)
    scale = max(1.0, float(np.max(np.abs(t))), float(np.max(np.abs(x))))
    viol, row = constraints.violation(x)
    if viol > 1e-7 * scale:
        raise PreconditionError(f"active-set start point violates {row} by {viol:.3g}")

    if working is None:
        slack = b_in - a_in @ x
        working = np.flatnonzero(slack <= 1e-12 * scale)
    work = _independent_rows(a_in, sorted(set(int(j) for j in working)), a_eq)

    for _ in range(max_iter):
        g = x - t
        aw = np.vstack([a_eq, a_in[work]]) if work else a_eq
        if aw.shape[0]:
            mult, *_ = np.linalg.lstsq(aw.T, -g, rcond=None)
            p = -g - aw.T @ mult
        else:
            mult = np.zeros(0)
            p = -g
        if np.linalg.norm(p) <= 1e-13 * scale:
            lam = mult[a_eq.shape[0]:]
            if lam.size == 0 or lam.min() >= -1e-12 * scale:
                # active bounds hold with equality; drop the rounding residue
                bounds = [j - constraints.n_ineq for j in work if j >= constraints.n_ineq]
                x[bounds] = 0.0
                return x, work
            # drop the most negative multiplier; ties go to the lowest row index
            drop = int(np.argmin(lam))
            work = work[:drop] + work[drop + 1:]
            continue
        ap = a_in @ p
        slack = np.maximum(b_in - a_in @ x, 0.0)
        alpha, block = 1.0, -1
        in_work = np.zeros(a_in.shape[0], dtype=bool)
        in_work[work] = True
        for j in np.flatnonzero((ap > 1e-14 * scale) & ~in_work):
            step = slack[j] / ap[j]
            if step < alpha:
                alpha, block = step, int(j)
        x = x + alpha * p
        if block >= 0:
            work = sorted(work + [block])
    raise NumericalError("active-set projection did not converge",
                         residual=float(np.linalg.norm(p)))


def project(p: ProjectionProblem | np.ndarray, constraints: PlayerConstraints | None = None,
            **kwargs) -> np.ndarray:
    """Euclidean projection of a target onto a player's feasible set.

    Accepts either a :class:`ProjectionProblem` or ``(target, constraints)``.
    Budget simplices take the sort-and-threshold fast path.
    """
    if isinstance(p, ProjectionProblem):
        target, constraints = p.target, p.constraints
    else:
        target = p
    target = np.asarray(target, dtype=float)
    if target.shape != (constraints.dim,):
        raise PreconditionError(f"target has shape {target.shape}, expected ({constraints.dim},)")
    budget = constraints.simplex_budget
    if budget is not None and not kwargs.get("generic", False):
        return project_simplex(target, budget)
    kwargs.pop("generic", None)
    y, _ = project_active_set(target, constraints, **kwargs)
    viol, row = constraints.violation(y)
    if viol > FEAS_TOL * max(1.0, float(np.max(np.abs(y)))):
        raise InfeasibleError(f"projection violates {row} by {viol:.3g}")
    return y


class Projector:
    """Stateful per-player projector that warm starts the active set.

    Used inside iterative solvers where consecutive targets are close.
    """

    def __init__(self, constraints: PlayerConstraints, generic: bool = False):
        self.constraints = constraints
        self.budget = None if generic else constraints.simplex_budget
        self._x = None
        self._work = None
        self.calls = 0

    def __call__(self, target) -> np.ndarray:
        self.calls += 1
        if self.budget is not None:
            return project_simplex(target, self.budget)
        y, work = project_active_set(target, self.constraints, start=self._x, working=self._work)
        self._x, self._work = y, work
        return y


def project_players(targets: np.ndarray, projectors: list) -> np.ndarray:
    """Project each row of ``targets`` (one per player) with its projector."""
    budgets = [pr.budget for pr in projectors]
    if all(b is not None for b in budgets):
        for pr in projectors:
            pr.calls += 1
        return project_simplex(targets, np.array(budgets))
    return np.stack([pr(t) for pr, t in zip(projectors, targets)])
