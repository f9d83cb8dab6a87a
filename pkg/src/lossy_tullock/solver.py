"""Projected pseudo-gradient equilibrium seeking and its stationarity certificate."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .analysis import check_prop3_class
from .errors import PreconditionError
from .game import GameSpec, JointStrategy, all_profit_gradients, as_array
from .projection import Projector, project_players


@dataclass(frozen=True)
class SolverConfig:
    gamma_bar: float = 1.0
    eta: float = 0.5
    tol: float = 1e-5
    t_out: int = 20000
    max_outer: int = 40
    active_tol: float = 1e-7
    warm_start: bool = False

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.gamma_bar <= 0 or self.tol <= 0 or self.active_tol <= 0:
            raise ValueError("gamma_bar, tol and active_tol must be positive")
        if self.t_out < 1 or self.max_outer < 1:
            raise ValueError("t_out and max_outer must be at least 1")


@dataclass(frozen=True)
class PlayerCertificate:
    """KKT multipliers of one player's best-response problem.

    ``lam`` covers the explicit inequality rows, ``mu`` the implicit
    ``-x <= 0`` rows; both are zero on inactive rows.
    """

    lam: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    delta_star: float
    active: tuple


@dataclass(frozen=True)
class OptimalityCertificate:
    players: tuple

    @property
    def residuals(self) -> np.ndarray:
        return np.array([p.delta_star for p in self.players])

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max())


@dataclass(frozen=True)
class SolveReport:
    strategy: JointStrategy
    certificate: OptimalityCertificate
    outer_iterations: int
    inner_iterations_total: int
    final_step: float
    converged: bool
    wall_time: float
    steps: tuple = ()
    projection_calls: int = 0
    gradient_calls: int = 0


def _player_certificate(cons, x, grad, active_tol):
    a_in, b_in = cons.all_ineq
    slack = b_in - a_in @ x
    tol = active_tol * np.maximum(1.0, np.abs(b_in))
    active = np.flatnonzero(slack <= tol)
    c = a_in[active].T                      # (d, |A|)
    e = cons.eq_matrix.T                    # (d, m_eq)
    if e.shape[1]:
        u, s, _ = np.linalg.svd(e, full_matrices=False)
        u = u[:, s > s.max() * 1e-12]
        proj = np.eye(len(x)) - u @ u.T
    else:
        proj = np.eye(len(x))
    if active.size:
        lam_act, _ = nnls(proj @ c, proj @ grad, maxiter=50 * max(1, active.size))
    else:
        lam_act = np.zeros(0)
    rest = grad - c @ lam_act
    if e.shape[1]:
        nu, *_ = np.linalg.lstsq(e, rest, rcond=None)
    else:
        nu = np.zeros(0)
    resid = c @ lam_act + e @ nu - grad
    full = np.zeros(a_in.shape[0])
    full[active] = lam_act
    return PlayerCertificate(
        lam=full[:cons.n_ineq], mu=full[cons.n_ineq:], nu=nu,
        delta_star=float(resid @ resid), active=tuple(int(j) for j in active))


def optimality_test(spec: GameSpec, x, active_tol: float = 1e-7,
                    players=None) -> OptimalityCertificate:
    """Smallest stationarity residual over admissible KKT multipliers.

    For each player solves ``min ||-grad u_i + C' lam + E' nu||^2`` with
    ``lam >= 0`` on the active inequality rows (zero elsewhere) and ``nu``
    free.  ``nu`` is eliminated by projecting onto the orthogonal complement
    of the equality rows, which leaves a non-negative least-squares problem.
    """
    arr = as_array(spec, x)
    grads = all_profit_gradients(spec, arr)
    idx = range(spec.n_players) if players is None else players
    out = []
    for i in idx:
        cons = spec.constraints[i]
        xi = arr[i].ravel()
        a_in, b_in = cons.all_ineq
        viol = a_in @ xi - b_in
        tol_in = active_tol * np.maximum(1.0, np.abs(b_in))
        bad = np.flatnonzero(viol > tol_in)
        if bad.size:
            j = int(bad[np.argmax(viol[bad] - tol_in[bad])])
            raise PreconditionError(
                f"player {i} violates {cons.row_name(j)} by {viol[j]:.3g}")
        if cons.n_eq:
            ev = np.abs(cons.eq_matrix @ xi - cons.eq_rhs)
            tol_eq = active_tol * np.maximum(1.0, np.abs(cons.eq_rhs))
            if np.any(ev > tol_eq):
                j = int(np.argmax(ev - tol_eq))
                raise PreconditionError(f"player {i} violates eq[{j}] by {ev[j]:.3g}")
        out.append(_player_certificate(cons, xi, grads[i].ravel(), active_tol))
    return OptimalityCertificate(tuple(out))


def default_start(spec: GameSpec, seed: Optional[int] = None) -> np.ndarray:
    """Projection of zeros onto each set, or of a seeded random draw."""
    rng = None if seed is None else np.random.default_rng(seed)
    targets = np.zeros((spec.n_players, spec.player_dim))
    if rng is not None:
        for i, cons in enumerate(spec.constraints):
            lo, hi = cons.box
            targets[i] = rng.uniform(lo, hi)
    projectors = [Projector(c) for c in spec.constraints]
    return project_players(targets, projectors).reshape(spec.shape)


def solve_ne(spec: GameSpec, config: SolverConfig | None = None, x0=None,
             best_effort: bool = False, seed: Optional[int] = None) -> SolveReport:
    """Two-loop projected pseudo-gradient scheme.

    The outer loop shrinks the step ``gamma = eta**l * gamma_bar``; each
    inner loop restarts from ``x0`` (or from the last iterate when
    ``config.warm_start``) and applies the synchronous update
    ``x_i <- proj_i(x_i + gamma * grad_i u_i)`` until successive iterates
    differ by less than ``tol`` in the max norm or ``t_out`` steps pass.
    Stops once every player's certificate residual is below ``tol``.
    """
    cfg = config or SolverConfig()
    if not best_effort and not check_prop3_class(spec):
        raise PreconditionError(
            "spec is outside the class with a guaranteed unique equilibrium; "
            "pass best_effort=True to run anyway")
    start_time = time.perf_counter()
    projectors = [Projector(c) for c in spec.constraints]
    if x0 is None:
        start = default_start(spec, seed)
    else:
        start = as_array(spec, x0).copy()
    n, d = spec.n_players, spec.player_dim

    x = start.copy()
    cert = optimality_test(spec, x, cfg.active_tol)
    steps = []
    inner_total = 0
    grad_calls = 1
    outer = 0
    gamma = cfg.gamma_bar
    best_x, best_cert = x.copy(), cert
    while cert.max_residual >= cfg.tol and outer < cfg.max_outer:
        gamma = cfg.gamma_bar * cfg.eta ** outer
        steps.append(gamma)
        if not cfg.warm_start:
            x = start.copy()
        for _ in range(cfg.t_out):
            grad = all_profit_gradients(spec, x)
            grad_calls += 1
            target = (x + gamma * grad).reshape(n, d)
            new = project_players(target, projectors).reshape(spec.shape)
            inner_total += 1
            diff = np.max(np.abs(new - x))
            x = new
            if not np.isfinite(diff):
                break
            if diff < cfg.tol:
                break
        outer += 1
        if not np.all(np.isfinite(x)):
            x = best_x.copy()
            continue
        cert = optimality_test(spec, x, cfg.active_tol)
        grad_calls += 1
        if cert.max_residual <= best_cert.max_residual:
            best_x, best_cert = x.copy(), cert
    converged = best_cert.max_residual < cfg.tol
    return SolveReport(
        strategy=JointStrategy(best_x),
        certificate=best_cert,
        outer_iterations=outer,
        inner_iterations_total=inner_total,
        final_step=gamma,
        converged=converged,
        wall_time=time.perf_counter() - start_time,
        steps=tuple(steps),
        projection_calls=sum(p.calls for p in projectors),
        gradient_calls=grad_calls,
    )
