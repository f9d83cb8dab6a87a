"""Structural tests: concavity, commutativity and NE uniqueness."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import PreconditionError, SamplingError
from .game import (
    DynamicPriceCost,
    GameSpec,
    JointStrategy,
    LinearCost,
    aggregate_cost_loss_hessian,
    as_array,
    profit_hessian,
)
from .projection import project

NEG_DEF_TOL = 1e-10


class Verdict(enum.Enum):
    ANALYTICALLY_UNIQUE = "AnalyticallyUnique"
    SAMPLED_PASS = "SampledPass"
    FALSIFIED = "Falsified"


@dataclass(frozen=True)
class UniquenessReport:
    verdict: Verdict
    witness: Optional[JointStrategy]
    min_eigenvalue_seen: float
    max_eigenvalue_seen: float
    samples_checked: int

    def __post_init__(self):
        if (self.witness is not None) != (self.verdict is Verdict.FALSIFIED):
            raise ValueError("witness must be present exactly when the verdict is Falsified")


def check_prop3_class(spec: GameSpec) -> bool:
    """True when the spec lies in a class with a provably unique NE.

    That is affine participation with one shared non-negative weight vector
    and either dynamic prices with ``alpha > 0`` (strictly concave profits),
    or the Blotto specialisation: linear costs, ``m = 1`` and ``w = 1``.
    """
    w = np.asarray(spec.participation_weights, dtype=float)
    if w.ndim != 1 or np.any(w < 0) or not np.linalg.norm(w) > 0:
        return False
    if np.any(np.asarray(spec.fictitious_participations) <= 0):
        return False
    cost = spec.cost_model
    if isinstance(cost, DynamicPriceCost):
        if np.any(cost.alphas <= 0):
            return False
        # f2 w w' - 2 alpha D is negative definite iff no non-zero v with
        # D v = 0 and w'v = 0: at most one unpriced coordinate, with w > 0 there
        unpriced = np.flatnonzero(cost.priced == 0)
        return unpriced.size == 0 or (unpriced.size == 1 and w[unpriced[0]] > 0)
    if isinstance(cost, LinearCost):
        return spec.n_categories == 1 and w[0] > 0
    return False


def _stage_factors(spec, arr, i, k):
    phi = np.einsum("ij,ij->i", arr[:, k, :], spec.weights)
    s = phi.sum() + spec.fictitious_participations[k]
    prize = spec.stage_prizes[k]
    f1 = prize * (s - phi[i]) / s ** 2
    f2 = -2.0 * f1 / s
    return phi, s, prize, f1, f2


def concavity_condition(spec: GameSpec, x, i: int, k: int):
    """Stage block of the own-strategy Hessian and whether it is NSD.

    Returns ``(matrix, is_nsd)`` where ``matrix = f2 w w' - d2c/dx_ik^2``
    (the participation Hessian vanishes for affine participation).
    """
    arr = as_array(spec, x)
    _, _, _, _, f2 = _stage_factors(spec, arr, i, k)
    w = spec.weights[i]
    mat = f2 * np.outer(w, w) - spec.cost_model.own_hessian(k, spec.n_categories)
    mat = 0.5 * (mat + mat.T)
    return mat, bool(np.linalg.eigvalsh(mat).max() <= NEG_DEF_TOL)


def commutativity_check(spec: GameSpec, x, p: int, q: int, k: int, tol: float = 1e-12) -> bool:
    """Whether the cross-derivative block of ``u_p`` is symmetric at stage k."""
    if p == q:
        raise PreconditionError("commutativity needs two distinct players")
    arr = as_array(spec, x)
    phi, s, prize, _, _ = _stage_factors(spec, arr, p, k)
    f3 = -prize * (s - 2.0 * phi[p]) / s ** 3
    wp, wq = spec.weights[p], spec.weights[q]
    m = spec.n_categories
    cross = spec.cost_model.cross_hessian(k, m)
    lhs = f3 * np.outer(wq, wp) - cross
    rhs = f3 * np.outer(wp, wq) - cross.T
    scale = max(1.0, float(np.max(np.abs(lhs))))
    return bool(np.max(np.abs(lhs - rhs)) <= tol * scale)


def _block_slices(spec, i):
    d = spec.player_dim
    return slice(i * d, (i + 1) * d)


def jacobian_symmetric_part(spec: GameSpec, x) -> np.ndarray:
    """``G + G'`` assembled block by block from each player's Hessian."""
    n = spec.n_players
    d = spec.player_dim
    g = np.zeros((n * d, n * d))
    for i in range(n):
        h = profit_hessian(spec, x, i)
        rows = _block_slices(spec, i)
        # block (i, j) of G holds D_{x_j} grad_{x_i} u_i
        g[rows, :] = h[rows, :]
    return g + g.T


def extended_hessian(spec: GameSpec, x, i: int) -> np.ndarray:
    """Hessian of ``u_i`` in the opponents' strategies, embedded in the joint layout.

    The left/right opponent blocks keep their positions and the rows and
    columns belonging to player ``i`` are zero.
    """
    n = spec.n_players
    d = spec.player_dim
    h = profit_hessian(spec, x, i)
    out = np.zeros_like(h)
    left = slice(0, i * d)
    right = slice((i + 1) * d, n * d)
    for a in (left, right):
        for b in (left, right):
            out[a, b] = h[a, b]
    return out


def opponent_hessian(spec: GameSpec, x, i: int) -> np.ndarray:
    """``Hess_{x_{-i}} u_i`` from the closed-form opponent-opponent terms."""
    arr = as_array(spec, x)
    n, K, m = spec.shape
    others = [j for j in range(n) if j != i]
    w = spec.weights
    h = np.zeros((len(others), K, m, len(others), K, m))
    for k in range(K):
        phi, s, prize, _, _ = _stage_factors(spec, arr, i, k)
        coef = 2.0 * prize * phi[i] / s ** 3
        for a, ja in enumerate(others):
            for b, jb in enumerate(others):
                h[a, k, :, b, k, :] = coef * np.outer(w[ja], w[jb])
    size = len(others) * K * m
    return h.reshape(size, size)


def own_hessian_blocks(spec: GameSpec, x) -> np.ndarray:
    """Block-diagonal matrix of every player's own-strategy Hessian."""
    n = spec.n_players
    d = spec.player_dim
    out = np.zeros((n * d, n * d))
    for i in range(n):
        sl = _block_slices(spec, i)
        out[sl, sl] = profit_hessian(spec, x, i)[sl, sl]
    return out


def uniqueness_matrix(spec: GameSpec, x) -> np.ndarray:
    """``M - sum_i H^i - Hess(C + sum Psi)`` from the aggregate identity."""
    mat = own_hessian_blocks(spec, x)
    for i in range(spec.n_players):
        mat -= extended_hessian(spec, x, i)
    mat -= aggregate_cost_loss_hessian(spec, x)
    return mat


def sample_feasible(spec: GameSpec, rng: np.random.Generator, max_tries: int = 10) -> np.ndarray:
    """Uniform draw in each player's bounding box, projected onto its set."""
    out = np.empty((spec.n_players, spec.player_dim))
    for i, cons in enumerate(spec.constraints):
        lo, hi = cons.box
        for _ in range(max_tries):
            y = project(rng.uniform(lo, hi), cons)
            if cons.contains(y, 1e-8):
                out[i] = y
                break
        else:
            raise SamplingError(f"could not draw a feasible point for player {i}")
    return out.reshape(spec.shape)


def uniqueness_test(spec: GameSpec, sample_count: int = 50, seed: int = 0,
                    force_sampling: bool = False) -> UniquenessReport:
    """Check the negative-definiteness condition for NE uniqueness.

    Specs in the analytic class short-circuit.  Otherwise the condition is
    checked on ``sample_count`` seeded feasible points; a pass is evidence,
    not a proof, since the condition must hold on the whole feasible set.
    """
    if not force_sampling and check_prop3_class(spec):
        return UniquenessReport(Verdict.ANALYTICALLY_UNIQUE, None, float("nan"),
                                float("nan"), 0)
    rng = np.random.default_rng(seed)
    lo_seen, hi_seen = np.inf, -np.inf
    for s in range(sample_count):
        x = sample_feasible(spec, rng)
        for k in range(spec.n_stages):
            for p in range(spec.n_players):
                for q in range(spec.n_players):
                    if p != q and not commutativity_check(spec, x, p, q, k):
                        raise PreconditionError(
                            f"cross derivatives of players {p},{q} do not commute at stage {k}")
        eig = np.linalg.eigvalsh(jacobian_symmetric_part(spec, x))
        lo_seen = min(lo_seen, float(eig[0]))
        hi_seen = max(hi_seen, float(eig[-1]))
        if eig[-1] >= -NEG_DEF_TOL:
            return UniquenessReport(Verdict.FALSIFIED, JointStrategy(x), lo_seen, hi_seen, s + 1)
    return UniquenessReport(Verdict.SAMPLED_PASS, None, lo_seen, hi_seen, sample_count)
