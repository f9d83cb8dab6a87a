import cvxpy as cp
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lossy_tullock.blotto import BlottoSpec
from lossy_tullock.game import DynamicPriceCost, GameSpec, LinearCost, PlayerConstraints

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_polytope(rng, dim, n_ineq=None, with_eq=None):
    """Random bounded polytope that contains a strictly feasible point."""
    n_ineq = rng.integers(0, 3) if n_ineq is None else n_ineq
    with_eq = rng.random() < 0.5 if with_eq is None else with_eq
    center = rng.uniform(0.5, 2.0, dim)
    a = rng.uniform(0.0, 1.0, (n_ineq, dim))
    b = a @ center + rng.uniform(0.2, 1.5, n_ineq)
    if with_eq:
        e = rng.uniform(0.5, 1.5, (1, dim))
        return PlayerConstraints(dim, a, b, e, e @ center)
    # an all-positive row keeps the set bounded
    cap = np.ones((1, dim))
    return PlayerConstraints(dim, np.vstack([a, cap]), np.append(b, cap @ center + 1.0))


def random_spec(rng, n=None, k=None, m=None, dynamic=None, mild=False):
    """Random valid spec; ``mild`` keeps the curvature low for iterative solvers."""
    n = int(rng.integers(1, 4)) if n is None else n
    k = int(rng.integers(1, 4)) if k is None else k
    m = int(rng.integers(1, 3)) if m is None else m
    dynamic = rng.random() < 0.5 if dynamic is None else dynamic
    prizes = rng.uniform(1.0, 5.0 if mild else 20.0, k)
    eps = rng.uniform(1.0 if mild else 0.2, 3.0, k)
    w = rng.uniform(0.2, 2.0, m)
    if dynamic:
        cost = DynamicPriceCost(rng.uniform(0.05, 1.0, k), rng.uniform(0.0, 0.5, (k, m)))
    else:
        cost = LinearCost(rng.uniform(0.0, 1.0, k))
    cons = [random_polytope(rng, k * m) for _ in range(n)]
    return GameSpec(n, k, m, prizes, eps, w, cost, cons)


def random_point(spec, rng):
    from lossy_tullock.analysis import sample_feasible
    return sample_feasible(spec, rng)


def best_response_value(spec, x, i):
    """Player i's best-response profit, solved as a convex program."""
    n, K, m = spec.shape
    cons = spec.constraints[i]
    w = spec.participation_weights
    y = cp.Variable(cons.dim)
    yk = cp.reshape(y, (K, m), order="C")
    others = np.delete(x, i, axis=0)
    obj = 0
    for k in range(K):
        a = float(others[:, k, :].sum(axis=0) @ w) + spec.fictitious_participations[k]
        # W phi / (phi + a) = W - W a / (phi + a)
        obj += spec.stage_prizes[k] - spec.stage_prizes[k] * a * cp.inv_pos(yk[k] @ w + a)
        c = spec.cost_model
        if isinstance(c, LinearCost):
            obj -= c.betas[k] * cp.sum(yk[k])
        else:
            d = c.priced
            tot = others[:, k, :].sum(axis=0)
            obj -= c.alphas[k] * cp.sum(cp.multiply(d, cp.square(yk[k])))
            obj -= (c.alphas[k] * d * tot + c.offsets[k]) @ yk[k]
    constraints = [y >= 0]
    if cons.n_ineq:
        constraints.append(cons.ineq_matrix @ y <= cons.ineq_rhs)
    if cons.n_eq:
        constraints.append(cons.eq_matrix @ y == cons.eq_rhs)
    prob = cp.Problem(cp.Maximize(obj), constraints)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def upper_blotto():
    return BlottoSpec([200.0, 500.0, 1000.0], [220e3, 100e3, 50e3, 35e3],
                      [12.0, 9.0, 6.0, 3.0], np.ones(4))


@pytest.fixture
def pf_spec():
    """Two players, two stages, dynamic prices, capped totals."""
    cons = [PlayerConstraints(2, [[1.0, 1.0]], [4.0]), PlayerConstraints(2, [[1.0, 1.0]], [3.0])]
    return GameSpec(2, 2, 1, [10.0, 6.0], [1.0, 1.0], [1.0],
                    DynamicPriceCost([0.5, 0.3], [[0.1], [0.2]]), cons)
