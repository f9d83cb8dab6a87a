import numpy as np
import pytest
from hypothesis import given, strategies as st

from lossy_tullock import SpecificationError
from lossy_tullock.analysis import sample_feasible
from lossy_tullock.rhg import (
    RecedingHorizonAbort,
    RhgMarket,
    RhgPlayerSpec,
    battery_matrices,
    battery_player,
    build_game,
    decode,
    encode,
    lift_constraints,
    run_receding_horizon,
    simulate,
    solve_open_loop,
)
from lossy_tullock.solver import SolverConfig


def random_linear_player(rng, my=3, mu=2, n_steps=6):
    """Non-negative dynamics with input caps; participation stays positive."""
    return RhgPlayerSpec(
        A=rng.uniform(0.0, 0.5, (my, my)), B=rng.uniform(0.0, 1.0, (my, mu)),
        G=-rng.uniform(0.0, 0.2, (2, my)), H=rng.uniform(0.5, 1.5, (2, mu)),
        d=rng.uniform(1.0, 3.0, (n_steps, 2)), y0=rng.uniform(0.5, 2.0, my),
        p_y=rng.uniform(0.1, 1.0, my), p_u=rng.uniform(0.0, 1.0, mu))


def check_decoded(p, x, T, t0=0, tol=1e-9):
    phi, u, y = decode(p, x, T)
    scale = max(1.0, float(np.abs(y).max()), float(np.abs(u).max()))
    for k in range(T):
        assert np.all(p.G @ y[k] + p.H @ u[k] <= p.d_at(t0 + k) + tol * scale)
        assert abs(phi[k] - (p.p_y @ y[k] + p.p_u @ u[k])) <= tol * scale
    assert np.all(u >= -tol * scale)


@given(st.integers(0, 10_000))
def test_lifted_strategies_decode_to_feasible_trajectories(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 6))
    p = random_linear_player(rng, n_steps=T)
    cons = lift_constraints(p, T)
    for _ in range(3):
        lo, hi = cons.box
        from lossy_tullock.projection import project
        x = project(rng.uniform(lo, hi), cons)
        check_decoded(p, x, T)


@given(st.integers(0, 10_000))
def test_battery_lifting_sound(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 6))
    shares = rng.dirichlet(np.ones(3))
    p = battery_player(float(rng.uniform(10, 500)), shares, float(rng.uniform(0.1, 0.9)),
                       float(rng.uniform(0.5, 0.99)))
    market = RhgMarket(np.ones(T), np.ones(T), np.ones(T), np.zeros((T, 3)))
    game = build_game([p], market, T)
    x = sample_feasible(game, rng)
    check_decoded(p, x[0].ravel(), T)


@given(st.integers(0, 10_000))
def test_battery_dynamics_conserve_fleet(seed):
    rng = np.random.default_rng(seed)
    a, b = battery_matrices(float(rng.uniform(0, 1)))
    np.testing.assert_allclose(a.sum(axis=0), 1.0)
    np.testing.assert_allclose((a + b).sum(axis=0), 1.0)
    p = battery_player(100.0, discharge=float(rng.uniform(0, 1)))
    u = rng.uniform(0, 5, (8, 3))
    y = simulate(p, u)
    np.testing.assert_allclose(y.sum(axis=1), 100.0, rtol=1e-12)


def test_encode_decode_round_trip(rng):
    p = random_linear_player(rng)
    u = rng.uniform(0, 0.5, (4, 2))
    x = encode(p, u)
    phi, u2, y = decode(p, x, 4)
    np.testing.assert_allclose(u2, u)
    np.testing.assert_allclose(phi, y[:-1] @ p.p_y + u @ p.p_u)
    cons = lift_constraints(p, 4)
    np.testing.assert_allclose(cons.eq_matrix @ x, cons.eq_rhs, atol=1e-12)


def test_charging_moves_vehicles_to_green():
    a, b = battery_matrices(0.5)
    y = np.array([10.0, 20.0, 70.0])
    u = np.array([10.0, 0.0, 0.0])
    np.testing.assert_allclose(a @ y + b @ u, [10.0, 45.0, 45.0])


def small_market(n_steps=4):
    return RhgMarket(np.array([20.0, 60.0, 60.0, 20.0])[:n_steps], np.full(n_steps, 10.0),
                     np.array([0.01, 0.05, 0.2, 0.2])[:n_steps], np.zeros((n_steps, 3)))


def small_fleet():
    return [battery_player(f, discharge=0.5, n_steps=4) for f in (10.0, 20.0)]


def test_full_horizon_rollout_equals_open_loop():
    players, market = small_fleet(), small_market()
    tr = run_receding_horizon(players, market, 4)
    rep = solve_open_loop(players, market, 4)
    np.testing.assert_allclose(tr.inputs, rep.strategy.values[:, :, 1:], atol=1e-12)
    assert len(tr.reports) == 1 and tr.completed_steps == 4


def test_rollout_bookkeeping():
    players, market = small_fleet(), small_market()
    tr = run_receding_horizon(players, market, 2)
    assert len(tr.reports) == 3
    for i, p in enumerate(players):
        np.testing.assert_allclose(tr.states[i], simulate(p, tr.inputs[i]), atol=1e-10)
        np.testing.assert_allclose(tr.states[i].sum(axis=1), tr.states[i, 0].sum())
    np.testing.assert_allclose(tr.payoffs.sum(axis=0) + tr.losses, market.prizes, rtol=1e-12)
    assert tr.lost_profit == pytest.approx(tr.losses.sum())


def test_realized_market_scores_rollout():
    players, market = small_fleet(), small_market()
    realized = RhgMarket(market.prizes * 2, market.epsilons, market.alphas, market.offsets)
    base = run_receding_horizon(players, market, 2)
    other = run_receding_horizon(players, market, 2, realized=realized)
    np.testing.assert_allclose(other.inputs, base.inputs)
    np.testing.assert_allclose(other.payoffs, 2 * base.payoffs)


def test_failed_step_keeps_partial_trace():
    players, market = small_fleet(), small_market()
    with pytest.raises(RecedingHorizonAbort) as info:
        run_receding_horizon(players, market, 2, SolverConfig(t_out=1, max_outer=1, tol=1e-14))
    assert info.value.trace.completed_steps == 0


def test_horizon_out_of_range():
    with pytest.raises(SpecificationError):
        run_receding_horizon(small_fleet(), small_market(), 5)


def test_market_window_checks_length():
    with pytest.raises(SpecificationError, match="window"):
        small_market().window(2, 3)
