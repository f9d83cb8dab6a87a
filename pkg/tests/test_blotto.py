import numpy as np
import pytest
from hypothesis import given, strategies as st

from lossy_tullock import SpecificationError
from lossy_tullock.blotto import (
    BlottoSearchError,
    BlottoSpec,
    Configuration,
    benchmark_methods,
    enumerate_configurations,
    f_tilde,
    find_root,
    solve_semi_analytical,
)
from lossy_tullock.game import total_profits
from lossy_tullock.solver import SolverConfig, solve_ne

from conftest import best_response_value


def test_single_player_closed_form():
    # 9/(x1+1)^2 = 4/(x2+1)^2 with x1 + x2 = 3 gives x = (2, 1) and nu = 1
    spec = BlottoSpec([3.0], [9.0, 4.0], [0.0, 0.0], [1.0, 1.0])
    sol = solve_semi_analytical(spec)
    np.testing.assert_allclose(sol.strategy, [[2.0, 1.0]], atol=1e-10)
    assert sol.nu[0] == pytest.approx(1.0, abs=1e-10)
    assert sol.t_nu_root == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("n,k", [(2, 2), (3, 4), (5, 3)])
def test_symmetric_players_split_evenly(n, k):
    spec = BlottoSpec(np.full(n, 12.0), np.full(k, 50.0), np.full(k, 0.5), np.ones(k))
    sol = solve_semi_analytical(spec)
    np.testing.assert_allclose(sol.strategy, 12.0 / k, atol=1e-6)


def test_identical_players_share_allocations():
    spec = BlottoSpec([10.0, 10.0], [30.0, 10.0, 5.0], [0.2, 0.1, 0.0], [1.0, 2.0, 0.5])
    x = solve_semi_analytical(spec).strategy
    np.testing.assert_allclose(x[0], x[1], atol=1e-9)


def test_matches_iterative_solver():
    spec = BlottoSpec([5.0, 8.0], [20.0, 10.0, 6.0], [0.3, 0.2, 0.1], [1.0, 1.0, 1.0])
    sol = solve_semi_analytical(spec)
    rep = solve_ne(spec.to_game_spec(), SolverConfig(gamma_bar=0.5, tol=1e-9))
    np.testing.assert_allclose(sol.strategy, rep.strategy.values[:, :, 0], atol=1e-6)


def test_boundary_equilibrium_is_best_response(upper_blotto):
    spec = BlottoSpec(upper_blotto.budgets, upper_blotto.prizes, 12 * upper_blotto.unit_costs,
                      upper_blotto.fictitious)
    sol = solve_semi_analytical(spec)
    assert sol.verified and sol.route == "coupled"
    assert (0, 3) in sol.configuration.zero_set
    game = spec.to_game_spec()
    x = sol.strategy[:, :, None]
    u = total_profits(game, x)
    for i in range(spec.n_players):
        assert best_response_value(game, x, i) <= u[i] + 1e-6 * abs(u[i])


def test_search_error_when_capped(upper_blotto):
    spec = BlottoSpec(upper_blotto.budgets, upper_blotto.prizes, 12 * upper_blotto.unit_costs,
                      upper_blotto.fictitious)
    with pytest.raises(BlottoSearchError):
        solve_semi_analytical(spec, max_configs=1)


def test_enumeration_order_and_count():
    configs = list(enumerate_configurations(2, 3))
    assert len(configs) == (2 ** 3 - 1) ** 2
    sizes = [len(c) for c in configs]
    assert sizes == sorted(sizes)
    assert configs[0].zero_set == frozenset()
    assert len({c.zero_set for c in configs}) == len(configs)


def test_enumeration_limit():
    assert len(list(enumerate_configurations(3, 4, limit=7))) == 7


def test_configuration_validation():
    with pytest.raises(SpecificationError):
        Configuration(1, 2, frozenset({(0, 0), (0, 1)}))
    with pytest.raises(SpecificationError):
        Configuration(1, 2, frozenset({(1, 0)}))
    c = Configuration(2, 2, frozenset({(0, 1)}))
    np.testing.assert_array_equal(c.participants, [2, 1])


@given(st.integers(0, 10_000))
def test_root_function_decreasing_with_single_root(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(1, 4)), int(rng.integers(1, 5))
    spec = BlottoSpec(rng.uniform(1, 50, n), rng.uniform(1, 100, k), rng.uniform(0, 2, k),
                      rng.uniform(0.1, 3, k))
    cfg = Configuration(n, k)
    t = find_root(cfg, spec)
    assert abs(f_tilde(t, cfg, spec)) <= 1e-12 * (spec.budgets.sum() + spec.fictitious.sum())
    grid = t + np.linspace(-0.5, 0.5, 11) * max(1.0, abs(t))
    lo = np.max(-n * spec.unit_costs)
    vals = [f_tilde(g, cfg, spec) for g in grid if g > lo]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@given(st.integers(0, 10_000))
def test_solution_conserves_budgets(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    spec = BlottoSpec(rng.uniform(1, 50, n), rng.uniform(1, 100, k), rng.uniform(0, 2, k),
                      rng.uniform(0.1, 3, k))
    sol = solve_semi_analytical(spec)
    assert np.all(sol.strategy >= 0)
    np.testing.assert_allclose(sol.strategy.sum(axis=1), spec.budgets, rtol=1e-10)
    assert sol.certificate.max_residual < 1e-6


def test_benchmark_report(upper_blotto):
    rep = benchmark_methods(upper_blotto, repeats=2)
    assert rep.agreement < 1e-3
    assert rep.semi_analytical_evaluations < rep.iterative_inner_steps
    assert rep.speedup > 1


def test_spec_validation():
    with pytest.raises(SpecificationError):
        BlottoSpec([1.0], [1.0, 2.0], [0.0], [1.0, 1.0])
    with pytest.raises(SpecificationError):
        BlottoSpec([0.0], [1.0], [0.0], [1.0])
    with pytest.raises(SpecificationError):
        BlottoSpec([1.0], [1.0], [0.0], [0.0])
