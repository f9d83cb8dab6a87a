import numpy as np
import pytest
from hypothesis import given, strategies as st

from lossy_tullock import DynamicPriceCost, GameSpec, LinearCost, PlayerConstraints, PreconditionError
from lossy_tullock.analysis import (
    Verdict,
    check_prop3_class,
    commutativity_check,
    concavity_condition,
    extended_hessian,
    jacobian_symmetric_part,
    opponent_hessian,
    uniqueness_matrix,
    uniqueness_test,
)
from lossy_tullock.game import all_profit_gradients

from conftest import random_point, random_spec


def fd_pseudo_jacobian(spec, x, h=1e-6):
    flat = np.asarray(x, dtype=float).ravel()

    def g(z):
        return all_profit_gradients(spec, z.reshape(spec.shape)).ravel()
    return np.stack([(g(flat + e) - g(flat - e)) / (2 * h) for e in np.eye(flat.size) * h], axis=1)


@given(st.integers(0, 10_000))
def test_blockwise_and_aggregate_assemblies_agree(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, n=int(rng.integers(2, 4)))
    x = random_point(spec, rng)
    a = jacobian_symmetric_part(spec, x)
    b = uniqueness_matrix(spec, x)
    assert np.abs(a - b).max() <= 1e-8 * max(1.0, np.abs(a).max())


@given(st.integers(0, 10_000))
def test_symmetric_part_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng)
    x = random_point(spec, rng) + 0.1
    g = fd_pseudo_jacobian(spec, x)
    a = jacobian_symmetric_part(spec, x)
    assert np.abs(a - (g + g.T)).max() <= 1e-5 * max(1.0, np.abs(a).max())


@given(st.integers(0, 10_000))
def test_extended_hessian_quadratic_form(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, n=int(rng.integers(2, 4)))
    x = random_point(spec, rng)
    z = rng.normal(size=(spec.n_players, spec.player_dim))
    for i in range(spec.n_players):
        zo = np.delete(z, i, axis=0).ravel()
        lhs = z.ravel() @ extended_hessian(spec, x, i) @ z.ravel()
        rhs = zo @ opponent_hessian(spec, x, i) @ zo
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


def test_supported_class_detection(rng):
    blotto_like = GameSpec(2, 2, 1, [1.0, 1.0], [1.0, 1.0], [1.0], LinearCost([0.1, 0.1]),
                           [PlayerConstraints.budget(2, 1.0)] * 2)
    assert check_prop3_class(blotto_like)
    dyn = random_spec(rng, m=2, dynamic=True)
    assert check_prop3_class(dyn)
    lin_multi = GameSpec(1, 1, 2, [1.0], [1.0], [1.0, 1.0], LinearCost([0.1]),
                         [PlayerConstraints.budget(2, 1.0)])
    assert not check_prop3_class(lin_multi)
    one_unpriced = GameSpec(1, 1, 2, [1.0], [1.0], [1.0, 0.0],
                            DynamicPriceCost([1.0], [[0.0, 0.0]], [0.0, 1.0]),
                            [PlayerConstraints.budget(2, 1.0)])
    assert check_prop3_class(one_unpriced)
    unpriced_unweighted = GameSpec(1, 1, 2, [1.0], [1.0], [0.0, 1.0],
                                   DynamicPriceCost([1.0], [[0.0, 0.0]], [0.0, 1.0]),
                                   [PlayerConstraints.budget(2, 1.0)])
    assert not check_prop3_class(unpriced_unweighted)


def test_analytic_verdict_short_circuits(rng):
    spec = random_spec(rng, dynamic=True)
    rep = uniqueness_test(spec)
    assert rep.verdict is Verdict.ANALYTICALLY_UNIQUE
    assert rep.samples_checked == 0 and rep.witness is None


def test_sampled_pass_for_strictly_concave_game(rng):
    spec = random_spec(rng, n=2, dynamic=True)
    rep = uniqueness_test(spec, sample_count=10, force_sampling=True)
    assert rep.verdict is Verdict.SAMPLED_PASS
    assert rep.max_eigenvalue_seen < 0


def test_flat_direction_is_falsified():
    # linear costs with two categories leave a direction of zero curvature
    spec = GameSpec(2, 1, 2, [5.0], [1.0], [1.0, 1.0], LinearCost([0.1]),
                    [PlayerConstraints.budget(2, 1.0)] * 2)
    rep = uniqueness_test(spec, sample_count=5)
    assert rep.verdict is Verdict.FALSIFIED
    assert rep.witness is not None
    assert rep.max_eigenvalue_seen >= -1e-10


def test_concavity_condition_reports_nsd(rng):
    spec = random_spec(rng, dynamic=True)
    x = random_point(spec, rng)
    mat, ok = concavity_condition(spec, x, 0, 0)
    assert ok and mat.shape == (spec.n_categories,) * 2


def test_commutativity_needs_distinct_players(rng):
    spec = random_spec(rng, n=2)
    x = random_point(spec, rng)
    assert commutativity_check(spec, x, 0, 1, 0)
    with pytest.raises(PreconditionError):
        commutativity_check(spec, x, 1, 1, 0)
