"""Gravity and tomo-gravity reference estimators."""

import numpy as np
import pytest

from slrtomo import RoutingOperator, gravity_estimate, synthesize_instance, tomo_gravity
from slrtomo.baselines import (
    GravityPrior,
    InfeasibleLinkWarning,
    fit_gravity_totals,
    rank1_matrix,
)
from slrtomo.tensor_store import RoutingMatrix
from conftest import identity_routing


def test_rank1_matrix_formula():
    X = rank1_matrix(np.array([3.0, 1.0]), np.array([2.0, 2.0]), total=4.0)
    np.testing.assert_allclose(X, [[1.5, 1.5], [0.5, 0.5]])


def test_rank1_matrix_zero_total():
    X = rank1_matrix(np.zeros(3), np.zeros(3), total=0.0)
    np.testing.assert_array_equal(X, np.zeros((3, 3)))


def test_gravity_zero_loads(small_operator):
    X = gravity_estimate(np.zeros(small_operator.M), small_operator)
    np.testing.assert_array_equal(X, np.zeros((4, 4)))


def test_gravity_recovers_rank1_truth_identity_routing():
    S = 3
    op = RoutingOperator(identity_routing(S))
    out = np.array([3.0, 1.0, 2.0])
    inc = np.array([1.0, 4.0, 1.0])
    truth = np.outer(out, inc) / inc.sum()  # independent margins, total = sum(out)
    L = op.forward_map(truth)
    X = gravity_estimate(L, op)
    np.testing.assert_allclose(X, truth, rtol=1e-6, atol=1e-9)


def test_gravity_output_is_rank_one():
    for seed in (0, 1, 2):
        inst = synthesize_instance(S=5, avg_degree=3, T=1, rank=3, seed=seed)
        op = RoutingOperator(inst.routing)
        X = gravity_estimate(inst.link_loads[:, 0], op)
        assert (X >= 0).all()
        s = np.linalg.svd(X, compute_uv=False)
        assert s[1] <= 1e-9 * s[0]


def test_gravity_totals_balanced(small_instance, small_operator):
    prior = fit_gravity_totals(small_instance.link_loads[:, 0], small_operator)
    assert abs(prior.out_totals.sum() - prior.in_totals.sum()) \
        <= 1e-6 * prior.total


def test_tomo_gravity_fixed_point(small_operator):
    rng = np.random.default_rng(3)
    S = small_operator.S
    prior = rng.uniform(0.5, 1.5, (S, S))
    L = small_operator.forward_map(prior)
    X = tomo_gravity(L, small_operator, prior)
    np.testing.assert_allclose(X, prior, rtol=1e-9)


def test_tomo_gravity_single_link_scaling():
    routing = RoutingMatrix(S=2, M=2, links=np.array([0, 1]),
                            ods=np.array([0, 3]))
    op = RoutingOperator(routing)
    prior = np.array([[2.0, 0.0], [0.0, 1.0]])
    X = tomo_gravity(np.array([5.0, 1.0]), op, prior)
    assert X[0, 0] == pytest.approx(5.0)
    assert X[1, 1] == pytest.approx(1.0)


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_tomo_gravity_reaches_link_consistency(backend):
    inst = synthesize_instance(S=3, avg_degree=2.5, T=1, rank=2, seed=4)
    op = RoutingOperator(inst.routing)
    L = inst.link_loads[:, 0]
    prior = gravity_estimate(L, op)
    X = tomo_gravity(L, op, prior, iters=2000, tol=1e-8, backend=backend)
    mismatch = np.abs(op.forward_map(X) - L).max()
    assert mismatch / (1.0 + np.abs(L).max()) <= 1e-8


def test_tomo_gravity_preserves_zeros_and_nonnegativity(small_instance,
                                                        small_operator):
    L = small_instance.link_loads[:, 0]
    prior = gravity_estimate(L, small_operator)
    omega = small_instance.mask.bool_slice(1, 4)
    prior[omega] = 0.0
    X = tomo_gravity(L, small_operator, prior)
    assert (X >= 0.0).all()
    np.testing.assert_array_equal(X[omega], 0.0)


def test_tomo_gravity_warns_on_infeasible_link():
    routing = RoutingMatrix(S=2, M=2, links=np.array([0, 1]),
                            ods=np.array([0, 3]))
    op = RoutingOperator(routing)
    prior = np.array([[0.0, 0.0], [0.0, 1.0]])  # link 1 has no prior mass
    with pytest.warns(InfeasibleLinkWarning):
        X = tomo_gravity(np.array([5.0, 2.0]), op, prior)
    assert X[0, 0] == 0.0  # zero-prior entry never resurrects
    assert X[1, 1] == pytest.approx(2.0)


def test_gravity_prior_rejects_imbalance():
    with pytest.raises(Exception):
        GravityPrior(out_totals=np.array([1.0, 1.0]),
                     in_totals=np.array([5.0, 5.0]), total=2.0)
