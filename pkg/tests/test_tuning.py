"""Cross-validation machinery: splits, fold scores, candidate selection."""

import numpy as np
import pytest

from slrtomo import (
    CvPlan,
    FoldInfeasibleError,
    SolverParams,
    TrafficTensor,
    ValidationError,
    cv_score,
    kfold_split,
    sample_candidates,
    synthesize_instance,
    tune,
)
from slrtomo.tuning import fold_error_terms, montecarlo_splits, _reduced_instance

FAST = SolverParams(epsilon=1e-6, max_iter=5000)


def test_kfold_exact_division():
    groups = kfold_split(6, 3, seed=0)
    assert [len(g) for g in groups] == [2, 2, 2]


def test_kfold_remainder_rule():
    groups = kfold_split(7, 3, seed=0)
    assert [len(g) for g in groups] == [3, 2, 2]


def test_kfold_partitions_and_is_deterministic():
    a = kfold_split(11, 4, seed=5)
    b = kfold_split(11, 4, seed=5)
    for g1, g2 in zip(a, b):
        np.testing.assert_array_equal(g1, g2)
    merged = np.sort(np.concatenate(a))
    np.testing.assert_array_equal(merged, np.arange(11))


def test_kfold_rejects_bad_k():
    with pytest.raises(ValidationError):
        kfold_split(5, 1, seed=0)
    with pytest.raises(ValidationError):
        kfold_split(5, 6, seed=0)


def test_montecarlo_splits_nonempty_and_seeded():
    splits = montecarlo_splits(50, test_ratio=0.02, repeats=10, seed=3)
    assert len(splits) == 10
    assert all(len(s) == 1 for s in splits)  # ceil(0.02 * 50)
    again = montecarlo_splits(50, test_ratio=0.02, repeats=10, seed=3)
    for a, b in zip(splits, again):
        np.testing.assert_array_equal(a, b)


def test_fold_error_exact_and_zero_estimates(small_instance):
    rows = np.array([0, 3])
    exact_num, den = fold_error_terms(small_instance, rows, small_instance.truth)
    assert exact_num == pytest.approx(0.0, abs=1e-12)
    assert den == pytest.approx(small_instance.link_loads[rows, :].sum())
    zeros = TrafficTensor(np.zeros_like(small_instance.truth.values))
    zero_num, _ = fold_error_terms(small_instance, rows, zeros)
    assert zero_num == pytest.approx(small_instance.link_loads[rows, :].sum())


def test_reduced_instance_drops_rows(small_instance):
    rows = np.array([1, 4])
    reduced = _reduced_instance(small_instance, rows)
    assert reduced.M == small_instance.M - 2
    assert reduced.truth is None
    keep = np.setdiff1d(np.arange(small_instance.M), rows)
    np.testing.assert_array_equal(reduced.link_loads,
                                  small_instance.link_loads[keep, :])


def test_reduced_instance_infeasible_fold():
    inst = synthesize_instance(S=6, avg_degree=2, T=1, seed=0)
    too_many = np.arange(inst.M - 3)  # leaves 3 links < S - 1
    with pytest.raises(FoldInfeasibleError):
        _reduced_instance(inst, too_many)


def test_cv_score_runs_on_fold(small_instance):
    rows = kfold_split(small_instance.M, 4, seed=1)[0]
    num, den = cv_score(small_instance, FAST, rows)
    assert num >= 0.0 and den > 0.0


def test_tune_single_candidate(small_instance):
    plan = CvPlan(candidates=((0.5, 0.5, 1.0),), K=3, seed=2)
    result = tune(small_instance, plan, base_params=FAST)
    assert result.best == (0.5, 0.5, 1.0)
    assert np.isfinite(result.scores[0])


def test_tune_prefers_generating_regime():
    inst = synthesize_instance(S=4, avg_degree=4, T=4, rank=2,
                               zero_fraction=0.25, seed=13)
    good = (0.5, 0.5, 1.0)
    bad = (100.0, 100.0, 100.0)
    plan = CvPlan(candidates=(bad, good), K=4, seed=7)
    result = tune(inst, plan, base_params=SolverParams(epsilon=1e-6, max_iter=2000))
    assert result.scores.min() < result.scores.max()
    assert result.best == good


def test_tune_deterministic(small_instance):
    plan = CvPlan(candidates=tuple(sample_candidates(3, seed=5)), K=3, seed=5)
    r1 = tune(small_instance, plan, base_params=FAST)
    r2 = tune(small_instance, plan, base_params=FAST)
    np.testing.assert_array_equal(r1.scores, r2.scores)
    assert r1.best_index == r2.best_index


def test_tune_monte_carlo(small_instance):
    plan = CvPlan(candidates=((0.5, 0.5, 1.0), (2.0, 2.0, 1.0)),
                  kind="monte_carlo", test_ratio=0.1, repeats=4, seed=9)
    result = tune(small_instance, plan, base_params=FAST)
    assert np.isfinite(result.scores).all()
    assert result.per_fold_errors.shape == (2, 4)


def test_sample_candidates_ranges():
    cands = sample_candidates(200, seed=0)
    arr = np.array(cands)
    assert arr.shape == (200, 3)
    assert (arr[:, :2] >= 1e-4).all() and (arr[:, :2] <= 1e2).all()
    assert (arr[:, 2] >= 1e-2).all() and (arr[:, 2] <= 1e2).all()


def test_plan_validation():
    with pytest.raises(ValidationError):
        CvPlan(candidates=())
    with pytest.raises(ValidationError):
        CvPlan(candidates=((1.0, 1.0),))
    with pytest.raises(ValidationError):
        CvPlan(candidates=((1.0, 1.0, 1.0),), kind="bogus")
    with pytest.raises(ValidationError):
        CvPlan(candidates=((1.0, 1.0, 1.0),), kind="monte_carlo", test_ratio=1.5)
