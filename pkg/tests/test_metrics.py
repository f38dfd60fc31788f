"""NMAE and cross-validation score definitions."""

import numpy as np
import pytest

from slrtomo import MetricError, SparsityMask, TrafficTensor, n_cv, nmae, per_interval_nmae
from slrtomo.metrics import nmae_terms


def _tensor(values):
    return TrafficTensor(np.asarray(values, dtype=float))


def test_nmae_exact_estimate_is_zero():
    rng = np.random.default_rng(0)
    truth = _tensor(rng.random((3, 3, 2)))
    assert nmae(truth, truth) == 0.0


def test_nmae_zero_estimate_is_one():
    rng = np.random.default_rng(1)
    truth = _tensor(rng.random((3, 3, 2)) + 0.1)
    zero = _tensor(np.zeros((3, 3, 2)))
    assert nmae(zero, truth) == pytest.approx(1.0)


def test_nmae_scale_invariance():
    rng = np.random.default_rng(2)
    truth = rng.random((3, 3, 2)) + 0.1
    est = truth + 0.05 * rng.random((3, 3, 2))
    v1 = nmae(_tensor(est), _tensor(truth))
    v2 = nmae(_tensor(3.0 * est), _tensor(3.0 * truth))
    assert v1 == pytest.approx(v2)


def test_nmae_sums_only_unmasked_entries():
    truth = np.zeros((2, 2, 1))
    truth[0, 0, 0] = 4.0
    est = truth.copy()
    est[1, 1, 0] = 100.0  # error only on a masked entry
    mask = SparsityMask(zero_pairs=frozenset({(2, 2)}))
    assert nmae(_tensor(est), _tensor(truth), mask) == 0.0


def test_nmae_zero_denominator_raises():
    truth = _tensor(np.zeros((2, 2, 1)))
    with pytest.raises(MetricError):
        nmae(truth, truth)
    # fully masked truth: complement is empty
    full = SparsityMask(zero_pairs=frozenset({(i, j) for i in (1, 2) for j in (1, 2)}))
    with pytest.raises(MetricError):
        nmae(truth, truth, full)


def test_per_interval_components():
    truth = np.ones((2, 2, 3))
    est = truth.copy()
    est[:, :, 1] += 0.5  # error concentrated in interval 2
    out = per_interval_nmae(_tensor(est), _tensor(truth))
    np.testing.assert_allclose(out, [0.0, 0.5, 0.0])


def test_per_interval_absent_marker():
    truth = np.ones((2, 2, 2))
    truth[:, :, 1] = 0.0
    out = per_interval_nmae(_tensor(truth), _tensor(truth))
    assert out[0] == 0.0 and np.isnan(out[1])


def test_per_interval_recombines_to_global():
    rng = np.random.default_rng(3)
    truth = rng.random((3, 3, 4)) + 0.1
    est = truth + 0.1 * rng.random((3, 3, 4))
    mask = SparsityMask(zero_pairs=frozenset({(1, 2)}))
    num, den = nmae_terms(_tensor(est), _tensor(truth), mask)
    assert num.sum() / den.sum() == pytest.approx(
        nmae(_tensor(est), _tensor(truth), mask))


def test_n_cv_definitions():
    assert n_cv([(0.0, 5.0), (0.0, 3.0)]) == 0.0
    assert n_cv([(5.0, 5.0), (3.0, 3.0)]) == pytest.approx(1.0)
    assert n_cv([(1.0, 4.0)]) == pytest.approx(n_cv([(2.0, 8.0)]))  # scale-free
    with pytest.raises(MetricError):
        n_cv([])
    with pytest.raises(MetricError):
        n_cv([(1.0, 0.0)])
