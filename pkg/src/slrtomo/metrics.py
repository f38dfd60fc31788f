"""Accuracy metrics: NMAE over unmasked entries and the CV score.

All sums run over the complement of the sparsity mask — masked entries are
known zeros and carry no information about recovery quality.
"""

from __future__ import annotations

import numpy as np

from .errors import MetricError
from .tensor_store import SparsityMask, TrafficTensor

__all__ = ["nmae", "per_interval_nmae", "nmae_terms", "n_cv"]


def _values(t) -> np.ndarray:
    if isinstance(t, TrafficTensor):
        return t.values
    return np.asarray(t, dtype=np.float64)


def nmae_terms(estimate, truth, mask: SparsityMask | None = None):
    """Per-interval (numerator, denominator) of the NMAE over unmasked entries."""
    est = _values(estimate)
    tru = _values(truth)
    if est.shape != tru.shape:
        raise MetricError(f"shape mismatch: estimate {est.shape} vs truth {tru.shape}")
    S, _, T = tru.shape
    keep = np.ones(tru.shape, dtype=bool)
    if mask is not None:
        keep = ~mask.bool_tensor(S, T)
    err = np.where(keep, np.abs(est - tru), 0.0)
    vol = np.where(keep, tru, 0.0)
    return err.sum(axis=(0, 1)), vol.sum(axis=(0, 1))


def nmae(estimate, truth, mask: SparsityMask | None = None) -> float:
    """Normalized mean absolute error over all unmasked entries."""
    num, den = nmae_terms(estimate, truth, mask)
    total = den.sum()
    if total <= 0.0:
        raise MetricError("NMAE undefined: unmasked truth volume is zero")
    return float(num.sum() / total)


def per_interval_nmae(estimate, truth, mask: SparsityMask | None = None) -> np.ndarray:
    """NMAE restricted to each interval; NaN marks intervals with zero volume."""
    num, den = nmae_terms(estimate, truth, mask)
    out = np.full(den.shape, np.nan)
    ok = den > 0.0
    out[ok] = num[ok] / den[ok]
    return out


def n_cv(fold_errors) -> float:
    """Cross-validation score from per-fold (numerator, denominator) pairs.

    Skipped folds are simply absent from the list, excluding them from both
    sides of the ratio.
    """
    pairs = list(fold_errors)
    if not pairs:
        raise MetricError("N_CV undefined: no evaluated folds")
    num = sum(p[0] for p in pairs)
    den = sum(p[1] for p in pairs)
    if den <= 0.0:
        raise MetricError("N_CV undefined: test-set load volume is zero")
    return float(num / den)
