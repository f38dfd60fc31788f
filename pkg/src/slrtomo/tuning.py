"""Hyperparameter selection by cross-validation over link rows.

Candidates (rho1, rho2, beta) are scored by holding out groups of link
rows: the solver runs on the remaining links, the held-out loads are
predicted from the recovered traffic, and the absolute prediction errors
accumulate into the N_CV score. K-fold uses a seeded random partition of
the rows; Monte-Carlo draws repeated random test sets. Candidate
evaluations are independent of each other (shared read-only instance), so
the loop parallelizes trivially if ever needed; it runs sequentially here
for determinism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .driver import recover_sequence
from .errors import FoldInfeasibleError, ValidationError
from .metrics import n_cv
from .solver import SolverParams
from .tensor_store import RoutingMatrix, TomographyInstance, TrafficTensor

__all__ = [
    "CvPlan",
    "CvResult",
    "sample_candidates",
    "kfold_split",
    "montecarlo_splits",
    "cv_score",
    "fold_error_terms",
    "tune",
]


@dataclass(frozen=True)
class CvPlan:
    """Cross-validation layout plus the candidate list to score."""

    candidates: tuple
    kind: str = "kfold"
    K: int = 5
    test_ratio: float = 0.02
    repeats: int = 50
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "candidates",
                           tuple(tuple(float(x) for x in c) for c in self.candidates))
        if not self.candidates:
            raise ValidationError("candidate list must be nonempty")
        if any(len(c) != 3 for c in self.candidates):
            raise ValidationError("candidates must be (rho1, rho2, beta) triples")
        if self.kind not in ("kfold", "monte_carlo"):
            raise ValidationError(f"unknown CV kind {self.kind!r}")
        if self.kind == "kfold" and self.K < 2:
            raise ValidationError("K-fold CV needs K >= 2")
        if self.kind == "monte_carlo":
            if not (0.0 < self.test_ratio < 1.0):
                raise ValidationError("test_ratio must be in (0, 1)")
            if self.repeats < 1:
                raise ValidationError("repeats must be at least 1")


@dataclass
class CvResult:
    """Score table of one tuning run; ``best`` minimizes N_CV."""

    candidates: tuple
    scores: np.ndarray
    per_fold_errors: np.ndarray  # numerators, NaN where a fold was skipped
    fold_denominators: np.ndarray
    best_index: int

    @property
    def best(self) -> tuple[float, float, float]:
        return self.candidates[self.best_index]


def sample_candidates(count: int = 50, seed: int = 0,
                      rho_range=(1e-4, 1e2), beta_range=(1e-2, 1e2)) -> list:
    """Log-uniform (rho1, rho2, beta) samples from wide default ranges."""
    if count < 1:
        raise ValidationError("candidate count must be at least 1")
    rng = np.random.default_rng(seed)
    lo_r, hi_r = np.log10(rho_range[0]), np.log10(rho_range[1])
    lo_b, hi_b = np.log10(beta_range[0]), np.log10(beta_range[1])
    rho1 = 10.0 ** rng.uniform(lo_r, hi_r, count)
    rho2 = 10.0 ** rng.uniform(lo_r, hi_r, count)
    beta = 10.0 ** rng.uniform(lo_b, hi_b, count)
    return [(float(a), float(b), float(c)) for a, b, c in zip(rho1, rho2, beta)]


def kfold_split(M: int, K: int, seed: int) -> list[np.ndarray]:
    """Seeded random partition of link rows 0..M-1 into K balanced groups."""
    if not (2 <= K <= M):
        raise ValidationError(f"K must be in 2..{M}, got {K}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(M)
    return [np.sort(g) for g in np.array_split(perm, K)]


def montecarlo_splits(M: int, test_ratio: float, repeats: int, seed: int) -> list[np.ndarray]:
    """Repeated seeded random test sets of size ceil(test_ratio * M)."""
    size = int(np.ceil(test_ratio * M))
    size = min(max(size, 1), M - 1)
    rng = np.random.default_rng(seed)
    return [np.sort(rng.choice(M, size=size, replace=False)) for _ in range(repeats)]


def _reduced_instance(instance: TomographyInstance, test_rows: np.ndarray) -> TomographyInstance:
    """Drop the held-out link rows from routing and loads."""
    test_rows = np.asarray(test_rows, dtype=np.int64)
    if test_rows.size == 0 or test_rows.size >= instance.M:
        raise FoldInfeasibleError("test set must be a nonempty proper subset of links")
    keep = np.setdiff1d(np.arange(instance.M), test_rows)
    if instance.S > keep.size + 1:
        raise FoldInfeasibleError(
            f"training links too few: S={instance.S} > M+1={keep.size + 1}")
    remap = -np.ones(instance.M, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    sel = remap[instance.routing.links] >= 0
    routing = RoutingMatrix(
        S=instance.S, M=keep.size,
        links=remap[instance.routing.links[sel]],
        ods=instance.routing.ods[sel],
    )
    return TomographyInstance(
        S=instance.S, M=keep.size, T=instance.T, routing=routing,
        link_loads=instance.link_loads[keep, :], mask=instance.mask,
        truth=None,
    )


def fold_error_terms(instance: TomographyInstance, test_rows: np.ndarray,
                     estimate: TrafficTensor) -> tuple[float, float]:
    """(sum |predicted - measured|, sum measured) over held-out rows."""
    test_rows = np.asarray(test_rows, dtype=np.int64)
    sel = np.isin(instance.routing.links, test_rows)
    links = instance.routing.links[sel]
    i0 = instance.routing.ods[sel] % instance.S
    j0 = instance.routing.ods[sel] // instance.S
    num = 0.0
    for k in range(instance.T):
        predicted = np.zeros(instance.M)
        np.add.at(predicted, links, estimate.values[i0, j0, k])
        num += np.abs(predicted[test_rows] - instance.link_loads[test_rows, k]).sum()
    den = float(instance.link_loads[test_rows, :].sum())
    return float(num), den


def cv_score(instance: TomographyInstance, params: SolverParams,
             test_rows: np.ndarray, period: int | None = None, *,
             prior_mode: str = "transfer",
             backend: str | None = None) -> tuple[float, float]:
    """Evaluate one fold: recover on the training links, score the test rows.

    Raises :class:`FoldInfeasibleError` when dropping the rows leaves too
    few training links.
    """
    reduced = _reduced_instance(instance, test_rows)
    estimate, _ = recover_sequence(
        reduced, params, period, prior_mode=prior_mode, backend=backend,
        compute_nmae=False,
    )
    return fold_error_terms(instance, test_rows, estimate)


def tune(instance: TomographyInstance, plan: CvPlan,
         base_params: SolverParams | None = None, period: int | None = None, *,
         prior_mode: str = "transfer", backend: str | None = None) -> CvResult:
    """Score every candidate under the plan and return the full table.

    All candidates see the same seeded splits. A candidate whose folds are
    all infeasible scores +inf; ties break by candidate order.
    """
    if base_params is None:
        base_params = SolverParams()
    if plan.kind == "kfold":
        splits = kfold_split(instance.M, plan.K, plan.seed)
    else:
        splits = montecarlo_splits(instance.M, plan.test_ratio, plan.repeats, plan.seed)

    C, F = len(plan.candidates), len(splits)
    per_fold = np.full((C, F), np.nan)
    denominators = np.array(
        [float(instance.link_loads[rows, :].sum()) for rows in splits])
    scores = np.full(C, np.inf)

    for ci, (rho1, rho2, beta) in enumerate(plan.candidates):
        params = base_params.replace(rho1=rho1, rho2=rho2, beta=beta)
        pairs = []
        for fi, rows in enumerate(splits):
            try:
                num, den = cv_score(instance, params, rows, period,
                                    prior_mode=prior_mode, backend=backend)
            except FoldInfeasibleError:
                continue
            per_fold[ci, fi] = num
            pairs.append((num, den))
        if pairs:
            scores[ci] = n_cv(pairs)

    best_index = int(np.argmin(scores))  # argmin takes the first on ties
    return CvResult(candidates=plan.candidates, scores=scores,
                    per_fold_errors=per_fold, fold_denominators=denominators,
                    best_index=best_index)
