"""Reference estimators: the rank-1 gravity model and its KL refinement.

Gravity treats origins and destinations as independent, X = out*in^T/total.
Link loads alone do not expose the node totals, so they are fitted by
alternating nonnegative least squares on the rank-1 parameterization of the
link equations. Tomo-gravity then pulls the gravity prior toward exact
link-load consistency by multiplicative iterative scaling (the classic
KL-projection scheme), never resurrecting entries the prior sets to zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from . import kernels
from .errors import ValidationError
from .operators import RoutingOperator

__all__ = [
    "GravityPrior",
    "rank1_matrix",
    "fit_gravity_totals",
    "gravity_estimate",
    "tomo_gravity",
    "InfeasibleLinkWarning",
]


class InfeasibleLinkWarning(UserWarning):
    """A link has positive measured load but zero prior mass to scale."""


def rank1_matrix(out_totals: np.ndarray, in_totals: np.ndarray, total: float) -> np.ndarray:
    """Assemble the gravity matrix out*in^T/total (zero matrix when total=0)."""
    out_totals = np.asarray(out_totals, dtype=np.float64)
    in_totals = np.asarray(in_totals, dtype=np.float64)
    if total <= 0.0:
        return np.zeros((out_totals.shape[0], in_totals.shape[0]))
    return np.outer(out_totals, in_totals) / total


@dataclass(frozen=True)
class GravityPrior:
    """Per-node ingress/egress volumes backing a rank-1 traffic estimate."""

    out_totals: np.ndarray
    in_totals: np.ndarray
    total: float

    def __post_init__(self):
        out_t = np.asarray(self.out_totals, dtype=np.float64)
        in_t = np.asarray(self.in_totals, dtype=np.float64)
        object.__setattr__(self, "out_totals", out_t)
        object.__setattr__(self, "in_totals", in_t)
        if out_t.min(initial=0.0) < 0 or in_t.min(initial=0.0) < 0:
            raise ValidationError("node totals must be nonnegative")
        if abs(out_t.sum() - in_t.sum()) > 1e-6 * max(self.total, 1e-300):
            raise ValidationError("out/in totals are not balanced")

    def matrix(self) -> np.ndarray:
        return rank1_matrix(self.out_totals, self.in_totals, self.total)


def fit_gravity_totals(L: np.ndarray, operator: RoutingOperator,
                       sweeps: int = 50, tol: float = 1e-12) -> GravityPrior:
    """Fit node totals by alternating NNLS on the rank-1 link equations.

    With X = u v^T the link map is linear in each factor:
    forward(u v^T) = (sum_j v_j R_j) u = (columns R_j u) v. Starting from
    v = 1 the two NNLS problems alternate until the factors settle.
    """
    L = np.asarray(L, dtype=np.float64)
    S, M = operator.S, operator.M
    if L.min(initial=0.0) < 0:
        raise ValidationError("link loads must be nonnegative")
    if not L.any():
        zero = np.zeros(S)
        return GravityPrior(out_totals=zero, in_totals=zero.copy(), total=0.0)

    links, rows, cols = operator.links, operator.od_rows, operator.od_cols
    u = np.zeros(S)
    v = np.ones(S)
    for _ in range(sweeps):
        # forward(u v^T) = B_v u with B_v[m, i] = sum of v_j over entries
        # (m, i, j); assembled from the routing triplets, never densifying R
        B = np.zeros((M, S))
        np.add.at(B, (links, rows), v[cols])
        u_new = nnls(B, L)[0]
        C = np.zeros((M, S))
        np.add.at(C, (links, cols), u_new[rows])
        v_new = nnls(C, L)[0]
        drift = np.abs(np.outer(u_new, v_new) - np.outer(u, v)).max()
        u, v = u_new, v_new
        if drift <= tol * (1.0 + np.abs(np.outer(u, v)).max()):
            break

    out_totals = u * v.sum()
    in_totals = v * u.sum()
    total = u.sum() * v.sum()
    return GravityPrior(out_totals=out_totals, in_totals=in_totals, total=total)


def gravity_estimate(L: np.ndarray, operator: RoutingOperator) -> np.ndarray:
    """Rank-1 traffic estimate from link loads (the gravity model)."""
    return fit_gravity_totals(L, operator).matrix()


def _link_groups(operator: RoutingOperator):
    """CSR-style (indptr, od_i, od_j) with entries grouped by link."""
    links = operator.links
    counts = np.bincount(links, minlength=operator.M)
    indptr = np.zeros(operator.M + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, operator.od_rows, operator.od_cols


def _mart_numpy(indptr, od_i, od_j, L, X, cycles, tol):
    M = L.shape[0]
    norm_inf = L.max(initial=0.0)
    for c in range(cycles):
        for m in range(M):
            lo, hi = indptr[m], indptr[m + 1]
            if lo == hi:
                continue
            ii, jj = od_i[lo:hi], od_j[lo:hi]
            model = X[ii, jj].sum()
            if model <= 0.0:
                continue
            ratio = L[m] / model
            if ratio != 1.0:
                X[ii, jj] *= ratio
        worst = 0.0
        for m in range(M):
            lo, hi = indptr[m], indptr[m + 1]
            model = X[od_i[lo:hi], od_j[lo:hi]].sum()
            if (lo == hi or model <= 0.0) and L[m] > 0.0:
                continue  # structurally infeasible link, excluded
            worst = max(worst, abs(model - L[m]))
        if worst / (1.0 + norm_inf) < tol:
            return c + 1
    return cycles


def tomo_gravity(L: np.ndarray, operator: RoutingOperator, prior: np.ndarray,
                 iters: int = 500, tol: float = 1e-6, *,
                 backend: str | None = None) -> np.ndarray:
    """Refine a nonnegative prior toward link-load consistency.

    Approximately minimizes the KL divergence from the prior subject to the
    link equations by cycling over links and scaling each link's OD entries
    by measured/modeled load. Zero-prior entries stay exactly zero. Links
    with positive load but no prior mass are reported via
    :class:`InfeasibleLinkWarning` and skipped.
    """
    L = np.asarray(L, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (operator.S, operator.S):
        raise ValidationError("prior must be S x S")
    if prior.min(initial=0.0) < 0:
        raise ValidationError("prior must be nonnegative")
    if L.shape != (operator.M,):
        raise ValidationError(f"L must have length {operator.M}")

    indptr, od_i, od_j = _link_groups(operator)
    X = prior.copy()

    dead = []
    for m in range(operator.M):
        lo, hi = indptr[m], indptr[m + 1]
        if L[m] > 0.0 and (lo == hi or X[od_i[lo:hi], od_j[lo:hi]].sum() <= 0.0):
            dead.append(m + 1)
    if dead:
        warnings.warn(
            f"links with positive load but zero prior mass skipped: {dead}",
            InfeasibleLinkWarning,
            stacklevel=2,
        )

    chosen = kernels.resolve_backend(backend)
    if chosen == "numba":
        kernels.mart_cycles(indptr, od_i, od_j, L, X, int(iters), float(tol))
    else:
        _mart_numpy(indptr, od_i, od_j, L, X, int(iters), float(tol))
    return X
