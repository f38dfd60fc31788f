"""Linear-operator algebra of the recovery model.

The routing map sends a spatial matrix X to its link loads,
q = R vec(X) = sum_j R_j X e_j, and its adjoint scatters a load vector
back, Y = sum_j R_j^T q e_j^T. Their composition on the load side is the
M x M Gram matrix sum_j R_j R_j^T, whose largest eigenvalue drives the
proximal term of the solver's Q-step.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .errors import ValidationError
from .tensor_store import RoutingMatrix

__all__ = [
    "RoutingOperator",
    "estimate_lambda_max",
    "project_mask",
    "project_nonneg",
    "project_spectral_ball",
]

SPECTRAL_RANK_CUTOFF = 1e-12
# Above this Frobenius norm the eigendecomposition route cannot resolve
# singular values near 1 (absolute eigenvalue error scales with eps*s_max^2),
# so the projection falls back to a full SVD.
BALL_FAST_PATH_LIMIT = 1e3


def estimate_lambda_max(gram: np.ndarray, rel_tol: float = 1e-8,
                        safety: float = 1e-6, max_iter: int = 10000) -> float:
    """Upper bound on the largest eigenvalue of a symmetric PSD matrix.

    Power iteration from the normalized all-ones vector until the Rayleigh
    quotient settles to ``rel_tol``, inflated by ``1 + safety`` so the
    result dominates the true eigenvalue (the solver needs
    lambda*I - gram to stay PSD).
    """
    gram = np.asarray(gram, dtype=np.float64)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise ValidationError("gram matrix must be square")
    scale = np.abs(gram).max(initial=0.0)
    if np.abs(gram - gram.T).max(initial=0.0) > 1e-10 * (1.0 + scale):
        raise ValidationError("gram matrix must be symmetric")
    m = gram.shape[0]
    v = np.ones(m) / np.sqrt(m)
    lam = 0.0
    for _ in range(max_iter):
        w = gram @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        lam_new = float(v @ w)
        v = w / nw
        if abs(lam_new - lam) <= rel_tol * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
    return lam * (1.0 + safety)


class RoutingOperator:
    """Routing map, its adjoint, and the cached Gram-side quantities.

    Immutable after construction; all methods are pure functions of their
    inputs, so one operator may be shared across concurrent solver runs.
    """

    def __init__(self, routing: RoutingMatrix):
        self.routing = routing
        self.S = routing.S
        self.M = routing.M
        ones = np.ones(routing.links.shape[0])
        self._csr = sparse.csr_matrix(
            (ones, (routing.links, routing.ods)), shape=(routing.M, routing.N)
        )
        self._csr_t = self._csr.T.tocsr()
        self.gram = (self._csr @ self._csr.T).toarray()
        self.lambda_max = estimate_lambda_max(self.gram)
        self.H_Q = self.lambda_max * np.eye(self.M) - self.gram
        # index triplets for the jit kernels: entry t routes OD (i0, j0)
        # over link links[t]
        self.links = routing.links
        self.od_rows = (routing.ods % self.S).astype(np.int64)
        self.od_cols = (routing.ods // self.S).astype(np.int64)

    def forward_map(self, X: np.ndarray) -> np.ndarray:
        """q = R vec(X): per-link load of the spatial matrix X."""
        X = np.asarray(X)
        if X.shape != (self.S, self.S):
            raise ValidationError(f"expected {self.S} x {self.S} matrix, got {X.shape}")
        return self._csr @ X.ravel(order="F")

    def adjoint_map(self, q: np.ndarray) -> np.ndarray:
        """Y with column j = R_j^T q: adjoint of the routing map."""
        q = np.asarray(q)
        if q.shape != (self.M,):
            raise ValidationError(f"expected length-{self.M} vector, got {q.shape}")
        return (self._csr_t @ q).reshape(self.S, self.S, order="F")


def project_mask(X: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Keep entries on the index set omega (boolean array), zero the rest."""
    return np.where(omega, X, 0.0)


def project_nonneg(X: np.ndarray) -> np.ndarray:
    """Elementwise projection onto the nonnegative orthant."""
    return np.maximum(X, 0.0)


def project_spectral_ball(X: np.ndarray) -> np.ndarray:
    """Projection onto the unit spectral-norm ball.

    Only singular values above 1 change, so for well-scaled inputs the
    projection is computed from the eigendecomposition of X^T X restricted
    to eigenvalues above 1 (roughly half the cost of a full SVD, and the
    solver calls this every iteration). Inputs whose Frobenius norm is
    already <= 1 pass through untouched; very large inputs take the plain
    economical-SVD route with tiny singular values (below 1e-12 of the
    largest) zeroed.
    """
    X = np.asarray(X, dtype=np.float64)
    if not np.isfinite(X).all():
        raise np.linalg.LinAlgError("cannot project matrix with non-finite entries")
    fro = np.linalg.norm(X)
    if fro <= 1.0:  # sigma_max <= ||X||_F
        return X.copy()
    if fro <= BALL_FAST_PATH_LIMIT:
        lam, V = np.linalg.eigh(X.T @ X)
        if lam[-1] <= 1.0:
            return X.copy()
        k = np.searchsorted(lam, 1.0, side="right")
        Vk = V[:, k:]
        sig = np.sqrt(lam[k:])
        Uk = (X @ Vk) / sig
        return X - (Uk * (sig - 1.0)) @ Vk.T
    U, s, Vh = np.linalg.svd(X, full_matrices=False)
    s = np.where(s < SPECTRAL_RANK_CUTOFF * s[0], 0.0, s)
    return (U * np.minimum(s, 1.0)) @ Vh
