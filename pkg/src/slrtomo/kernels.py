"""JIT-compiled hot loops and backend selection.

The per-interval ADMM spends essentially all its time in a tight loop of
routing products, elementwise block updates, and one small SVD; fusing the
whole sweep into a single nopython kernel removes the per-operation Python
overhead that dominates at small network sizes. A pure-numpy fallback
(:func:`slrtomo.solver._solve_numpy`, composed from the individual update
functions) computes the same iteration.

Set ``SLRTOMO_BACKEND=numpy`` to force the fallback, ``numba`` to require
the JIT (raising if numba is unavailable). The default uses numba when it
imports.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ValidationError

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


BACKEND_ENV_VAR = "SLRTOMO_BACKEND"

STATUS_CONVERGED = 0
STATUS_MAXITER = 1
STATUS_NONFINITE = 2
STATUS_DIVERGED = 3


def resolve_backend(name: str | None = None) -> str:
    """Pick the compute backend: explicit arg > env var > numba-if-present."""
    if name is None:
        name = os.environ.get(BACKEND_ENV_VAR, "").strip().lower() or None
    if name is None:
        return "numba" if HAVE_NUMBA else "numpy"
    if name not in ("numba", "numpy"):
        raise ValidationError(f"unknown backend {name!r} (use 'numba' or 'numpy')")
    if name == "numba" and not HAVE_NUMBA:
        raise ValidationError("numba backend requested but numba is not installed")
    return name


@njit(cache=True)
def _forward(links, od_i, od_j, X, M):
    q = np.zeros(M)
    for t in range(links.shape[0]):
        q[links[t]] += X[od_i[t], od_j[t]]
    return q


@njit(cache=True)
def _adjoint(links, od_i, od_j, q, S):
    Y = np.zeros((S, S))
    for t in range(links.shape[0]):
        Y[od_i[t], od_j[t]] += q[links[t]]
    return Y


@njit(cache=True)
def _ball_project(T):
    # mirrors operators.project_spectral_ball operation-for-operation so the
    # two backends stay bit-identical
    fro = np.linalg.norm(T)
    if fro <= 1.0:
        return T.copy()
    if fro <= 1e3:
        lam, V = np.linalg.eigh(T.T @ T)
        if lam[-1] <= 1.0:
            return T.copy()
        k = np.searchsorted(lam, 1.0, side="right")
        Vk = np.ascontiguousarray(V[:, k:])
        sig = np.sqrt(lam[k:])
        Uk = (T @ Vk) / sig
        return T - (Uk * (sig - 1.0)) @ Vk.T
    U, s, Vh = np.linalg.svd(T, full_matrices=False)
    smax = s[0]
    for i in range(s.shape[0]):
        if s[i] < 1e-12 * smax:
            s[i] = 0.0
        elif s[i] > 1.0:
            s[i] = 1.0
    return (U * s) @ Vh


@njit(cache=True)
def _admm_loop(links, od_i, od_j, HQ, lam, L, mask, maskc, A, alpha, beta,
               tau, eps, max_iter, div_factor):
    S = mask.shape[0]
    M = L.shape[0]
    U = np.zeros((S, S))
    Q = np.zeros(M)
    V = np.zeros((S, S))
    W = np.zeros((S, S))
    G = np.zeros((S, S))
    X = np.zeros((S, S))
    trace = np.zeros((max_iter, 7))
    norm_L = np.linalg.norm(L)
    fwd_X = np.zeros(M)
    wden = 1.0 / (2.0 * alpha) + beta
    eta_min = np.inf
    status = STATUS_MAXITER
    iters = max_iter

    for it in range(1, max_iter + 1):
        AQ = _adjoint(links, od_i, od_j, Q, S)
        U = mask * (-(V + AQ + W - G + X / beta)) + maskc * U
        PU = mask * U
        Q = -(_forward(links, od_i, od_j, V + PU + W - G, M) - HQ @ Q
              + (fwd_X - L) / beta) / lam
        AQ = _adjoint(links, od_i, od_j, Q, S)
        V = np.maximum(0.0, -(AQ + PU + W - G) - X / beta)
        Q = -(_forward(links, od_i, od_j, V + PU + W - G, M) - HQ @ Q
              + (fwd_X - L) / beta) / lam
        AQ = _adjoint(links, od_i, od_j, Q, S)
        U = mask * (-(V + AQ + W - G + X / beta)) + maskc * U
        PU = mask * U
        W = (A - X - beta * (V + AQ + PU - G)) / wden
        ball_in = V + AQ + PU + W + X / beta
        if not np.isfinite(ball_in).all():
            status = STATUS_NONFINITE
            iters = it
            break
        G = _ball_project(ball_in)
        W = (A - X - beta * (V + AQ + PU - G)) / wden
        gamma = PU + V + W + AQ - G
        X = X + tau * beta * gamma
        fwd_X = _forward(links, od_i, od_j, X, M)

        # cone residuals of V and G vanish by construction after projection
        p1 = np.linalg.norm(fwd_X - L) / (1.0 + norm_L)
        p2 = np.linalg.norm(mask * X) / (1.0 + np.linalg.norm(X))
        d = np.linalg.norm(gamma) / (1.0 + np.linalg.norm(G))
        eta = max(p1, p2, d)
        trace[it - 1, 0] = it
        trace[it - 1, 1] = p1
        trace[it - 1, 2] = p2
        trace[it - 1, 3] = d
        trace[it - 1, 4] = 0.0
        trace[it - 1, 5] = 0.0
        trace[it - 1, 6] = eta
        iters = it
        if not np.isfinite(eta):
            status = STATUS_NONFINITE
            break
        if eta < eta_min:
            eta_min = eta
        elif eta > div_factor * eta_min:
            status = STATUS_DIVERGED
            break
        if eta < eps:
            status = STATUS_CONVERGED
            break
    return U, Q, V, W, G, X, trace[:iters], iters, status


def admm_interval_numba(links, od_i, od_j, HQ, lam, L, mask_f, A, alpha, beta,
                        tau, eps, max_iter, div_factor):
    """Run the fused ADMM loop; thin wrapper fixing dtypes for the kernel."""
    return _admm_loop(
        np.ascontiguousarray(links, dtype=np.int64),
        np.ascontiguousarray(od_i, dtype=np.int64),
        np.ascontiguousarray(od_j, dtype=np.int64),
        np.ascontiguousarray(HQ, dtype=np.float64),
        float(lam),
        np.ascontiguousarray(L, dtype=np.float64),
        np.ascontiguousarray(mask_f, dtype=np.float64),
        np.ascontiguousarray(1.0 - mask_f, dtype=np.float64),
        np.ascontiguousarray(A, dtype=np.float64),
        float(alpha), float(beta), float(tau), float(eps),
        int(max_iter), float(div_factor),
    )


@njit(cache=True)
def mart_cycles(indptr, od_i, od_j, L, X, cycles, tol):
    """Multiplicative scaling sweeps toward link-load consistency.

    Cycles over links in index order; the OD entries on link m scale by
    L[m] / modeled[m]. Links with positive load but zero modeled mass are
    skipped (recorded infeasible by the caller up front). Returns the
    number of completed cycles.
    """
    M = L.shape[0]
    done = 0
    for c in range(cycles):
        for m in range(M):
            lo, hi = indptr[m], indptr[m + 1]
            if lo == hi:
                continue
            model = 0.0
            for t in range(lo, hi):
                model += X[od_i[t], od_j[t]]
            if model <= 0.0:
                continue  # nothing to scale (infeasible or all-zero prior)
            ratio = L[m] / model
            if ratio != 1.0:
                for t in range(lo, hi):
                    X[od_i[t], od_j[t]] *= ratio
        done = c + 1
        # convergence: max absolute link mismatch, normalized
        worst = 0.0
        norm_inf = 0.0
        for m in range(M):
            if L[m] > norm_inf:
                norm_inf = L[m]
        for m in range(M):
            lo, hi = indptr[m], indptr[m + 1]
            model = 0.0
            for t in range(lo, hi):
                model += X[od_i[t], od_j[t]]
            mismatch = abs(model - L[m])
            if lo == hi and L[m] > 0.0:
                continue  # structurally infeasible link, excluded
            if model <= 0.0 and L[m] > 0.0:
                continue
            if mismatch > worst:
                worst = mismatch
        if worst / (1.0 + norm_inf) < tol:
            break
    return done
