"""Independent reference solvers used to cross-check the ADMM path.

Nothing here reuses solver formulas: the primal problem is attacked
directly with a projected subgradient method whose feasibility projection
is Dykstra's alternation between the dense affine constraints and the
nonnegative orthant.
"""

import numpy as np


def projected_subgradient_primal(problem, alpha, iters=4000, proj_rounds=12,
                                 step_scale=0.5):
    """Best primal objective found by projected subgradient descent.

    Minimizes ||X||_* + alpha*||X - A||_F^2 over the dense feasible set
    {R vec(X) = L, X = 0 on the mask, X >= 0}.
    """
    S = problem.operator.S
    A = problem.A
    R = problem.operator.routing.dense()
    rows = [R]
    rhs = [problem.L]
    for i in range(S):
        for j in range(S):
            if problem.omega[i, j]:
                e = np.zeros(S * S)
                e[j * S + i] = 1.0
                rows.append(e[None, :])
                rhs.append(np.zeros(1))
    C = np.vstack(rows)
    b = np.concatenate(rhs)
    C_pinv = np.linalg.pinv(C)

    def proj_affine(x):
        return x - C_pinv @ (C @ x - b)

    def proj_feasible(x, rounds):
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        for _ in range(rounds):
            y = proj_affine(x + p)
            p = x + p - y
            z = np.maximum(y + q, 0.0)
            q = y + q - z
            x = z
        return x

    def objective(x):
        X = x.reshape(S, S, order="F")
        return float(np.linalg.svd(X, compute_uv=False).sum()
                     + alpha * np.sum((X - A) ** 2))

    x = proj_feasible(np.zeros(S * S), rounds=60)
    best = objective(x)
    for k in range(1, iters + 1):
        X = x.reshape(S, S, order="F")
        U, _, Vh = np.linalg.svd(X)
        g = (U @ Vh + 2.0 * alpha * (X - A)).ravel(order="F")
        step = step_scale / np.sqrt(k)
        x = proj_feasible(x - step * g / max(np.linalg.norm(g), 1e-12),
                          rounds=proj_rounds)
        if k % 200 == 0:
            best = min(best, objective(x))
    best = min(best, objective(proj_feasible(x, rounds=60)))
    return best
