"""Per-interval dual solver: Schur-complement-based semi-proximal ADMM.

The per-interval model estimates a spatial traffic matrix X from its link
loads L by minimizing ``||X||_* + alpha ||X - A||_F^2`` subject to the link
equations, known-zero entries, and nonnegativity, where A is the weighted
prior built from the previous-interval and week-ago estimates. The solver
works on the dual, which splits into five blocks:

* U  — multiplier of the known-zero constraint (support inside the mask)
* Q  — multiplier of the link equations (length M)
* V  — multiplier of nonnegativity (elementwise >= 0)
* W  — multiplier of the quadratic coupling to the prior
* G  — spectral-ball block (||G||_2 <= 1), the subgradient of the nuclear
  norm at the solution

with the primal estimate X recovered as the multiplier of the dual's single
linear constraint Gamma(U,V,W,Q,G) = 0. Each sweep updates
U -> Q -> V -> Q -> U (with proximal anchors on U and Q), then
W -> G -> W, then takes the multiplier step X += tau*beta*Gamma. Every
block optimum is closed-form, so an iteration costs a handful of routing
products plus one S x S SVD.

Sign note: completing the square in the G subproblem
``min_{||G||_2<=1} -<X, G> + (beta/2)||Gamma||^2`` gives the projection
target ``V + adjoint(Q) + P_mask(U) + W + X/beta``; the plus sign on
X/beta is forced by the KKT conditions (G must align with the nuclear-norm
subdifferential at X), and the solver does not converge to optima without
it.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import kernels
from .errors import DivergenceError, ValidationError
from .operators import (
    RoutingOperator,
    project_mask,
    project_nonneg,
    project_spectral_ball,
)

__all__ = [
    "GOLDEN_RATIO",
    "DIVERGENCE_FACTOR",
    "SolverParams",
    "SolverState",
    "IntervalProblem",
    "IntervalSolution",
    "Residuals",
    "update_U",
    "update_Q",
    "update_V",
    "update_W",
    "update_G",
    "multiplier_step",
    "kkt_residuals",
    "primal_objective",
    "dual_objective",
    "duality_gap",
    "effective_beta",
    "solve_interval",
    "trace_to_csv",
]

GOLDEN_RATIO = (1.0 + np.sqrt(5.0)) / 2.0
DIVERGENCE_FACTOR = 1e6
TRACE_HEADER = "iter,eta_p1,eta_p2,eta_d,eta_v,eta_g,eta"


@dataclass(frozen=True)
class SolverParams:
    """Tunable knobs of the per-interval solver.

    rho1 weights continuity (previous interval), rho2 periodicity (week
    ago); their sum alpha must be positive since the dual objective divides
    by 4*alpha. tau is the multiplier step length, valid on
    (0, (1+sqrt(5))/2). beta is the penalty parameter; when the loads are
    far from unit scale it is rescaled by ||L||/M at solve time (see
    :func:`effective_beta`).
    """

    rho1: float = 0.5
    rho2: float = 0.5
    beta: float = 1.0
    tau: float = 1.618
    epsilon: float = 1e-6
    max_iter: int = 5000

    def __post_init__(self):
        if self.rho1 < 0 or self.rho2 < 0:
            raise ValidationError("rho1 and rho2 must be nonnegative")
        if self.rho1 + self.rho2 <= 0:
            raise ValidationError("rho1 + rho2 must be positive")
        if self.beta <= 0:
            raise ValidationError("beta must be positive")
        if not (0.0 < self.tau < GOLDEN_RATIO):
            raise ValidationError(f"tau must lie in (0, {GOLDEN_RATIO:.10f})")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")

    def replace(self, **kw) -> "SolverParams":
        data = {k: getattr(self, k) for k in
                ("rho1", "rho2", "beta", "tau", "epsilon", "max_iter")}
        data.update(kw)
        return SolverParams(**data)


@dataclass(frozen=True)
class IntervalProblem:
    """One interval's data: operator, loads, zero set, and prior.

    ``A`` is the aggregate prior (rho1*X_bar + rho2*X_hat) / (rho1+rho2)
    when both priors exist; :meth:`build` applies the missing-prior policy.
    """

    operator: RoutingOperator
    L: np.ndarray
    omega: np.ndarray  # boolean (S, S), True on known zeros
    A: np.ndarray
    alpha: float
    X_bar: np.ndarray | None = None
    X_hat: np.ndarray | None = None

    def __post_init__(self):
        S, M = self.operator.S, self.operator.M
        L = np.asarray(self.L, dtype=np.float64)
        A = np.asarray(self.A, dtype=np.float64)
        omega = np.asarray(self.omega, dtype=bool)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "omega", omega)
        if L.shape != (M,):
            raise ValidationError(f"L must have length {M}")
        if omega.shape != (S, S):
            raise ValidationError(f"omega must be {S} x {S}")
        if A.shape != (S, S) or not np.isfinite(A).all():
            raise ValidationError(f"prior A must be finite {S} x {S}")
        if self.alpha <= 0:
            raise ValidationError("alpha must be positive")

    @classmethod
    def build(cls, operator, L, omega, rho1, rho2, X_bar=None, X_hat=None,
              fallback_prior=None, prior_mode="transfer") -> "IntervalProblem":
        """Assemble the prior from whatever history is available.

        With ``prior_mode="transfer"`` (default) a missing week-ago prior
        hands its weight to the previous-interval prior, keeping
        alpha = rho1 + rho2 constant across intervals; with ``"drop"`` the
        missing term is removed and alpha shrinks to rho1. When no history
        exists at all, A falls back to ``fallback_prior`` (or zeros) at
        full weight.
        """
        if prior_mode not in ("transfer", "drop"):
            raise ValidationError(f"unknown prior_mode {prior_mode!r}")
        S = operator.S
        alpha = rho1 + rho2
        if X_bar is not None and X_hat is not None:
            A = (rho1 * np.asarray(X_bar) + rho2 * np.asarray(X_hat)) / alpha
        elif X_bar is not None:
            A = np.asarray(X_bar, dtype=np.float64)
            if prior_mode == "drop":
                if rho1 <= 0:
                    raise ValidationError(
                        "prior_mode='drop' needs rho1 > 0 when the week-ago prior is missing"
                    )
                alpha = rho1
        else:
            A = np.zeros((S, S)) if fallback_prior is None else np.asarray(fallback_prior)
        return cls(operator=operator, L=L, omega=omega, A=A, alpha=alpha,
                   X_bar=X_bar, X_hat=X_hat)


@dataclass
class SolverState:
    """Mutable working set of one solver run (never shared across runs)."""

    U: np.ndarray
    Q: np.ndarray
    V: np.ndarray
    W: np.ndarray
    G: np.ndarray
    X: np.ndarray
    iter: int = 0
    residuals: list = field(default_factory=list)

    @classmethod
    def zeros(cls, S: int, M: int) -> "SolverState":
        return cls(U=np.zeros((S, S)), Q=np.zeros(M), V=np.zeros((S, S)),
                   W=np.zeros((S, S)), G=np.zeros((S, S)), X=np.zeros((S, S)))


class Residuals(NamedTuple):
    p1: float
    p2: float
    d: float
    v: float
    g: float
    eta: float


# ---------------------------------------------------------------------------
# closed-form block updates


def update_U(state: SolverState, problem: IntervalProblem, beta: float) -> np.ndarray:
    """Minimize the U subproblem (semi-proximal term I - P_mask) exactly.

    On the mask the optimum is -(V + adjoint(Q) + W - G + X/beta); off the
    mask the proximal term freezes the previous iterate, so a zero start
    keeps U supported inside the mask forever.
    """
    core = -(state.V + problem.operator.adjoint_map(state.Q) + state.W
             - state.G + state.X / beta)
    return np.where(problem.omega, core, state.U)


def update_Q(state: SolverState, problem: IntervalProblem, beta: float,
             anchor_Q: np.ndarray) -> np.ndarray:
    """Minimize the Q subproblem with proximal term (beta/2)||Q-anchor||_{H_Q}^2.

    H_Q = lambda_max*I - gram turns the stationarity system into a scalar
    multiple of the identity, so the solve is a single routing product.
    ``anchor_Q`` is the half-step anchor: Q^k on the first sweep pass,
    Q^{k+1/2} on the second.
    """
    op = problem.operator
    inner = state.V + project_mask(state.U, problem.omega) + state.W - state.G
    rhs = op.forward_map(inner) - op.H_Q @ anchor_Q \
        + (op.forward_map(state.X) - problem.L) / beta
    return -rhs / op.lambda_max


def update_V(state: SolverState, problem: IntervalProblem, beta: float) -> np.ndarray:
    """Entrywise nonnegative minimizer of the V subproblem (no proximal term)."""
    rest = problem.operator.adjoint_map(state.Q) \
        + project_mask(state.U, problem.omega) + state.W - state.G
    return np.maximum(0.0, -rest - state.X / beta)


def update_W(state: SolverState, problem: IntervalProblem, beta: float) -> np.ndarray:
    """Closed-form minimizer of the quadratic W subproblem (no proximal term)."""
    rest = state.V + problem.operator.adjoint_map(state.Q) \
        + project_mask(state.U, problem.omega) - state.G
    return (problem.A - state.X - beta * rest) / (1.0 / (2.0 * problem.alpha) + beta)


def update_G(state: SolverState, problem: IntervalProblem, beta: float) -> np.ndarray:
    """Spectral-ball projection of V + adjoint(Q) + P_mask(U) + W + X/beta.

    See the module docstring for why X enters with a plus sign here.
    """
    target = state.V + problem.operator.adjoint_map(state.Q) \
        + project_mask(state.U, problem.omega) + state.W + state.X / beta
    return project_spectral_ball(target)


def multiplier_step(state: SolverState, problem: IntervalProblem, beta: float,
                    tau: float) -> np.ndarray:
    """X + tau*beta*Gamma with Gamma = P_mask(U) + V + W + adjoint(Q) - G."""
    gamma = project_mask(state.U, problem.omega) + state.V + state.W \
        + problem.operator.adjoint_map(state.Q) - state.G
    return state.X + tau * beta * gamma


def kkt_residuals(state: SolverState, problem: IntervalProblem) -> Residuals:
    """Normalized KKT residuals; the solver stops when their max drops
    below epsilon.

    p1: link feasibility, p2: mask feasibility, d: dual constraint
    Gamma = 0, v/g: cone membership of V and G. All norms Frobenius.
    """
    op = problem.operator
    norm = np.linalg.norm
    PU = project_mask(state.U, problem.omega)
    gamma = PU + state.V + state.W + op.adjoint_map(state.Q) - state.G
    p1 = norm(op.forward_map(state.X) - problem.L) / (1.0 + norm(problem.L))
    p2 = norm(project_mask(state.X, problem.omega)) / (1.0 + norm(state.X))
    d = norm(gamma) / (1.0 + norm(state.G))
    v = norm(state.V - project_nonneg(state.V)) / (1.0 + norm(state.V))
    g = norm(state.G - project_spectral_ball(state.G)) / (1.0 + norm(state.G))
    eta = max(p1, p2, d, v, g)
    return Residuals(p1, p2, d, v, g, eta)


# ---------------------------------------------------------------------------
# objectives


def primal_objective(X: np.ndarray, A: np.ndarray, alpha: float) -> float:
    """||X||_* + alpha * ||X - A||_F^2."""
    s = np.linalg.svd(X, compute_uv=False)
    return float(s.sum() + alpha * np.linalg.norm(X - A) ** 2)


def dual_objective(W: np.ndarray, Q: np.ndarray, A: np.ndarray, alpha: float,
                   L: np.ndarray) -> float:
    """Dual-problem objective ||W - 2*alpha*A||_F^2 / (4*alpha) - <Q, L>."""
    return float(np.linalg.norm(W - 2.0 * alpha * A) ** 2 / (4.0 * alpha)
                 - Q @ L)


def duality_gap(primal: float, dual: float, A: np.ndarray, alpha: float) -> float:
    """|primal - (alpha*||A||^2 - dual)|: the strong-duality gap.

    The dual problem minimizes the negated Lagrangian dual function shifted
    by the constant alpha*||A||_F^2, so its value relates to the primal by
    primal + dual = alpha*||A||^2 at optima; this returns the deviation
    from that identity, which is exactly |primal - max-form dual value|.
    """
    return float(abs(primal + dual - alpha * np.linalg.norm(A) ** 2))


def effective_beta(beta: float, L: np.ndarray) -> float:
    """Rescale beta by ||L||/M when the loads are far from unit scale."""
    m = L.shape[0]
    scale = np.linalg.norm(L) / m
    if scale > 0.0 and not (0.1 <= scale <= 10.0):
        return beta * scale
    return beta


# ---------------------------------------------------------------------------
# solver driver


@dataclass
class IntervalSolution:
    """Result of one per-interval solve.

    ``X`` is the physical estimate (nonnegative, zero on the mask);
    ``X_raw`` is the untouched multiplier. ``trace`` holds one row per
    iteration: iter, eta_p1, eta_p2, eta_d, eta_v, eta_g, eta.
    """

    X: np.ndarray
    X_raw: np.ndarray
    state: SolverState
    converged: bool
    iterations: int
    trace: np.ndarray
    residuals: Residuals
    wall_time: float
    beta_used: float
    backend: str


def _sweep(state: SolverState, problem: IntervalProblem, beta: float, tau: float,
           log: list | None) -> None:
    """One full iteration in the required order: U,Q,V,Q,U then W,G,W then X."""

    def step(name: str, value: np.ndarray, attr: str) -> None:
        setattr(state, attr, value)
        if log is not None:
            log.append(name)

    step("U", update_U(state, problem, beta), "U")
    step("Q", update_Q(state, problem, beta, anchor_Q=state.Q), "Q")
    step("V", update_V(state, problem, beta), "V")
    step("Q", update_Q(state, problem, beta, anchor_Q=state.Q), "Q")
    step("U", update_U(state, problem, beta), "U")
    step("W", update_W(state, problem, beta), "W")
    step("G", update_G(state, problem, beta), "G")
    step("W", update_W(state, problem, beta), "W")
    step("X", multiplier_step(state, problem, beta, tau), "X")


def _loop_residuals(state: SolverState, problem: IntervalProblem) -> Residuals:
    # V and G are exact projections immediately after their updates, so the
    # cone residuals vanish by construction; skip the extra SVD per sweep.
    op = problem.operator
    norm = np.linalg.norm
    gamma = project_mask(state.U, problem.omega) + state.V + state.W \
        + op.adjoint_map(state.Q) - state.G
    p1 = norm(op.forward_map(state.X) - problem.L) / (1.0 + norm(problem.L))
    p2 = norm(project_mask(state.X, problem.omega)) / (1.0 + norm(state.X))
    d = norm(gamma) / (1.0 + norm(state.G))
    eta = max(p1, p2, d)
    return Residuals(p1, p2, d, 0.0, 0.0, eta)


def _solve_numpy(problem: IntervalProblem, params: SolverParams, beta: float,
                 update_log: list | None):
    S, M = problem.operator.S, problem.operator.M
    state = SolverState.zeros(S, M)
    trace = np.zeros((params.max_iter, 7))
    eta_min = np.inf
    converged = False
    iters = 0
    for it in range(1, params.max_iter + 1):
        try:
            _sweep(state, problem, beta, params.tau, update_log)
        except np.linalg.LinAlgError as exc:
            raise DivergenceError(
                f"non-finite block at iteration {it}: {exc}", iteration=it
            ) from exc
        res = _loop_residuals(state, problem)
        trace[it - 1] = (it, res.p1, res.p2, res.d, res.v, res.g, res.eta)
        iters = it
        if not np.isfinite(res.eta):
            raise DivergenceError(
                f"non-finite residual at iteration {it}", iteration=it)
        if res.eta < eta_min:
            eta_min = res.eta
        elif res.eta > DIVERGENCE_FACTOR * eta_min:
            raise DivergenceError(
                f"residual grew {DIVERGENCE_FACTOR:.0e}x over its minimum "
                f"at iteration {it} (beta likely mis-scaled)", iteration=it)
        if res.eta < params.epsilon:
            converged = True
            break
    state.iter = iters
    return state, trace[:iters], converged


def _solve_numba(problem: IntervalProblem, params: SolverParams, beta: float):
    op = problem.operator
    try:
        out = kernels.admm_interval_numba(
            op.links, op.od_rows, op.od_cols, op.H_Q, op.lambda_max,
            problem.L, problem.omega.astype(np.float64), problem.A,
            problem.alpha, beta, params.tau, params.epsilon, params.max_iter,
            DIVERGENCE_FACTOR,
        )
    except np.linalg.LinAlgError as exc:
        raise DivergenceError(f"linear algebra failure in solver kernel: {exc}") from exc
    U, Q, V, W, G, X, trace, iters, status = out
    if status == kernels.STATUS_NONFINITE:
        raise DivergenceError(f"non-finite residual at iteration {iters}",
                              iteration=iters)
    if status == kernels.STATUS_DIVERGED:
        raise DivergenceError(
            f"residual grew {DIVERGENCE_FACTOR:.0e}x over its minimum at "
            f"iteration {iters} (beta likely mis-scaled)", iteration=iters)
    state = SolverState(U=U, Q=Q, V=V, W=W, G=G, X=X, iter=iters)
    return state, trace, status == kernels.STATUS_CONVERGED


def solve_interval(problem: IntervalProblem, params: SolverParams, *,
                   backend: str | None = None,
                   update_log: list | None = None) -> IntervalSolution:
    """Run the semi-proximal ADMM on one interval from a zero start.

    Stops when the KKT residual drops below params.epsilon or at
    params.max_iter (returning the last iterate with ``converged=False``).
    Non-finite blocks or a residual exploding past its running minimum
    raise :class:`DivergenceError`. Pass ``update_log`` (a list) to record
    the block-update order; that forces the numpy path.
    """
    chosen = kernels.resolve_backend(backend)
    if update_log is not None:
        chosen = "numpy"
    beta = effective_beta(params.beta, problem.L)

    start = time.perf_counter()
    if chosen == "numba":
        state, trace, converged = _solve_numba(problem, params, beta)
    else:
        state, trace, converged = _solve_numpy(problem, params, beta, update_log)
    wall = time.perf_counter() - start

    X_clamped = project_nonneg(state.X)
    X_clamped[problem.omega] = 0.0
    final = kkt_residuals(state, problem)
    return IntervalSolution(
        X=X_clamped, X_raw=state.X.copy(), state=state, converged=converged,
        iterations=state.iter, trace=trace, residuals=final, wall_time=wall,
        beta_used=beta, backend=chosen,
    )


def trace_to_csv(trace: np.ndarray) -> str:
    """Render a residual trace as plot-ready CSV (with header)."""
    lines = [TRACE_HEADER]
    for row in trace:
        vals = ",".join(repr(float(v)) for v in row[1:])
        lines.append(f"{int(row[0])},{vals}")
    return "\n".join(lines) + "\n"
