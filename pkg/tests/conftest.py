import numpy as np
import pytest

from slrtomo import (
    IntervalProblem,
    RoutingMatrix,
    RoutingOperator,
    SolverParams,
    synthesize_instance,
)


@pytest.fixture(scope="session")
def small_instance():
    """Noiseless rank-1 S=4 instance with half the OD pairs masked."""
    return synthesize_instance(S=4, avg_degree=3, T=5, rank=1,
                               zero_fraction=0.5, noise_level=0.0, seed=7)


@pytest.fixture(scope="session")
def small_operator(small_instance):
    return RoutingOperator(small_instance.routing)


def identity_routing(S: int) -> RoutingMatrix:
    """M = N routing where link n carries exactly OD pair n."""
    N = S * S
    idx = np.arange(N, dtype=np.int64)
    return RoutingMatrix(S=S, M=N, links=idx, ods=idx.copy())


def identity_problem(S, truth_slice, omega, A=None, alpha=1.0):
    """Fully determined IntervalProblem: loads observe every OD directly."""
    op = RoutingOperator(identity_routing(S))
    L = op.forward_map(truth_slice)
    if A is None:
        A = np.zeros((S, S))
    return IntervalProblem(operator=op, L=L, omega=omega, A=A, alpha=alpha)


def random_state_arrays(rng, S, M):
    """Random dense solver blocks for update-oracle tests."""
    return dict(
        U=rng.normal(size=(S, S)),
        Q=rng.normal(size=M),
        V=np.abs(rng.normal(size=(S, S))),
        W=rng.normal(size=(S, S)),
        G=rng.normal(size=(S, S)) * 0.5,
        X=rng.normal(size=(S, S)),
    )


@pytest.fixture(scope="session")
def default_params():
    return SolverParams()


@pytest.fixture(scope="session", autouse=True)
def _warm_jit():
    """Compile the numba kernels once so timed tests measure the math."""
    from slrtomo import kernels, solve_interval

    if not kernels.HAVE_NUMBA:
        return
    inst = synthesize_instance(S=3, avg_degree=2, T=1, rank=1, seed=0)
    op = RoutingOperator(inst.routing)
    problem = IntervalProblem(
        operator=op, L=inst.link_loads[:, 0],
        omega=np.zeros((3, 3), dtype=bool), A=np.zeros((3, 3)), alpha=1.0,
    )
    solve_interval(problem, SolverParams(max_iter=5), backend="numba")
