#!/usr/bin/env python3
"""Compare the jit-compiled and pure-numpy solver backends.

Runs the same per-interval solves under both backends and reports wall
time, iteration throughput, and the deviation between the two solutions.

    python benchmarks/bench_solver.py --sizes 6 11 30 --repeats 3
"""

import argparse
import time

import numpy as np

from slrtomo import (
    IntervalProblem,
    RoutingOperator,
    SolverParams,
    solve_interval,
    synthesize_instance,
)
from slrtomo.baselines import gravity_estimate
from slrtomo.kernels import HAVE_NUMBA


def build_problem(S: int, seed: int = 0):
    inst = synthesize_instance(S=S, avg_degree=3.0, T=1, rank=2,
                               zero_fraction=0.5, noise_level=0.0, seed=seed)
    op = RoutingOperator(inst.routing)
    omega = inst.mask.bool_slice(1, S)
    prior = gravity_estimate(inst.link_loads[:, 0], op)
    prior[omega] = 0.0
    return IntervalProblem(operator=op, L=inst.link_loads[:, 0], omega=omega,
                           A=prior, alpha=1.0)


def bench(problem, params, backend, repeats):
    solve_interval(problem, params, backend=backend)  # warm jit / caches
    best = np.inf
    sol = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        sol = solve_interval(problem, params, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, sol


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[6, 11, 30])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--epsilon", type=float, default=1e-6)
    parser.add_argument("--max-iter", type=int, default=20000)
    args = parser.parse_args()

    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    if not HAVE_NUMBA:
        print("numba not installed: benchmarking the numpy path only")
    params = SolverParams(epsilon=args.epsilon, max_iter=args.max_iter)

    print(f"{'S':>5} {'M':>5} {'backend':>8} {'time':>10} {'iters':>7} "
          f"{'us/iter':>9} {'speedup':>8}")
    for S in args.sizes:
        problem = build_problem(S)
        times = {}
        sols = {}
        for backend in backends:
            elapsed, sol = bench(problem, params, backend, args.repeats)
            times[backend] = elapsed
            sols[backend] = sol
            speedup = times["numpy"] / elapsed if backend != "numpy" else 1.0
            print(f"{S:>5} {problem.operator.M:>5} {backend:>8} "
                  f"{elapsed:>9.3f}s {sol.iterations:>7} "
                  f"{elapsed / sol.iterations * 1e6:>9.1f} {speedup:>7.1f}x")
        if len(backends) == 2:
            dev = np.abs(sols["numpy"].X - sols["numba"].X).max()
            print(f"{'':>5} {'':>5} {'':>8} max |numpy - numba| = {dev:.2e}")


if __name__ == "__main__":
    main()
