"""Command-line pipeline: generate, repair, tune, recover, eval.

Every command writes plot-ready CSV artifacts into ``--out``. Outputs are
byte-deterministic for fixed seeds and inputs, except ``timings.csv``
(wall-clock measurements). Errors exit nonzero with a single
machine-parsable line on stderr; per-interval non-convergence is reported
in ``warnings.csv`` with exit status 0 so long runs still deliver output.
"""

from __future__ import annotations

import argparse
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from .baselines import gravity_estimate, tomo_gravity
from .driver import recover_sequence
from .errors import SlrtomoError
from .metrics import nmae, per_interval_nmae
from .operators import RoutingOperator
from .solver import SolverParams, trace_to_csv
from .synth import synthesize_instance
from .tensor_store import (
    TomographyInstance,
    TrafficTensor,
    load_instance,
    repair_anomalies,
    save_instance,
)
from .tuning import CvPlan, sample_candidates, tune

__all__ = ["main", "run"]


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header] if header else []
    lines.extend(rows)
    path.write_text("\n".join(lines) + "\n")


def _solver_params(args) -> SolverParams:
    return SolverParams(
        rho1=args.rho1, rho2=args.rho2, beta=args.beta, tau=args.tau,
        epsilon=args.epsilon, max_iter=args.max_iter,
    )


def _add_solver_flags(p, with_rho: bool = True):
    if with_rho:
        p.add_argument("--rho1", type=float, default=0.5)
        p.add_argument("--rho2", type=float, default=0.5)
        p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.618)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=5000, dest="max_iter")
    p.add_argument("--period", type=int, default=None)


def _cmd_generate(args) -> int:
    instance = synthesize_instance(
        S=args.S, avg_degree=args.avg_degree, T=args.T, rank=args.rank,
        zero_fraction=args.zero_fraction, noise_level=args.noise, seed=args.seed,
    )
    save_instance(instance, args.out)
    print(f"wrote instance: S={instance.S} M={instance.M} T={instance.T} -> {args.out}")
    return 0


def _cmd_repair(args) -> int:
    instance = load_instance(args.instance)
    repaired = repair_anomalies(instance.link_loads, args.threshold_factor)
    if args.in_place:
        target = Path(args.instance)
    else:
        if args.out is None:
            raise SlrtomoError("repair needs --out (or --in-place)")
        target = Path(args.out)
        if target.resolve() != Path(args.instance).resolve():
            target.mkdir(parents=True, exist_ok=True)
            for name in ("meta.csv", "routing.csv", "mask.csv", "truth.csv"):
                src = Path(args.instance) / name
                if src.is_file():
                    shutil.copyfile(src, target / name)
    rows = [",".join(_fmt(v) for v in row) for row in repaired]
    (target / "linkloads.csv").write_text("\n".join(rows) + "\n")
    changed = int((repaired != instance.link_loads).any(axis=0).sum())
    print(f"repaired {changed} interval(s) -> {target / 'linkloads.csv'}")
    return 0


def _cmd_tune(args) -> int:
    instance = load_instance(args.instance)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    candidates = sample_candidates(args.candidates, seed=args.seed)
    plan = CvPlan(candidates=tuple(candidates), kind=args.cv_kind, K=args.k,
                  test_ratio=args.test_ratio, repeats=args.repeats, seed=args.seed)
    base = SolverParams(tau=args.tau, epsilon=args.epsilon, max_iter=args.max_iter)
    result = tune(instance, plan, base_params=base, period=args.period)

    _write_csv(out / "cv_scores.csv", "rho1,rho2,beta,n_cv", (
        f"{_fmt(c[0])},{_fmt(c[1])},{_fmt(c[2])},{_fmt(s)}"
        for c, s in zip(result.candidates, result.scores)
    ))
    b = result.best
    _write_csv(out / "best_params.csv", "rho1,rho2,beta,n_cv",
               [f"{_fmt(b[0])},{_fmt(b[1])},{_fmt(b[2])},{_fmt(result.scores[result.best_index])}"])
    print(f"best candidate: rho1={b[0]:g} rho2={b[1]:g} beta={b[2]:g} "
          f"n_cv={result.scores[result.best_index]:g}")
    return 0


def _estimate_to_csv(path: Path, tensor: TrafficTensor) -> None:
    flat = tensor.values.reshape(tensor.S * tensor.S, tensor.T, order="F")
    rows = [",".join(_fmt(v) for v in row) for row in flat]
    path.write_text("\n".join(rows) + "\n")


def _csv_to_tensor(path: Path, S: int, T: int) -> TrafficTensor:
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape != (S * S, T):
        raise SlrtomoError(
            f"{path.name}: expected {S * S} x {T} estimate, got {data.shape}")
    return TrafficTensor(data.reshape(S, S, T, order="F"))


def _cmd_recover(args) -> int:
    instance = load_instance(args.instance)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.method == "slrr":
        params = _solver_params(args)
        tensor, report = recover_sequence(instance, params, args.period)
        for k, trace in enumerate(report.traces, start=1):
            (out / f"residuals_{k}.csv").write_text(trace_to_csv(trace))
        _write_csv(out / "timings.csv", "interval,seconds,iterations", (
            f"{k + 1},{_fmt(report.wall_times[k])},{report.iterations[k]}"
            for k in range(instance.T)
        ))
        bad = np.flatnonzero(~report.converged)
        if bad.size:
            _write_csv(out / "warnings.csv", "interval,iterations,eta", (
                f"{k + 1},{report.iterations[k]},{_fmt(report.eta_final[k])}"
                for k in bad
            ))
    else:
        operator = RoutingOperator(instance.routing)
        values = np.zeros((instance.S, instance.S, instance.T))
        times = []
        for k in range(1, instance.T + 1):
            start = time.perf_counter()
            omega = instance.mask.bool_slice(k, instance.S)
            prior = gravity_estimate(instance.link_loads[:, k - 1], operator)
            prior[omega] = 0.0  # known zeros are shared with the baselines
            if args.method == "tomogravity":
                est = tomo_gravity(instance.link_loads[:, k - 1], operator, prior)
            else:
                est = prior
            values[:, :, k - 1] = est
            times.append(time.perf_counter() - start)
        tensor = TrafficTensor(values)
        _write_csv(out / "timings.csv", "interval,seconds,iterations", (
            f"{k + 1},{_fmt(times[k])},1" for k in range(instance.T)
        ))

    _estimate_to_csv(out / "estimate.csv", tensor)
    print(f"recovered {instance.T} interval(s) with method={args.method} -> {out}")
    return 0


def _cmd_eval(args) -> int:
    instance = load_instance(args.instance)
    if instance.truth is None:
        raise SlrtomoError("truth required: instance has no truth.csv")
    out = Path(args.out)
    est_path = out / "estimate.csv"
    if not est_path.is_file():
        raise SlrtomoError(f"estimate not found: {est_path} (run recover first)")
    estimate = _csv_to_tensor(est_path, instance.S, instance.T)
    global_nmae = nmae(estimate, instance.truth, instance.mask)
    per_interval = per_interval_nmae(estimate, instance.truth, instance.mask)
    rows = [f"global,{_fmt(global_nmae)}"]
    rows += [
        f"{k + 1}," + ("" if np.isnan(v) else _fmt(v))
        for k, v in enumerate(per_interval)
    ]
    _write_csv(out / "nmae.csv", "interval,nmae", rows)
    print(f"nmae={global_nmae:.6g} -> {out / 'nmae.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slrtomo",
        description="Recover origin-destination traffic matrices from link loads.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic instance directory")
    g.add_argument("--out", required=True)
    g.add_argument("--S", type=int, required=True)
    g.add_argument("--T", type=int, default=8)
    g.add_argument("--rank", type=int, default=1)
    g.add_argument("--zero-fraction", type=float, default=0.0, dest="zero_fraction")
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--avg-degree", type=float, default=3.0, dest="avg_degree")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_cmd_generate)

    r = sub.add_parser("repair", help="interpolate over anomalous intervals")
    r.add_argument("--instance", required=True)
    r.add_argument("--out", default=None)
    r.add_argument("--threshold-factor", type=float, default=10.0,
                   dest="threshold_factor")
    r.add_argument("--in-place", action="store_true", dest="in_place")
    r.set_defaults(func=_cmd_repair)

    t = sub.add_parser("tune", help="pick (rho1, rho2, beta) by cross-validation")
    t.add_argument("--instance", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--cv-kind", choices=("kfold", "monte_carlo"),
                   default="kfold", dest="cv_kind")
    t.add_argument("--k", type=int, default=5)
    t.add_argument("--test-ratio", type=float, default=0.02, dest="test_ratio")
    t.add_argument("--repeats", type=int, default=50)
    t.add_argument("--candidates", type=int, default=50)
    t.add_argument("--seed", type=int, default=0)
    _add_solver_flags(t, with_rho=False)
    t.set_defaults(func=_cmd_tune)

    rec = sub.add_parser("recover", help="estimate the traffic tensor")
    rec.add_argument("--instance", required=True)
    rec.add_argument("--out", required=True)
    rec.add_argument("--method", choices=("slrr", "gravity", "tomogravity"),
                     default="slrr")
    _add_solver_flags(rec, with_rho=True)
    rec.set_defaults(func=_cmd_recover)

    e = sub.add_parser("eval", help="score an estimate against the truth")
    e.add_argument("--instance", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_eval)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SlrtomoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())
