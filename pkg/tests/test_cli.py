"""Command-line pipeline: artifacts, error contract, determinism."""

import filecmp
import warnings
from pathlib import Path

import numpy as np
import pytest

from slrtomo import SparsityMask, TomographyInstance, TrafficTensor, save_instance
from slrtomo.cli import run
from conftest import identity_routing


def _read_global_nmae(path: Path) -> float:
    for line in path.read_text().splitlines():
        if line.startswith("global,"):
            return float(line.split(",")[1])
    raise AssertionError("no global row in nmae.csv")


def test_pipeline_generate_recover_eval(tmp_path):
    inst = tmp_path / "inst"
    out = tmp_path / "out"
    assert run(["generate", "--out", str(inst), "--S", "4", "--T", "5",
                "--rank", "1", "--zero-fraction", "0.5", "--seed", "7"]) == 0
    assert run(["recover", "--instance", str(inst), "--out", str(out),
                "--method", "slrr", "--epsilon", "1e-7"]) == 0
    assert run(["eval", "--instance", str(inst), "--out", str(out)]) == 0
    value = _read_global_nmae(out / "nmae.csv")
    assert 0.0 <= value < 1.0
    for name in ("estimate.csv", "timings.csv", "residuals_1.csv", "residuals_5.csv"):
        assert (out / name).is_file()
    assert not (out / "warnings.csv").exists()  # everything converged


def test_recover_gravity_exact_on_rank1_identity_instance(tmp_path):
    S, T = 3, 2
    out_totals = np.array([3.0, 1.0, 2.0])
    in_totals = np.array([1.0, 4.0, 1.0])
    truth = np.outer(out_totals, in_totals) / in_totals.sum()
    values = np.repeat(truth[:, :, None], T, axis=2)
    loads = values.reshape(S * S, T, order="F")
    with pytest.warns(UserWarning, match="underdetermined"):
        inst = TomographyInstance(
            S=S, M=S * S, T=T, routing=identity_routing(S),
            link_loads=loads, truth=TrafficTensor(values))
    inst_dir = save_instance(inst, tmp_path / "inst")
    out = tmp_path / "out"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        assert run(["recover", "--instance", str(inst_dir), "--out", str(out),
                    "--method", "gravity"]) == 0
        assert run(["eval", "--instance", str(inst_dir), "--out", str(out)]) == 0
    assert _read_global_nmae(out / "nmae.csv") <= 1e-6


def test_recover_tomogravity_runs(tmp_path):
    inst = tmp_path / "inst"
    out = tmp_path / "out"
    run(["generate", "--out", str(inst), "--S", "4", "--T", "2", "--seed", "3",
         "--zero-fraction", "0.5"])
    assert run(["recover", "--instance", str(inst), "--out", str(out),
                "--method", "tomogravity"]) == 0
    assert (out / "estimate.csv").is_file()


def test_eval_without_truth_fails(tmp_path, capsys):
    inst = tmp_path / "inst"
    out = tmp_path / "out"
    run(["generate", "--out", str(inst), "--S", "4", "--T", "2", "--seed", "1"])
    (inst / "truth.csv").unlink()
    run(["recover", "--instance", str(inst), "--out", str(out)])
    code = run(["eval", "--instance", str(inst), "--out", str(out)])
    assert code != 0
    err = capsys.readouterr().err
    assert err.startswith("error:") and "truth required" in err


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        run(["recover", "--bogus", "x"])
    assert exc.value.code != 0


def test_repair_writes_to_out_and_in_place(tmp_path):
    inst = tmp_path / "inst"
    run(["generate", "--out", str(inst), "--S", "4", "--T", "5", "--seed", "2"])
    loads_path = inst / "linkloads.csv"
    rows = loads_path.read_text().strip().splitlines()
    cells = [[float(v) for v in row.split(",")] for row in rows]
    for r in range(len(cells)):
        cells[r][2] *= 1000.0  # inject an anomaly in interval 3
    loads_path.write_text("\n".join(",".join(repr(v) for v in row)
                                    for row in cells) + "\n")
    original = loads_path.read_text()

    fixed = tmp_path / "fixed"
    assert run(["repair", "--instance", str(inst), "--out", str(fixed),
                "--threshold-factor", "10"]) == 0
    assert loads_path.read_text() == original  # input untouched by default
    assert (fixed / "meta.csv").is_file()  # output dir is a loadable instance
    repaired = np.loadtxt(fixed / "linkloads.csv", delimiter=",")
    assert (repaired[:, 2] < 1000).all()

    assert run(["repair", "--instance", str(inst), "--threshold-factor", "10",
                "--in-place"]) == 0
    assert loads_path.read_text() != original


def test_tune_writes_score_table(tmp_path):
    inst = tmp_path / "inst"
    out = tmp_path / "cv"
    run(["generate", "--out", str(inst), "--S", "4", "--T", "2", "--seed", "4",
         "--zero-fraction", "0.5"])
    assert run(["tune", "--instance", str(inst), "--out", str(out),
                "--candidates", "3", "--k", "3", "--seed", "11",
                "--max-iter", "2000"]) == 0
    scores = (out / "cv_scores.csv").read_text().splitlines()
    assert scores[0] == "rho1,rho2,beta,n_cv"
    assert len(scores) == 4
    best = (out / "best_params.csv").read_text().splitlines()
    assert best[0] == "rho1,rho2,beta,n_cv" and len(best) == 2


def _run_pipeline(base: Path, tag: str) -> Path:
    inst = base / f"inst_{tag}"
    out = base / f"out_{tag}"
    run(["generate", "--out", str(inst), "--S", "4", "--T", "3", "--rank", "1",
         "--zero-fraction", "0.5", "--noise", "0.01", "--seed", "42"])
    run(["tune", "--instance", str(inst), "--out", str(out),
         "--candidates", "2", "--k", "3", "--seed", "42", "--max-iter", "2000"])
    run(["recover", "--instance", str(inst), "--out", str(out),
         "--method", "slrr", "--max-iter", "2000"])
    run(["eval", "--instance", str(inst), "--out", str(out)])
    return out


def test_full_pipeline_byte_deterministic(tmp_path):
    out_a = _run_pipeline(tmp_path, "a")
    out_b = _run_pipeline(tmp_path, "b")
    names = sorted(p.name for p in out_a.iterdir())
    assert names == sorted(p.name for p in out_b.iterdir())
    for name in names:
        if name == "timings.csv":  # wall-clock: the one non-deterministic file
            continue
        assert filecmp.cmp(out_a / name, out_b / name, shallow=False), name
    inst_a = (tmp_path / "inst_a")
    inst_b = (tmp_path / "inst_b")
    for name in ("meta.csv", "routing.csv", "linkloads.csv", "mask.csv", "truth.csv"):
        assert filecmp.cmp(inst_a / name, inst_b / name, shallow=False), name
