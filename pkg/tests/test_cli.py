import json
import os

import numpy as np
import pandas as pd
import pytest

from CGOScripts import cli
from CGOScripts.fileio import read_field, read_json, read_measurement, save_field
from CGOScripts.spectral import Field, TorusGrid
from CGOScripts.transform import MeasurementOperator


def write_config(directory, **sections):
    config = {
        "grid": {"d": 3, "n": 8},
        "subspace": {"family": "piecewise", "M": 8, "R": 5.0},
        "ordering": "hyperbolic",
        "schedule": {"tau": 64.0},
        "balance": {"curve_points": 10, "sweep_M": [2]},
        "verify": {"pairs": 2, "initializations": 2, "oracle_potentials": 2},
    }
    config.update(sections)
    path = os.path.join(directory, "run.json")
    with open(path, "w") as f:
        json.dump(config, f)
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_unknown_config_key_is_a_config_error(tmp_path):
    path = write_config(tmp_path, bogus=1)
    assert run("balance", "--config", path, "--out", tmp_path / "out") == cli.EXIT_CONFIG


def test_unknown_section_key_is_a_config_error(tmp_path):
    path = write_config(tmp_path, solver={"method": "krylov", "tolerance": 1e-8})
    assert run("simulate", "--config", path, "--out", tmp_path / "out") == cli.EXIT_CONFIG


def test_balance_bandlimited(tmp_path, capsys):
    path = write_config(tmp_path, subspace={"family": "bandlimited", "B": 1, "R": 5.0}, ordering="box")
    out = tmp_path / "out"
    assert run("balance", "--config", path, "--out", out) == cli.EXIT_OK
    summary = read_json(os.path.join(out, "balancing_summary.json"))
    assert summary["N_star"] == {"closed_form": 27, "grid": 27}
    assert "N* = 27" in capsys.readouterr().out
    curve = pd.read_csv(os.path.join(out, "balancing_curve.csv"))
    assert {"N", "balancing_norm_closed_form", "balancing_norm_grid"} <= set(curve.columns)
    assert os.path.exists(os.path.join(out, "resolved_config.json"))


def test_balance_threshold_one(tmp_path):
    path = write_config(tmp_path)
    out = tmp_path / "out"
    assert run("balance", "--config", path, "--out", out, "--threshold", 1.0) == cli.EXIT_OK
    summary = read_json(os.path.join(out, "balancing_summary.json"))
    assert summary["N_star"]["grid"] == 1
    assert os.path.exists(os.path.join(out, "piecewise_sweep.csv"))


def test_simulate_is_deterministic(tmp_path):
    path = write_config(tmp_path, recon={"N": 8})
    for name in ("a", "b"):
        assert run("simulate", "--config", path, "--seed", 7, "--threads", 1, "--out", tmp_path / name) == 0
    with open(tmp_path / "a" / "measurement.json", "rb") as f1, open(tmp_path / "b" / "measurement.json", "rb") as f2:
        assert f1.read() == f2.read()
    ordering = pd.read_csv(tmp_path / "a" / "ordering.csv")
    assert list(ordering.columns) == ["l", "k_1", "k_2", "k_3"]
    assert len(ordering) == 8


def test_measurement_can_be_resimulated_from_its_provenance(tmp_path):
    path = write_config(tmp_path, recon={"N": 8})
    out = tmp_path / "out"
    assert run("simulate", "--config", path, "--seed", 5, "--threads", 1, "--out", out) == cli.EXIT_OK
    y = read_measurement(str(out / "measurement.json"))
    q = read_field(str(out / "potential.cgo1"))
    again = MeasurementOperator.from_measurement(y, threads=1).U(q)
    assert np.max(np.abs(again.values - y.values)) <= 1e-12
    assert again.t_used == y.t_used


def test_simulate_zero_potential(tmp_path):
    path = write_config(tmp_path, recon={"N": 8})
    q_file = save_field(Field.zeros(TorusGrid(3, 8)), str(tmp_path / "zero.cgo1"))
    out = tmp_path / "out"
    assert run("simulate", "--config", path, "--q-file", q_file, "--out", out) == cli.EXIT_OK
    measurement = read_json(os.path.join(out, "measurement.json"))
    assert measurement["N"] == 8
    assert np.all(np.array(measurement["values"]) == 0.0)


def test_simulate_rejects_potential_outside_the_box(tmp_path):
    path = write_config(tmp_path, recon={"N": 8})
    q_file = save_field(Field.constant(TorusGrid(3, 8), 9.0), str(tmp_path / "big.cgo1"))
    assert run("simulate", "--config", path, "--q-file", q_file, "--out", tmp_path / "out") == cli.EXIT_CONFIG


def test_reconstruct_rejects_mismatched_ordering(tmp_path):
    simulate_config = write_config(tmp_path, recon={"N": 8})
    out = tmp_path / "out"
    assert run("simulate", "--config", simulate_config, "--out", out) == cli.EXIT_OK
    other = tmp_path / "other"
    other.mkdir()
    reconstruct_config = write_config(other, recon={"N": 8}, ordering="box")
    code = run("reconstruct", "--config", reconstruct_config, "--measurement", out / "measurement.json",
               "--out", out)
    assert code == cli.EXIT_PROVENANCE


def test_simulate_then_reconstruct(tmp_path, capsys):
    path = write_config(tmp_path)
    out = tmp_path / "out"
    assert run("simulate", "--config", path, "--seed", 3, "--out", out) == cli.EXIT_OK
    code = run("reconstruct", "--config", path, "--measurement", out / "measurement.json",
               "--truth", out / "potential.cgo1", "--out", out)
    assert code == cli.EXIT_OK
    assert "VERDICT: PASS" in capsys.readouterr().out
    summary = read_json(os.path.join(out, "reconstruction_summary.json"))
    assert summary["converged"] and summary["final_error"] <= 1e-6
    log = pd.read_csv(os.path.join(out, "iteration_log.csv"))
    assert list(log.columns) == ["n", "step_norm", "true_error", "data_residual"]

    restart = tmp_path / "restart"
    code = run("reconstruct", "--config", path, "--measurement", out / "measurement.json",
               "--q0-file", out / "potential.cgo1", "--out", restart)
    assert code == cli.EXIT_OK
    assert read_json(os.path.join(restart, "reconstruction_summary.json"))["iterations"] == 0


def test_verify_subset_passes(tmp_path):
    path = write_config(tmp_path)
    out = tmp_path / "out"
    code = run("verify", "--config", path, "--criteria", "liouville,bandlimited_balancing,gram_oracle",
               "--out", out)
    assert code == cli.EXIT_OK
    report = read_json(os.path.join(out, "verify_report.json"))
    assert report["all_passed"]
    assert [row["criterion"] for row in report["criteria"]] == ["liouville", "bandlimited_balancing", "gram_oracle"]


def test_verify_unknown_criterion(tmp_path):
    path = write_config(tmp_path)
    assert run("verify", "--config", path, "--criteria", "nonsense", "--out", tmp_path / "out") == cli.EXIT_CONFIG


@pytest.mark.parametrize("tau, expected", [(64.0, cli.EXIT_OK), (0.01, cli.EXIT_VERIFY)])
def test_verify_contraction_tracks_tau(tmp_path, tau, expected):
    path = write_config(tmp_path, schedule={"tau": tau})
    code = run("verify", "--config", path, "--criteria", "contraction", "--threads", 1, "--out", tmp_path / "out")
    assert code == expected


def test_verify_calibrates_tau_when_asked(tmp_path):
    verify = {"pairs": 2, "initializations": 2, "oracle_potentials": 2, "calibrate": True}
    path = write_config(tmp_path, schedule={"tau": 1.0}, recon={"N": 8}, verify=verify)
    out = tmp_path / "out"
    code = run("verify", "--config", path, "--criteria", "contraction", "--threads", 1, "--out", out)
    assert code == cli.EXIT_OK
    row = read_json(os.path.join(out, "verify_report.json"))["criteria"][0]
    assert "(calibrated)" in row["detail"]


@pytest.mark.parametrize("grounding", ["t_independent", "kernel"])
def test_verify_solver_oracle_on_the_fine_grid(tmp_path, grounding):
    verify = {"pairs": 2, "initializations": 2, "oracle_potentials": 1}
    path = write_config(tmp_path, solver={"grounding": grounding}, verify=verify)
    out = tmp_path / "out"
    code = run("verify", "--config", path, "--criteria", "solver_oracle", "--threads", 1, "--out", out)
    assert code == cli.EXIT_OK
    row = read_json(os.path.join(out, "verify_report.json"))["criteria"][0]
    assert row["value"] <= 1e-8
    assert row["detail"].startswith("16^3 grid, |m| <= 4")
