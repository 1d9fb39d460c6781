import csv
import json
import math

import numpy as np
import pytest

from goldenrate.cli import main


def run_cli(*argv):
    return main(list(argv))


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def test_lineshape_fig1_preset(tmp_path):
    code = run_cli("lineshape", "--preset", "fig1", "--out", str(tmp_path), "--set", "t_grid.points=6")
    assert code == 0
    for label in ("n1", "n2", "n3"):
        header, rows = read_csv(tmp_path / f"fig1_{label}.csv")
        assert header[0].startswith("t (1/omega_c)")
        assert len(rows) == 6
        first = [float(x) for x in rows[0]]
        assert first[0] == 0.0 and first[2] == 0.0  # C_I(0) = 0
    manifest = json.loads((tmp_path / "fig1_manifest.json").read_text())
    assert len(manifest["outputs"]) == 3
    assert "hbar = 1" in manifest["unit_system"]


def test_lineshape_quadrature_columns_track_analytic(tmp_path):
    run_cli("lineshape", "--out", str(tmp_path), "--set", "t_grid.stop=20", "--set", "t_grid.points=9")
    header, rows = read_csv(tmp_path / "run_curve.csv")
    for row in rows:
        t, cr_a, ci_a, cr_q, ci_q = map(float, row)
        assert abs(ci_a - ci_q) <= 1e-8
        if cr_q > 0.01:
            assert abs(cr_a - cr_q) / cr_q <= 0.05  # n=1 default bath


def test_sweep_outputs_rows_in_grid_order(tmp_path):
    code = run_cli(
        "sweep", "--out", str(tmp_path),
        "--set", "bath.n=3",
        "--set", "gamma_d=0.1",
        "--set", "delta_e_grid.start=-2",
        "--set", "delta_e_grid.stop=2",
        "--set", "delta_e_grid.points=5",
        "--set", "label=test",
    )
    assert code == 0
    header, rows = read_csv(tmp_path / "run_test.csv")
    des = [float(r[0]) for r in rows]
    assert des == [-2.0, -1.0, 0.0, 1.0, 2.0]
    for row in rows:
        k, kappa, ln_kappa = float(row[2]), float(row[3]), float(row[4])
        assert kappa == pytest.approx(math.sqrt(1.0) / math.sqrt(math.pi) * k, rel=1e-12)
        if kappa > 0:
            assert ln_kappa == pytest.approx(math.log(kappa), rel=1e-12)
        assert row[5] == "converged"


def test_fig2_preset_emits_four_curves(tmp_path):
    code = run_cli("sweep", "--preset", "fig2", "--out", str(tmp_path), "--set", "delta_e_grid.points=3")
    assert code == 0
    for label in ("n1", "n2", "n3_gd0.01", "n3_gd0.1"):
        assert (tmp_path / f"fig2_{label}.csv").exists()


def test_fig3_and_fig4_presets(tmp_path):
    assert run_cli("sweep", "--preset", "fig3", "--out", str(tmp_path), "--set", "delta_e_grid.points=3") == 0
    assert run_cli("sweep", "--preset", "fig4", "--out", str(tmp_path), "--set", "delta_e_grid.points=3") == 0
    assert len(list(tmp_path.glob("fig3_*.csv"))) == 3
    assert len(list(tmp_path.glob("fig4_*.csv"))) == 4


def test_sweep_deterministic_across_workers(tmp_path):
    common = [
        "sweep", "--set", "bath.n=3", "--set", "gamma_d=0.05",
        "--set", "delta_e_grid.points=5", "--seed", "7",
    ]
    run_cli(*common, "--out", str(tmp_path / "w1"), "--workers", "1")
    run_cli(*common, "--out", str(tmp_path / "w3"), "--workers", "3")
    a = (tmp_path / "w1" / "run_curve.csv").read_bytes()
    b = (tmp_path / "w3" / "run_curve.csv").read_bytes()
    assert a == b


def test_mc_validate_deterministic_repeat(tmp_path):
    common = [
        "mc-validate",
        "--set", 'fluctuation={"tau_e": 1.0, "de_sq": 0.1}',
        "--set", "mc.n_traj=64",
        "--set", "mc.t_eval=5.0",
        "--set", "mc.horizon=5.0",
        "--set", "mc.population_horizon=2.0",
        "--seed", "99",
    ]
    assert run_cli(*common, "--out", str(tmp_path / "a")) == 0
    assert run_cli(*common, "--out", str(tmp_path / "b")) == 0
    for name in ("run_cumulant.csv", "run_avg_rate.csv", "run_avg_population.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_mc_validate_rejects_zero_trajectories(tmp_path):
    code = run_cli(
        "mc-validate", "--out", str(tmp_path),
        "--set", 'fluctuation={"tau_e": 1.0, "de_sq": 0.1}',
        "--set", "mc.n_traj=0",
    )
    assert code == 1


def test_validation_errors_exit_1(tmp_path):
    assert run_cli("sweep", "--preset", "nope", "--out", str(tmp_path)) == 1
    assert run_cli("sweep", "--out", str(tmp_path), "--set", "bath.n=7") == 1
    # two variants at once
    assert (
        run_cli(
            "rate", "--out", str(tmp_path),
            "--set", "gamma_d=0.1",
            "--set", 'disorder={"kind": "gaussian", "width": 0.1}',
        )
        == 1
    )


def test_numerical_failure_exit_2(tmp_path):
    # n=2 at low temperature decays too slowly to converge at resonance:
    # the regularized integral hits the cap and the point is recorded
    code = run_cli(
        "sweep", "--out", str(tmp_path),
        "--set", "bath.n=2", "--set", "bath.theta=5.0",
        "--set", "delta_e_grid.start=0", "--set", "delta_e_grid.stop=0",
        "--set", "delta_e_grid.points=1",
        "--set", 'quad={"t_cap": 200.0}',
    )
    assert code == 2
    header, rows = read_csv(tmp_path / "run_curve.csv")
    assert rows[0][-1].startswith("error")


def test_me_propagate_two_state_analytic(tmp_path):
    code = run_cli(
        "me-propagate", "--out", str(tmp_path),
        "--set", "me.k12=0.3", "--set", "me.k21=0.7",
        "--set", "t_grid.stop=10", "--set", "t_grid.points=21",
    )
    assert code == 0
    header, rows = read_csv(tmp_path / "run_population.csv")
    for row in rows:
        t, p1, p2 = map(float, row)
        exact = 0.3 / 1.0 * (1.0 - math.exp(-1.0 * t))
        assert p2 == pytest.approx(exact, abs=1e-8)
        assert p1 + p2 == pytest.approx(1.0, abs=1e-12)


def test_manifest_round_trip(tmp_path):
    out1 = tmp_path / "first"
    assert run_cli(
        "sweep", "--out", str(out1),
        "--set", "bath.n=3", "--set", "gamma_d=0.1", "--set", "delta_e_grid.points=4",
    ) == 0
    manifest = json.loads((out1 / "run_manifest.json").read_text())
    config_path = tmp_path / "replay.json"
    config_path.write_text(json.dumps(manifest["resolved_config"]))
    out2 = tmp_path / "second"
    assert run_cli("sweep", "--config", str(config_path), "--out", str(out2)) == 0
    assert (out1 / "run_curve.csv").read_bytes() == (out2 / "run_curve.csv").read_bytes()


def test_set_override_applies(tmp_path):
    run_cli("rate", "--out", str(tmp_path), "--set", "bath.theta=0.5", "--set", "delta_e=0.0")
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["resolved_config"]["bath"]["theta"] == 0.5
    assert manifest["resolved_config"]["command"] == "rate"


def test_command_mismatch_rejected(tmp_path):
    config = tmp_path / "c.json"
    config.write_text('{"command": "sweep"}')
    assert run_cli("rate", "--config", str(config), "--out", str(tmp_path)) == 1
