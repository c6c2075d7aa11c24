"""Tests for cli module: commands, files and exit codes."""
import copy
import os

import numpy as np
import pytest

from cli import (
    _attach_option_values,
    cmd_coeffs,
    cmd_fit,
    cmd_phi_sweep,
    cmd_rank,
    cmd_roundtrip,
    cmd_simulate,
    cmd_tomography,
    main,
    read_scan,
)
from config_rd import save_config
from estimator import Calibration
from rd_io import FormatError, read_csv, read_json, save_json_atomic, write_csv_atomic
from scan_simulator import ScanConfig
from transfer import ResonatorParams


def _write_config(cfg, tmp_path):
    path = str(tmp_path / "config.json")
    save_config(cfg, path)
    return path


def test_coeffs_writes_three_tables(cli_config):
    paths = cmd_coeffs(cli_config)
    assert [os.path.basename(p) for p in paths] == ["coeffs.csv", "coeffs_sideband.csv", "coeffs_sa.csv"]
    columns, data = read_csv(paths[0], "coeffs")
    assert data.shape == (41, 10)
    assert data[0, 0] == -8.0 and data[-1, 0] == 8.0
    # |r|^2 + T = 1 survives the text round trip
    assert np.allclose(data[:, 1] ** 2 + data[:, 2] ** 2 + data[:, 3], 1.0, atol=1e-12)
    columns, sa = read_csv(paths[2], "coeffs_basis")
    assert columns[:3] == ["delta", "cos_ps", "cos_qs"]
    assert sa.shape == (41, 13)


def test_coeffs_flags_singular_phase(cli_config, caplog):
    cfg = copy.deepcopy(cli_config)
    cfg["resonator"].update(d=0.0, f2=0.1)
    cmd_coeffs(cfg)
    assert "phase undefined at 1 grid point" in caplog.text


def test_simulate_outputs(cli_config):
    paths = cmd_simulate(cli_config)
    names = sorted(os.path.basename(p) for p in paths)
    assert names == ["dc.csv", "moments.csv", "run_config.json", "scan.csv", "state.json"]
    records = read_scan(os.path.join(cli_config["out_dir"], "scan.csv"))
    assert len(records) == 50000
    assert records.index[-1] == 49999
    _, moments = read_csv(os.path.join(cli_config["out_dir"], "moments.csv"), "moments")
    assert moments.shape == (50, 7)
    _, dc = read_csv(os.path.join(cli_config["out_dir"], "dc.csv"), "dc")
    assert dc.shape == (250, 3)
    state = read_json(os.path.join(cli_config["out_dir"], "state.json"))
    assert state["basis"] == "sideband"


def test_simulate_is_reproducible(cli_config, tmp_path):
    cmd_simulate(cli_config)
    other = copy.deepcopy(cli_config)
    other["out_dir"] = str(tmp_path / "again")
    cmd_simulate(other)
    with open(os.path.join(cli_config["out_dir"], "scan.csv"), "rb") as a, \
            open(os.path.join(other["out_dir"], "scan.csv"), "rb") as b:
        assert a.read() == b.read()


def test_fit_after_simulate(cli_config):
    cmd_simulate(cli_config)
    out = cmd_fit(cli_config)
    assert os.path.exists(os.path.join(cli_config["out_dir"], "fit.json"))
    calib = read_json(os.path.join(cli_config["out_dir"], "calibration.json"))
    assert calib["d"] == pytest.approx(0.05, rel=1e-5)
    truth = np.array([-0.6, 2.2, 11.8, 0.2])
    z = (np.array(out["sa"]["mean"]) - truth) / np.array(out["sa"]["mean_se"])
    assert np.all(np.abs(z) < 4.0)


def test_fit_with_calibration_file(cli_config):
    cmd_simulate(cli_config)
    os.remove(os.path.join(cli_config["out_dir"], "dc.csv"))
    calib_path = os.path.join(cli_config["out_dir"], "given_calib.json")
    scan = ScanConfig.from_dict(cli_config["scan"])
    save_json_atomic(calib_path, Calibration.nominal(ResonatorParams(0.05, 2.9, 0.15), scan).to_dict())
    out = cmd_fit(cli_config, calib_path=calib_path)
    assert out["calibration"]["d"] == 0.05
    assert not os.path.exists(os.path.join(cli_config["out_dir"], "calibration.json"))


def test_fit_without_dc_uses_recorded_detuning(cli_config):
    cmd_simulate(cli_config)
    os.remove(os.path.join(cli_config["out_dir"], "dc.csv"))
    out = cmd_fit(cli_config)
    assert out["calibration"] is None
    assert any("uncalibrated" in note for note in out["notes"])


def test_main_simulate_then_fit(cli_config, tmp_path):
    path = _write_config(cli_config, tmp_path)
    assert main(["simulate", "--config", path]) == 0
    assert main(["fit", "--config", path]) == 0


def test_main_reports_truncated_scan(cli_config, tmp_path, capsys):
    path = _write_config(cli_config, tmp_path)
    assert main(["simulate", "--config", path]) == 0
    scan_path = os.path.join(cli_config["out_dir"], "scan.csv")
    with open(scan_path, "r", encoding="utf-8") as f:
        lines = f.readlines()[:10]
    with open(scan_path, "w", encoding="utf-8") as f:
        f.writelines(lines)
        f.write("8,-7.99,0.5\n")
    with pytest.raises(FormatError) as exc:
        read_scan(scan_path)
    assert exc.value.row == 11
    assert main(["fit", "--config", path]) == 1
    assert "row 11" in capsys.readouterr().err


def test_main_missing_dc_file(cli_config, tmp_path):
    path = _write_config(cli_config, tmp_path)
    assert main(["simulate", "--config", path]) == 0
    assert main(["fit", "--config", path, "--dc", str(tmp_path / "nowhere.csv")]) == 1


def test_main_flat_dc_is_calibration_failure(cli_config, tmp_path):
    path = _write_config(cli_config, tmp_path)
    assert main(["simulate", "--config", path]) == 0
    flat = str(tmp_path / "flat.csv")
    index = np.arange(250) * 200 + 99.5
    write_csv_atomic(flat, "dc", ("index", "delta", "level"), np.column_stack([index, np.zeros(250), np.ones(250)]))
    assert main(["fit", "--config", path, "--dc", flat]) == 2


def test_main_config_errors(tmp_path, capsys):
    assert main(["coeffs", "--config", str(tmp_path / "missing.json")]) == 1
    assert "config file not found" in capsys.readouterr().err
    assert main(["coeffs", "--config", str(tmp_path / "missing.json"), "--grid", "1:0:5"]) == 1
    assert main([]) == 1


def test_main_flag_overrides(cli_config, tmp_path):
    path = _write_config(cli_config, tmp_path)
    out = str(tmp_path / "flags")
    assert main(["coeffs", "--config", path, "--out", out, "--grid", "-2:2:5", "--d", "0.5"]) == 0
    _, data = read_csv(os.path.join(out, "coeffs.csv"), "coeffs")
    assert data.shape == (5, 10)
    # T at resonance is 1 - d
    assert data[2, 3] == pytest.approx(0.5)


def test_grid_value_may_start_with_minus():
    assert _attach_option_values(["coeffs", "--grid", "-8:8:41", "--d", "0"]) == ["coeffs", "--grid=-8:8:41", "--d", "0"]
    assert _attach_option_values(["coeffs", "--grid=-8:8:41"]) == ["coeffs", "--grid=-8:8:41"]
    assert _attach_option_values(["coeffs", "--grid"]) == ["coeffs", "--grid"]


def test_coeffs_finite_at_dark_fringe(cli_config, tmp_path, caplog):
    """Matched lossless-coupled cavity: normalized tables stay finite through delta = 0."""
    path = _write_config(cli_config, tmp_path)
    out = str(tmp_path / "dark")
    argv = ["coeffs", "--config", path, "--out", out, "--grid=-30:30:601", "--omega-ratio", "20", "--d", "0", "--f2", "0"]
    assert main(argv) == 0
    assert "reflected LO vanishes" in caplog.text
    for name in ("coeffs_sideband.csv", "coeffs_sa.csv"):
        columns, data = read_csv(os.path.join(out, name), "coeffs_basis")
        assert np.all(np.isfinite(data))
        row = data[300]
        assert row[0] == 0.0
        assert row[-1] == 0.0
        cos = row[1:5]
        assert float(cos @ cos) + row[columns.index("vac_cc")] == pytest.approx(1.0, abs=1e-12)


def test_run_config_drops_private_keys(cli_config, tmp_path):
    path = _write_config(cli_config, tmp_path)
    out = str(tmp_path / "sim")
    assert main(["simulate", "--config", path, "--out", out]) == 0
    saved = read_json(os.path.join(out, "run_config.json"))
    assert "_config_dir" not in saved
    assert saved["out_dir"] == out
    assert saved["scan"]["seed"] == 3



def test_rank_report(cli_config):
    cfg = copy.deepcopy(cli_config)
    cfg["grid"] = "-8:8:401"
    report = cmd_rank(cfg)
    assert report["configured"]["second_moments"]["rank"] == 10
    assert report["lossless"]["second_moments"]["rank"] < 10
    assert report["quadrature_family"] == {"hd": 9, "complete": 10}
    assert os.path.exists(os.path.join(cfg["out_dir"], "rank.json"))


def test_phi_sweep_traces_circle(cli_config):
    cfg = copy.deepcopy(cli_config)
    cfg["sweep"]["n_phi"] = 3
    table = cmd_phi_sweep(cfg)
    assert table.shape == (3, 11)
    assert np.allclose(table[:, 0], [0.0, 2 * np.pi / 3, 4 * np.pi / 3])
    assert np.all(np.abs(table[:, 9] - 31.3) < 4.0 * table[:, 10])
    # p_s and q_a stay at zero
    assert np.all(np.abs(table[:, 1]) < 4.0 * table[:, 5])
    assert np.all(np.abs(table[:, 4]) < 4.0 * table[:, 8])
    _, data = read_csv(os.path.join(cfg["out_dir"], "phi_sweep.csv"), "phi_sweep")
    assert np.allclose(data, table)


def test_tomography_table(cli_config):
    table = cmd_tomography(cli_config)
    assert table.shape == (41 * 8, 4)
    _, data = read_csv(os.path.join(cli_config["out_dir"], "tomography.csv"), "tomography")
    assert np.allclose(data, table)


def test_roundtrip_report(cli_config):
    report = cmd_roundtrip(cli_config)
    assert len(report["runs"]) == 1
    assert len(report["runs"][0]["z_mean"]) == 4 and len(report["runs"][0]["z_cov10"]) == 10
    assert report["max_abs_z"] < 5.0
    assert len(report["se_ratio_to_quoted"]["mean_sa"]) == 4
    assert os.path.exists(os.path.join(cli_config["out_dir"], "roundtrip.json"))


@pytest.mark.slow
def test_full_phi_sweep_stays_on_circle(cli_config):
    """Fourteen full-size scans: every point within 3 standard errors of the radius-31.3 circle."""
    cfg = copy.deepcopy(cli_config)
    cfg["scan"]["n_samples"] = 450000
    cfg["scan"]["seed"] = 0
    table = cmd_phi_sweep(cfg)
    assert table.shape == (14, 11)
    assert np.all(np.abs(table[:, 9] - 31.3) < 3.0 * table[:, 10])
    assert np.all(np.abs(table[:, 1]) < 3.0 * table[:, 5])
    assert np.all(np.abs(table[:, 4]) < 3.0 * table[:, 8])
