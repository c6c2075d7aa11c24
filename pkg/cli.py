#!/usr/bin/env python3
"""
Command-line front end for resonator-detection experiments.

  coeffs      transfer functions and J_cos/J_sin coefficients on the grid
  simulate    Monte Carlo scan + binned moments + DC profile
  fit         calibrate and reconstruct a state from scan files
  roundtrip   simulate and fit, report z-scores against the truth
  rank        identifiability of the moment designs
  phi-sweep   mean fits over a sweep of modulation phase
  tomography  mean and variance of J_theta on a (delta, theta) grid

Exit codes: 0 ok, 1 config / I/O / format error, 2 calibration failure or model mismatch.
"""
import argparse
import os
import sys
from typing import Any, Dict, List, Optional

import numpy as np

from app_paths import get_logger
from config_rd import (
    ConfigError,
    apply_overrides,
    get_resonator_params,
    get_scan_config,
    get_state,
    load_config,
    parse_bool,
    parse_grid,
    save_config,
)
from estimator import (
    Calibration,
    CalibrationError,
    ModelMismatchError,
    calibrate_dc,
    fit_first_moments,
    fit_scan,
    identifiability_report,
    imbalance,
)
from gaussian_state import SA_MATRIX, Basis, PhaseModSpec, cov_to_vec10, phase_modulated_state, state_to_json
from measurement_model import coefficient_arrays, hd_family_rank, normalized_coefficient_arrays, tomography_grid
from rd_io import FormatError, column, read_csv, read_json, save_json_atomic, write_csv_atomic
from scan_simulator import ScanConfig, ScanData, bin_moments, dc_curve, simulate_scan
from transfer import ResonatorParams, phase_psi, psi_singular, reflection, sql_level, transmission_T

logger = get_logger("cli")

# Uncertainties quoted for the reference measurement; the roundtrip report compares against them.
QUOTED_MEAN_SE = 0.6
QUOTED_VARIANCE_SE = 0.03

QUAD_LABELS = {Basis.SIDEBAND: ("pp", "qp", "pm", "qm"), Basis.SYM_ANTISYM: ("ps", "qs", "pa", "qa")}


def _out_path(cfg: Dict[str, Any], name: str) -> str:
    return os.path.join(cfg["out_dir"], name)


def _with_seed(scan: ScanConfig, seed: int) -> ScanConfig:
    data = scan.to_dict()
    data["seed"] = int(seed)
    return ScanConfig.from_dict(data)


# --- coeffs ---

def cmd_coeffs(cfg: Dict[str, Any]) -> List[str]:
    """coeffs.csv plus the coefficient rows in both bases."""
    params = get_resonator_params(cfg)
    grid = parse_grid(cfg["grid"])
    normalized = parse_bool(cfg["normalized"])
    r = np.asarray(reflection(grid, params.d))
    singular = np.asarray(psi_singular(grid, params.d))
    if np.any(singular):
        logger.warning("reflection phase undefined at %d grid point(s); one-sided limit used", int(singular.sum()))
    c, vac, sql = coefficient_arrays(grid, params)
    # G = x + iy is recovered from the cosine row: c_cos = (x+, y+, x-, y-)
    table = np.column_stack([
        grid, r.real, r.imag, np.asarray(transmission_T(grid, params.d)), np.asarray(phase_psi(grid, params.d)),
        c[:, 0, 0], c[:, 0, 1], c[:, 0, 2], c[:, 0, 3], sql,
    ])
    written = [_out_path(cfg, "coeffs.csv")]
    write_csv_atomic(written[0], "coeffs", ("delta", "re_r", "im_r", "T", "psi", "x_p", "y_p", "x_m", "y_m", "sql"), table)

    if normalized:
        c, vac, _ = normalized_coefficient_arrays(grid, params)
    for basis in (Basis.SIDEBAND, Basis.SYM_ANTISYM):
        cb = c @ _basis_matrix(basis)
        labels = QUAD_LABELS[basis]
        columns = (["delta"] + [f"cos_{q}" for q in labels] + [f"sin_{q}" for q in labels]
                   + ["vac_cc", "vac_ss", "vac_cs", "sql"])
        data = np.column_stack([grid, cb[:, 0], cb[:, 1], vac[:, 0, 0], vac[:, 1, 1], vac[:, 0, 1], sql])
        path = _out_path(cfg, f"coeffs_{basis.value}.csv")
        write_csv_atomic(path, "coeffs_basis", columns, data)
        written.append(path)
    print(f"coeffs: {len(grid)} points, d={params.d}, omega_ratio={params.omega_ratio}, f2={params.f2}")
    return written


def _basis_matrix(basis: Basis) -> np.ndarray:
    return SA_MATRIX if basis is Basis.SYM_ANTISYM else np.eye(4)


# --- simulate ---

def _moments_table(records: ScanData, scan: ScanConfig, params: ResonatorParams) -> np.ndarray:
    curves = bin_moments(records, scan)
    per = scan.bin_cov // scan.bin_mean
    mean_c = curves.mean_c.reshape(-1, per).mean(axis=1)
    mean_s = curves.mean_s.reshape(-1, per).mean(axis=1)
    sql = np.asarray(sql_level(curves.delta_cov, params))
    return np.column_stack([curves.delta_cov, mean_c, mean_s, curves.var_c, curves.var_s, curves.cov_cs, sql])


def _write_dc(cfg: Dict[str, Any], params: ResonatorParams, scan: ScanConfig, path: str) -> None:
    dc = cfg.get("dc") or {}
    index, delta, level = dc_curve(params, scan, float(dc.get("gain", 1.0)), float(dc.get("offset", 0.0)),
                                   float(dc.get("noise", 0.0)))
    write_csv_atomic(path, "dc", ("index", "delta", "level"), np.column_stack([index, delta, level]))


def cmd_simulate(cfg: Dict[str, Any]) -> List[str]:
    params = get_resonator_params(cfg)
    scan = get_scan_config(cfg)
    state = get_state(cfg)
    records = simulate_scan(state, params, scan)
    paths = {name: _out_path(cfg, name) for name in ("scan.csv", "moments.csv", "dc.csv", "state.json", "run_config.json")}
    write_csv_atomic(paths["scan.csv"], "scan", ("index", "delta", "j_cos", "j_sin"),
                     np.column_stack([records.index, records.delta, records.j_cos, records.j_sin]),
                     int_columns=("index",))
    write_csv_atomic(paths["moments.csv"], "moments", ("delta", "mean_c", "mean_s", "var_c", "var_s", "cov_cs", "sql"),
                     _moments_table(records, scan, params))
    _write_dc(cfg, params, scan, paths["dc.csv"])
    save_json_atomic(paths["state.json"], state_to_json(state))
    save_config(cfg, paths["run_config.json"])
    print(f"simulate: {len(records)} samples, {scan.n_bins} bins, seed={scan.seed} -> {cfg['out_dir']}")
    return list(paths.values())


# --- fit ---

def read_scan(path: str) -> ScanData:
    columns, data = read_csv(path, "scan")
    return ScanData(column(columns, data, "index").astype(np.int64), column(columns, data, "delta"),
                    column(columns, data, "j_cos"), column(columns, data, "j_sin"))


def resolve_calibration(cfg: Dict[str, Any], params: ResonatorParams,
                        dc_path: Optional[str], calib_path: Optional[str]) -> Optional[Calibration]:
    """--calib wins over a DC file; with neither the recorded detuning is used."""
    if calib_path:
        return Calibration.from_dict(read_json(calib_path))
    if dc_path:
        if not os.path.exists(dc_path):
            raise FileNotFoundError(f"DC profile not found: {dc_path}")
        columns, data = read_csv(dc_path, "dc")
        offset = float((cfg.get("dc") or {}).get("offset", 0.0))
        return calibrate_dc(column(columns, data, "index"), column(columns, data, "level"), params.f2, offset)
    return None


def cmd_fit(cfg: Dict[str, Any], scan_path: Optional[str] = None, dc_path: Optional[str] = None,
            calib_path: Optional[str] = None) -> Dict[str, Any]:
    params = get_resonator_params(cfg)
    scan = get_scan_config(cfg)
    scan_path = scan_path or _out_path(cfg, "scan.csv")
    if dc_path is None and not calib_path and os.path.exists(_out_path(cfg, "dc.csv")):
        dc_path = _out_path(cfg, "dc.csv")
    records = read_scan(scan_path)
    calib = resolve_calibration(cfg, params, dc_path, calib_path)
    fit_cfg = cfg.get("fit") or {}
    noise = fit_cfg.get("electronic_noise")
    result = fit_scan(records, params, scan, calib,
                      electronic_noise=None if noise is None else float(noise),
                      project=parse_bool(fit_cfg.get("project_psd", False)))
    out = result.to_json()
    save_json_atomic(_out_path(cfg, "fit.json"), out)
    if calib is not None and not calib_path:
        save_json_atomic(_out_path(cfg, "calibration.json"), calib.to_dict())
    basis = Basis.parse(cfg.get("basis", "sideband"))
    block = out[basis.value]
    print(f"fit ({basis.value}): mean={np.round(block['mean'], 4).tolist()} se={np.round(block['mean_se'], 4).tolist()}")
    print(f"     chi2/dof={out['chi2_dof']}  admissible={out['diagnostics']['admissible']}")
    return out


# --- roundtrip ---

def cmd_roundtrip(cfg: Dict[str, Any]) -> Dict[str, Any]:
    params = get_resonator_params(cfg)
    base = get_scan_config(cfg)
    truth = get_state(cfg).in_basis(Basis.SIDEBAND)
    dc = cfg.get("dc") or {}
    n_seeds = int((cfg.get("roundtrip") or {}).get("n_seeds", 1))
    if n_seeds < 1:
        raise ConfigError("roundtrip.n_seeds must be >= 1")
    runs, all_z = [], []
    mean_se_sa, var_se = [], []
    for k in range(n_seeds):
        scan = _with_seed(base, base.seed + k)
        records = simulate_scan(truth, params, scan)
        index, _, level = dc_curve(params, scan, float(dc.get("gain", 1.0)), float(dc.get("offset", 0.0)),
                                   float(dc.get("noise", 0.0)))
        calib = calibrate_dc(index, level, params.f2, float(dc.get("offset", 0.0)))
        fit = fit_scan(records, params, scan, calib)
        first, second = fit.first.in_basis(Basis.SIDEBAND), fit.second.in_basis(Basis.SIDEBAND)
        z_mean = (first.mean - truth.mean) / first.se
        z_cov = (second.cov10 - cov_to_vec10(truth.cov)) / second.se10
        all_z.extend(z_mean.tolist() + z_cov.tolist())
        mean_se_sa.append(fit.first.in_basis(Basis.SYM_ANTISYM).se)
        var_se.append(second.se10[[0, 4, 7, 9]])
        runs.append({
            "seed": scan.seed,
            "calibration": calib.to_dict(),
            "mean": first.mean.tolist(),
            "mean_se": first.se.tolist(),
            "cov10": second.cov10.tolist(),
            "cov10_se": second.se10.tolist(),
            "z_mean": z_mean.tolist(),
            "z_cov10": z_cov.tolist(),
            "imbalance": list(imbalance(fit)),
        })
    z = np.abs(np.array(all_z))
    report = {
        "truth": state_to_json(truth),
        "params": params.to_dict(),
        "runs": runs,
        "fraction_within_3": float(np.mean(z <= 3.0)),
        "max_abs_z": float(np.max(z)),
        "se_ratio_to_quoted": {
            "mean_sa": (np.mean(mean_se_sa, axis=0) / QUOTED_MEAN_SE).tolist(),
            "variance": (np.mean(var_se, axis=0) / QUOTED_VARIANCE_SE).tolist(),
        },
    }
    save_json_atomic(_out_path(cfg, "roundtrip.json"), report)
    print(f"roundtrip: {n_seeds} seed(s), {report['fraction_within_3']:.3f} of z-scores within 3, max |z| {report['max_abs_z']:.2f}")
    return report


# --- rank ---

def cmd_rank(cfg: Dict[str, Any]) -> Dict[str, Any]:
    params = get_resonator_params(cfg)
    grid = parse_grid(cfg["grid"])
    lossless = ResonatorParams(d=1.0, omega_ratio=params.omega_ratio, f2=0.0)
    family = hd_family_rank()
    report = {
        "grid": cfg["grid"],
        "configured": {"params": params.to_dict(), **identifiability_report(params, grid).to_json()},
        "lossless": {"params": lossless.to_dict(), **identifiability_report(lossless, grid).to_json()},
        "quadrature_family": {"hd": family["hd"], "complete": family["complete"]},
    }
    save_json_atomic(_out_path(cfg, "rank.json"), report)
    print(f"rank: configured {report['configured']['second_moments']['rank']}/10, "
          f"lossless {report['lossless']['second_moments']['rank']}/10, "
          f"tied-angle family {family['hd']}/10")
    return report


# --- phi sweep ---

def cmd_phi_sweep(cfg: Dict[str, Any]) -> np.ndarray:
    params = get_resonator_params(cfg)
    base = get_scan_config(cfg)
    sweep = cfg.get("sweep") or {}
    dc = cfg.get("dc") or {}
    n_phi = int(sweep.get("n_phi", 14))
    if n_phi < 1:
        raise ConfigError("sweep.n_phi must be >= 1")
    rows = []
    for k, phi in enumerate(np.linspace(0.0, 2.0 * np.pi, n_phi, endpoint=False)):
        spec = PhaseModSpec(float(sweep.get("s", 31.3)), float(phi),
                            float(sweep.get("excess_p", 0.0)), float(sweep.get("excess_q", 0.0)))
        scan = _with_seed(base, base.seed + k)
        records = simulate_scan(phase_modulated_state(spec), params, scan)
        index, _, level = dc_curve(params, scan, float(dc.get("gain", 1.0)), float(dc.get("offset", 0.0)),
                                   float(dc.get("noise", 0.0)))
        calib = calibrate_dc(index, level, params.f2, float(dc.get("offset", 0.0)))
        fit = fit_first_moments(bin_moments(records, scan), calib, params, basis=Basis.SYM_ANTISYM)
        ps, qs, pa, qa = fit.mean
        radius = float(np.hypot(qs, pa))
        grad = np.array([0.0, qs / radius, pa / radius, 0.0]) if radius > 0 else np.zeros(4)
        radius_se = float(np.sqrt(max(grad @ fit.covariance @ grad, 0.0)))
        rows.append([phi, ps, qs, pa, qa, *fit.se, radius, radius_se])
    table = np.array(rows)
    write_csv_atomic(_out_path(cfg, "phi_sweep.csv"), "phi_sweep",
                     ("phi", "p_s", "q_s", "p_a", "q_a", "se_p_s", "se_q_s", "se_p_a", "se_q_a", "radius", "radius_se"),
                     table)
    print(f"phi-sweep: {n_phi} states, radius {table[:, 9].mean():.3f} (spread {table[:, 9].std():.3f})")
    return table


# --- tomography ---

def cmd_tomography(cfg: Dict[str, Any]) -> np.ndarray:
    params = get_resonator_params(cfg)
    grid = parse_grid(cfg["grid"])
    n_theta = int((cfg.get("tomography") or {}).get("n_theta", 8))
    if n_theta < 1:
        raise ConfigError("tomography.n_theta must be >= 1")
    thetas = np.linspace(0.0, np.pi, n_theta, endpoint=False)
    table = tomography_grid(get_state(cfg), params, grid, thetas, normalized=parse_bool(cfg["normalized"]))
    write_csv_atomic(_out_path(cfg, "tomography.csv"), "tomography", ("delta", "theta", "mean", "variance"), table)
    print(f"tomography: {len(grid)} x {n_theta} points")
    return table


# --- argument parsing ---

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config JSON (default: config.json in the data root)")
    common.add_argument("--seed", type=int, help="scan seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--grid", help="detuning grid start:end:count")
    common.add_argument("--omega-ratio", dest="omega_ratio", type=float, help="sideband offset Omega/gamma")
    common.add_argument("--d", type=float, help="impedance matching parameter")
    common.add_argument("--f2", type=float, help="mode mismatch power fraction")
    common.add_argument("--basis", choices=[b.value for b in Basis], help="basis for printed results")
    common.add_argument("--normalized", choices=["true", "false"], help="SQL-normalized output")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rd", description="Resonator detection of two-mode sideband states")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")
    common = _common_parser()
    subparsers.add_parser("coeffs", parents=[common], help="Transfer functions and coefficients on the grid")
    subparsers.add_parser("simulate", parents=[common], help="Simulate a scan with moments and DC profile")
    fit_parser = subparsers.add_parser("fit", parents=[common], help="Calibrate and fit a recorded scan")
    fit_parser.add_argument("--scan", help="scan CSV (default: <out>/scan.csv)")
    fit_parser.add_argument("--dc", help="DC profile CSV (default: <out>/dc.csv)")
    fit_parser.add_argument("--calib", help="calibration JSON; skips the DC fit")
    subparsers.add_parser("roundtrip", parents=[common], help="Simulate, fit and score against the truth")
    subparsers.add_parser("rank", parents=[common], help="Rank of the moment designs")
    subparsers.add_parser("phi-sweep", parents=[common], help="Mean fits over modulation phase")
    subparsers.add_parser("tomography", parents=[common], help="J_theta moments on a (delta, theta) grid")
    return parser


def config_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    cfg = load_config(args.config)
    return apply_overrides(
        cfg,
        seed=args.seed,
        out=args.out,
        grid=args.grid,
        omega_ratio=args.omega_ratio,
        d=args.d,
        f2=args.f2,
        basis=args.basis,
        normalized=None if args.normalized is None else parse_bool(args.normalized),
    )


def run(args: argparse.Namespace) -> None:
    cfg = config_from_args(args)
    if args.command == "coeffs":
        cmd_coeffs(cfg)
    elif args.command == "simulate":
        cmd_simulate(cfg)
    elif args.command == "fit":
        cmd_fit(cfg, args.scan, args.dc, args.calib)
    elif args.command == "roundtrip":
        cmd_roundtrip(cfg)
    elif args.command == "rank":
        cmd_rank(cfg)
    elif args.command == "phi-sweep":
        cmd_phi_sweep(cfg)
    elif args.command == "tomography":
        cmd_tomography(cfg)


def _attach_option_values(argv: List[str], options=("--grid",)) -> List[str]:
    """Join "--grid -8:8:401" into "--grid=-8:8:401"; argparse reads a leading '-' as a new option."""
    out: List[str] = []
    i = 0
    while i < len(argv):
        if argv[i] in options and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_attach_option_values(sys.argv[1:] if argv is None else list(argv)))
    if not args.command:
        parser.print_help()
        return 1
    try:
        run(args)
    except (CalibrationError, ModelMismatchError) as e:
        print(f"Error: {e}", file=sys.stderr)
        logger.error("%s: %s", args.command, e)
        return 2
    except (ConfigError, FormatError, OSError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        logger.error("%s: %s", args.command, e)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
