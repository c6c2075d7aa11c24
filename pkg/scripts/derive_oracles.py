#!/usr/bin/env python3
"""
Print the reference values the tests are frozen against.

1. Second-moment design spectra at the reference parameters and in the lossless case.
2. The quadrature-family ranks (tied vs free sideband angles).
3. Flat shot noise: max |Var - 1| for vacuum over a few (d, f2) pairs.
4. The lower-sideband coefficient near the reflection zero at large omega_ratio.
5. DC calibration spread of d with 1% multiplicative noise over many seeds.

Usage: python scripts/derive_oracles.py [n_seeds]
"""
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from estimator import CalibrationError, calibrate_dc, identifiability_report
from gaussian_state import vacuum
from measurement_model import coefficients, hd_family_rank, predict_moment_arrays
from scan_simulator import ScanConfig, dc_curve
from transfer import ResonatorParams

REFERENCE = ResonatorParams(d=0.05, omega_ratio=2.9, f2=0.15)
LOSSLESS = ResonatorParams(d=1.0, omega_ratio=2.9, f2=0.0)


def _print_spectrum(label, params, grid):
    report = identifiability_report(params, grid)
    sv = report.second_sv / report.second_sv[0]
    print(f"{label}: first rank {report.first_rank}, second rank {report.second_rank}, "
          f"condition {report.second_condition:.3e}")
    print("  normalized singular values: " + " ".join(f"{v:.3e}" for v in sv))
    if report.null_vector is not None:
        print("  null direction: " + np.array2string(report.null_vector, precision=4))


def _flat_shot_noise_error():
    grid = np.linspace(-10.0, 10.0, 2000)
    worst = 0.0
    for d in (0.0, 0.05, 0.7):
        for f2 in (0.0, 0.15, 0.6):
            params = ResonatorParams(d=d, omega_ratio=2.9, f2=f2)
            _, cov = predict_moment_arrays(vacuum(), grid, params)
            worst = max(worst, float(np.max(np.abs(cov - np.eye(2)))))
    return worst


def _dc_spread(n_seeds):
    errors = []
    failures = 0
    for seed in range(n_seeds):
        config = ScanConfig(seed=seed)
        index, _, level = dc_curve(REFERENCE, config, noise=0.01)
        try:
            calib = calibrate_dc(index, level, REFERENCE.f2)
        except CalibrationError:
            failures += 1
            continue
        errors.append(abs(calib.d - REFERENCE.d))
    return np.array(errors), failures


def main():
    n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 100
    grid = np.linspace(-8.0, 8.0, 401)

    print("== design spectra (401 points, delta in [-8, 8]) ==")
    _print_spectrum("reference", REFERENCE, grid)
    _print_spectrum("lossless", LOSSLESS, grid)

    family = hd_family_rank()
    print(f"\n== quadrature family ranks ==\n  tied angles {family['hd']}, free angles {family['complete']}")
    if family["hd_null_vector"] is not None:
        print("  tied-angle null vector: " + np.array2string(family["hd_null_vector"], precision=4))

    print(f"\n== flat shot noise ==\n  max |cov - I| for vacuum: {_flat_shot_noise_error():.3e}")

    edge = ResonatorParams(d=0.0, omega_ratio=1e3, f2=0.0)
    cs = coefficients(-edge.omega_ratio, edge)
    print("\n== reflection zero at omega_ratio = 1e3, delta = -omega_ratio ==")
    print("  c_cos = " + np.array2string(cs.c_cos, precision=6))

    errors, failures = _dc_spread(n_seeds)
    print(f"\n== DC calibration, 1% noise, {n_seeds} seeds ==")
    if errors.size:
        print(f"  |d_hat - d|: median {np.median(errors):.2e}, p99 {np.percentile(errors, 99):.2e}, "
              f"max {errors.max():.2e}")
    print(f"  calibration failures: {failures}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
