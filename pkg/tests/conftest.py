"""Pytest fixtures for resonator-detection tests."""
import copy
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config_rd import DEFAULT_CONFIG  # noqa: E402
from gaussian_state import Basis, TwoModeGaussian, mixed_basis_state  # noqa: E402
from scan_simulator import ScanConfig  # noqa: E402
from transfer import ResonatorParams  # noqa: E402

REFERENCE_SA_MEANS = (-0.6, 2.2, 11.8, 0.2)
REFERENCE_SIDEBAND_VARIANCES = (1.25, 1.28, 1.28, 1.25)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: many-seed statistical checks (deselect with -m \"not slow\")")


@pytest.fixture
def reference_params():
    """Cavity and mode matching of the reference experiment."""
    return ResonatorParams(d=0.05, omega_ratio=2.9, f2=0.15)


@pytest.fixture
def lossless_params():
    return ResonatorParams(d=1.0, omega_ratio=2.9, f2=0.0)


@pytest.fixture
def reference_truth():
    """S/A means (-0.6, 2.2, 11.8, 0.2) with the 1.25 / 1.28 sideband noise pattern."""
    return mixed_basis_state(REFERENCE_SA_MEANS, Basis.SYM_ANTISYM, np.diag(REFERENCE_SIDEBAND_VARIANCES), Basis.SIDEBAND)


@pytest.fixture
def small_scan():
    """90 second-moment bins: fast, still covers both sideband resonances."""
    return ScanConfig(n_samples=90000, bin_mean=200, bin_cov=1000, seed=7)


@pytest.fixture
def reference_scan():
    return ScanConfig(seed=11)


@pytest.fixture
def cli_config(tmp_path):
    """Default config pointed at a temp output dir with a short scan."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    cfg["out_dir"] = str(tmp_path / "out")
    cfg["scan"]["n_samples"] = 50000
    cfg["scan"]["seed"] = 3
    cfg["grid"] = "-8:8:41"
    return cfg


@pytest.fixture
def random_admissible_states():
    """Random admissible covariances: symplectic images of thermal states."""
    rng = np.random.default_rng(1234)
    states = []
    for _ in range(10):
        # two-mode squeeze and local rotations are symplectic
        r = rng.uniform(0.0, 0.8)
        ch, sh = np.cosh(r), np.sinh(r)
        tms = np.array([
            [ch, 0, sh, 0],
            [0, ch, 0, -sh],
            [sh, 0, ch, 0],
            [0, -sh, 0, ch],
        ])
        a, b = rng.uniform(0, 2 * np.pi, 2)
        rot = np.zeros((4, 4))
        rot[:2, :2] = [[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]]
        rot[2:, 2:] = [[np.cos(b), -np.sin(b)], [np.sin(b), np.cos(b)]]
        s = rot @ tms
        nu = 1.0 + rng.uniform(0.0, 0.5, 2)
        v0 = np.diag([nu[0], nu[0], nu[1], nu[1]])
        states.append(TwoModeGaussian(rng.normal(0, 2, 4), s @ v0 @ s.T, Basis.SIDEBAND))
    return states
