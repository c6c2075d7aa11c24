"""
Configuration for resonator-detection runs.
Stored in config.json (data root from app_paths, or any path given with --config).
Missing keys fall back to DEFAULT_CONFIG; command-line flags override file values.
"""
import copy
import os
from typing import Any, Dict, Optional

import numpy as np

from app_paths import get_project_root_for_data
from gaussian_state import PhaseModSpec, TwoModeGaussian, mixed_basis_state, phase_modulated_state, state_from_json
from rd_io import read_json, save_json_atomic
from scan_simulator import ScanConfig
from transfer import ResonatorParams

CONFIG_FILENAME = "config.json"

DEFAULT_CONFIG: Dict[str, Any] = {
    # nearly impedance matched cavity, sidebands 2.9 half-widths out, 15% mode mismatch
    "resonator": {"d": 0.05, "omega_ratio": 2.9, "f2": 0.15},
    # Field names match ScanConfig exactly.
    "scan": {
        "delta_start": -8.0,
        "delta_end": 8.0,
        "n_samples": 450000,
        "bin_mean": 200,
        "bin_cov": 1000,
        "seed": 0,
        "electronic_noise": 0.0,
        "workers": 1,
    },
    # "moments": explicit mean/cov (each in its own basis); "phase_mod": {s, phi, excess_p, excess_q};
    # "file": state JSON at "path".
    "state": {
        "kind": "moments",
        "mean_basis": "sa",
        "mean": [-0.6, 2.2, 11.8, 0.2],
        "cov_basis": "sideband",
        "cov": [
            [1.25, 0.0, 0.0, 0.0],
            [0.0, 1.28, 0.0, 0.0],
            [0.0, 0.0, 1.28, 0.0],
            [0.0, 0.0, 0.0, 1.25],
        ],
    },
    "grid": "-8:8:401",
    "out_dir": "out",
    "normalized": True,
    "basis": "sideband",
    # DC reflection profile written next to each scan
    "dc": {"gain": 1.0, "offset": 0.0, "noise": 0.0},
    # electronic_noise None: take it from scan.electronic_noise
    "fit": {"project_psd": False, "electronic_noise": None},
    "sweep": {"n_phi": 14, "s": 31.3, "excess_p": 0.25, "excess_q": 0.28},
    "roundtrip": {"n_seeds": 1},
    "tomography": {"n_theta": 8},
}


class ConfigError(ValueError):
    """Invalid or unreadable configuration; the message names the key."""


def _project_config_path() -> str:
    root = get_project_root_for_data(__file__)
    return os.path.join(root, CONFIG_FILENAME)


def get_config_path(path: Optional[str] = None) -> str:
    """Return the path to the config file actually used."""
    return os.path.abspath(path) if path else _project_config_path()


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "state":
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Defaults merged with the file. An explicit path must exist; the default
    config.json may be absent.
    """
    resolved = get_config_path(path)
    if not os.path.exists(resolved):
        if path:
            raise ConfigError(f"config file not found: {resolved}")
        return copy.deepcopy(DEFAULT_CONFIG)
    try:
        data = read_json(resolved)
    except (ValueError, IOError) as e:
        raise ConfigError(f"cannot read config {resolved}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {resolved} must be a JSON object")
    out = _deep_merge(DEFAULT_CONFIG, data)
    out["_config_dir"] = os.path.dirname(resolved)
    return out


def save_config(config: Dict[str, Any], path: Optional[str] = None) -> None:
    data = {k: v for k, v in config.items() if not k.startswith("_")}
    save_json_atomic(get_config_path(path), data)


def apply_overrides(config: Dict[str, Any], **flags) -> Dict[str, Any]:
    """Flag values override file values one-to-one; None means not given."""
    cfg = copy.deepcopy(config)
    mapping = {
        "seed": ("scan", "seed"),
        "d": ("resonator", "d"),
        "f2": ("resonator", "f2"),
        "omega_ratio": ("resonator", "omega_ratio"),
        "grid": (None, "grid"),
        "out": (None, "out_dir"),
        "basis": (None, "basis"),
        "normalized": (None, "normalized"),
    }
    for name, value in flags.items():
        if value is None or name not in mapping:
            continue
        section, key = mapping[name]
        target = cfg if section is None else cfg.setdefault(section, {})
        target[key] = value
    return cfg


def parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected true/false, got {value!r}")


def parse_grid(spec: str) -> np.ndarray:
    """'start:end:count' -> linspace, count >= 2."""
    parts = str(spec).split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must look like start:end:count, got {spec!r}")
    try:
        start, end, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"grid {spec!r} has a non-numeric field") from None
    if count < 2:
        raise ConfigError(f"grid count must be >= 2, got {count}")
    if not (np.isfinite(start) and np.isfinite(end)) or end <= start:
        raise ConfigError(f"grid needs finite start < end, got {spec!r}")
    return np.linspace(start, end, count)


def get_resonator_params(config: Dict[str, Any]) -> ResonatorParams:
    raw = config.get("resonator") or {}
    try:
        return ResonatorParams(d=float(raw["d"]), omega_ratio=float(raw["omega_ratio"]), f2=float(raw.get("f2", 0.0)))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"resonator: {e}") from e


def get_scan_config(config: Dict[str, Any]) -> ScanConfig:
    try:
        return ScanConfig.from_dict(dict(config.get("scan") or {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"scan: {e}") from e


def get_phase_mod_spec(raw: Dict[str, Any]) -> PhaseModSpec:
    try:
        return PhaseModSpec(
            s=float(raw["s"]),
            phi=float(raw.get("phi", 0.0)),
            excess_p=float(raw.get("excess_p", 0.0)),
            excess_q=float(raw.get("excess_q", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"state: {e}") from e


def get_state(config: Dict[str, Any]) -> TwoModeGaussian:
    """Truth state from the 'state' block; inadmissible states raise ConfigError."""
    raw = config.get("state") or {}
    kind = str(raw.get("kind", "moments")).lower()
    try:
        if kind == "phase_mod":
            return phase_modulated_state(get_phase_mod_spec(raw)).check_admissible()
        if kind == "file":
            path = raw.get("path") or ""
            if not os.path.isabs(path):
                path = os.path.join(config.get("_config_dir", ""), path)
            if not os.path.exists(path):
                raise ConfigError(f"state file not found: {path}")
            return state_from_json(read_json(path))
        if kind == "moments":
            basis = raw.get("basis", "sideband")
            return mixed_basis_state(raw["mean"], raw.get("mean_basis", basis), raw["cov"], raw.get("cov_basis", basis))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"state: {e}") from e
    raise ConfigError(f"state.kind must be moments, phase_mod or file, got {kind!r}")

