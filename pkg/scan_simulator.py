"""
Monte Carlo resonator scan: per-sample (J_cos, J_sin) draws from the predicted
Gaussian at each detuning, the two-level binning of the acquisition, and the DC
reflection profile used for calibration.

Random numbers come from counter-based Philox streams keyed by (seed, bin index),
so any subset of bins can be generated alone, in any order, on any number of
threads, and still match the full scan bin for bin.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from app_paths import get_logger
from gaussian_state import TwoModeGaussian
from measurement_model import predict_moment_arrays
from transfer import ResonatorParams, sql_level

logger = get_logger("scan_simulator")

# Spawn key of the DC noise stream; bin streams use their bin index.
DC_STREAM = 2 ** 40


@dataclass(frozen=True)
class ScanConfig:
    delta_start: float = -8.0
    delta_end: float = 8.0
    n_samples: int = 450000
    bin_mean: int = 200
    bin_cov: int = 1000
    seed: int = 0
    electronic_noise: float = 0.0
    workers: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.delta_start) and np.isfinite(self.delta_end)) or self.delta_end <= self.delta_start:
            raise ValueError(f"need finite delta_start < delta_end, got {self.delta_start}, {self.delta_end}")
        for name in ("n_samples", "bin_mean", "bin_cov", "workers"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if self.bin_cov % self.bin_mean:
            raise ValueError(f"bin_cov ({self.bin_cov}) must be a multiple of bin_mean ({self.bin_mean})")
        if self.n_samples % self.bin_cov:
            raise ValueError(f"n_samples ({self.n_samples}) must be a multiple of bin_cov ({self.bin_cov})")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not (np.isfinite(self.electronic_noise) and self.electronic_noise >= 0.0):
            raise ValueError("electronic_noise must be >= 0")

    @property
    def n_bins(self) -> int:
        return self.n_samples // self.bin_cov

    @property
    def delta_per_sample(self) -> float:
        return (self.delta_end - self.delta_start) / (self.n_samples - 1)

    def delta_at(self, index) -> np.ndarray:
        """Linear sweep: sample 0 at delta_start, the last sample at delta_end."""
        return self.delta_start + np.asarray(index, dtype=float) * self.delta_per_sample

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScanConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown scan keys: {sorted(unknown)}")
        kwargs = dict(data)
        for name in ("n_samples", "bin_mean", "bin_cov", "seed", "workers"):
            if name in kwargs:
                kwargs[name] = int(kwargs[name])
        return cls(**kwargs)


class ScanRecord(NamedTuple):
    index: int
    delta: float
    j_cos: float
    j_sin: float


@dataclass(frozen=True, eq=False)
class ScanData:
    """Column store of ScanRecords; indexing yields single records."""
    index: np.ndarray
    delta: np.ndarray
    j_cos: np.ndarray
    j_sin: np.ndarray

    def __post_init__(self):
        n = len(self.index)
        if not (len(self.delta) == len(self.j_cos) == len(self.j_sin) == n):
            raise ValueError("scan columns must have equal length")

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, i: int) -> ScanRecord:
        return ScanRecord(int(self.index[i]), float(self.delta[i]), float(self.j_cos[i]), float(self.j_sin[i]))

    def __iter__(self) -> Iterator[ScanRecord]:
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_records(cls, records: Iterable[ScanRecord]) -> "ScanData":
        rows = list(records)
        if not rows:
            return cls(np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0), np.zeros(0))
        index, delta, j_cos, j_sin = zip(*rows)
        return cls(np.asarray(index, dtype=np.int64), np.asarray(delta, dtype=float),
                   np.asarray(j_cos, dtype=float), np.asarray(j_sin, dtype=float))

    @classmethod
    def concat(cls, parts: Sequence["ScanData"]) -> "ScanData":
        if not parts:
            return cls.from_records([])
        return cls(
            np.concatenate([p.index for p in parts]),
            np.concatenate([p.delta for p in parts]),
            np.concatenate([p.j_cos for p in parts]),
            np.concatenate([p.j_sin for p in parts]),
        )


@dataclass(frozen=True, eq=False)
class MomentCurves:
    """
    Binned moments. Means per bin_mean block (index_mean, delta_mean, mean_c,
    mean_s); second moments per bin_cov block after removing each block's
    bin_mean means (index_cov, delta_cov, var_c, var_s, cov_cs).
    """
    index_mean: np.ndarray
    delta_mean: np.ndarray
    mean_c: np.ndarray
    mean_s: np.ndarray
    index_cov: np.ndarray
    delta_cov: np.ndarray
    var_c: np.ndarray
    var_s: np.ndarray
    cov_cs: np.ndarray
    bin_mean: int
    bin_cov: int
    dropped: int = 0

    @property
    def dof(self) -> int:
        """Degrees of freedom of each second-moment bin."""
        return self.bin_cov - self.bin_cov // self.bin_mean

    @property
    def cov_bin_of_mean(self) -> np.ndarray:
        """Second-moment bin enclosing each mean bin."""
        return np.arange(len(self.mean_c)) // (self.bin_cov // self.bin_mean)


def bin_rng(seed: int, bin_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(bin_index),))))


def psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root of a stack of PSD matrices, negative eigenvalues clamped to 0."""
    w, v = np.linalg.eigh(cov)
    w = np.clip(w, 0.0, None)
    return np.einsum("...ij,...j,...kj->...ik", v, np.sqrt(w), v)


def _simulate_bin(state: TwoModeGaussian, params: ResonatorParams, config: ScanConfig, b: int) -> ScanData:
    index = np.arange(b * config.bin_cov, (b + 1) * config.bin_cov, dtype=np.int64)
    delta = config.delta_at(index)
    mean, cov = predict_moment_arrays(state, delta, params, normalized=True)
    if config.electronic_noise:
        cov = cov + config.electronic_noise * np.eye(2)
    z = bin_rng(config.seed, b).standard_normal((len(index), 2))
    samples = mean + np.einsum("nij,nj->ni", psd_sqrt(cov), z)
    return ScanData(index, delta, samples[:, 0].copy(), samples[:, 1].copy())


def simulate_scan(state: TwoModeGaussian, params: ResonatorParams, config: ScanConfig,
                  bins: Optional[Iterable[int]] = None) -> ScanData:
    """
    SQL-normalized samples for the requested second-moment bins (all by default),
    in bin order. Output depends only on (state, params, config), never on workers.
    """
    state.check_admissible()
    selected: List[int] = list(range(config.n_bins)) if bins is None else [int(b) for b in bins]
    for b in selected:
        if not 0 <= b < config.n_bins:
            raise ValueError(f"bin {b} outside scan of {config.n_bins} bins")

    def run(b: int) -> ScanData:
        return _simulate_bin(state, params, config, b)

    if config.workers > 1 and len(selected) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(run, selected))
    else:
        parts = [run(b) for b in selected]
    logger.info("simulated %d bins (%d samples), seed=%d", len(selected), len(selected) * config.bin_cov, config.seed)
    return ScanData.concat(parts)


def bin_moments(records: ScanData, config: ScanConfig) -> MomentCurves:
    """Bin a scan sorted by index; a short trailing second-moment bin is dropped and logged."""
    if not isinstance(records, ScanData):
        records = ScanData.from_records(records)
    n = len(records)
    if n and np.any(np.diff(records.index) <= 0):
        raise ValueError("scan records must be sorted by strictly increasing index")
    n_cov = n // config.bin_cov
    if n_cov == 0:
        raise ValueError(f"scan has {n} samples, fewer than one bin of {config.bin_cov}")
    keep = n_cov * config.bin_cov
    dropped = n - keep
    if dropped:
        logger.warning("dropped short trailing bin of %d samples (bin_cov=%d)", dropped, config.bin_cov)
    per = config.bin_cov // config.bin_mean
    n_blocks = n_cov * per

    def blocks(col: np.ndarray) -> np.ndarray:
        return col[:keep].reshape(n_blocks, config.bin_mean)

    jc, js = blocks(records.j_cos), blocks(records.j_sin)
    mean_c, mean_s = jc.mean(axis=1), js.mean(axis=1)
    res_c = (jc - mean_c[:, None]).reshape(n_cov, config.bin_cov)
    res_s = (js - mean_s[:, None]).reshape(n_cov, config.bin_cov)
    dof = config.bin_cov - per

    index = records.index[:keep].astype(float)
    delta = records.delta[:keep]
    return MomentCurves(
        index_mean=index.reshape(n_blocks, -1).mean(axis=1),
        delta_mean=delta.reshape(n_blocks, -1).mean(axis=1),
        mean_c=mean_c,
        mean_s=mean_s,
        index_cov=index.reshape(n_cov, -1).mean(axis=1),
        delta_cov=delta.reshape(n_cov, -1).mean(axis=1),
        var_c=np.sum(res_c * res_c, axis=1) / dof,
        var_s=np.sum(res_s * res_s, axis=1) / dof,
        cov_cs=np.sum(res_c * res_s, axis=1) / dof,
        bin_mean=config.bin_mean,
        bin_cov=config.bin_cov,
        dropped=dropped,
    )


def dc_profile(params: ResonatorParams, grid, gain: float = 1.0, offset: float = 0.0,
               noise: float = 0.0, seed: int = 0) -> np.ndarray:
    """
    Reflected DC level gain * sql_level(delta) + offset, with optional
    multiplicative Gaussian noise of relative size `noise`.
    """
    level = gain * np.atleast_1d(np.asarray(sql_level(np.asarray(grid, dtype=float), params))) + offset
    if noise > 0.0:
        z = bin_rng(seed, DC_STREAM).standard_normal(level.shape)
        level = level * (1.0 + noise * z)
    return level


def dc_curve(params: ResonatorParams, config: ScanConfig, gain: float = 1.0, offset: float = 0.0,
             noise: float = 0.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """DC profile sampled at the mean-bin centers of the scan: (index, delta, level)."""
    n_blocks = config.n_samples // config.bin_mean
    index = np.arange(n_blocks) * config.bin_mean + 0.5 * (config.bin_mean - 1)
    delta = config.delta_at(index)
    return index, delta, dc_profile(params, delta, gain, offset, noise, config.seed)
