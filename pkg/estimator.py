"""
Inversion of the scan model.

Two stages:
1. calibrate_dc fits the DC reflection profile (trust-region least squares) to get
   d, the sample-index -> detuning map and the detector gain. The mode mismatch
   f2 and the dark offset are inputs: the profile only sees (1 - f2) * (1 - d).
2. fit_first_moments / fit_second_moments solve weighted linear least squares for
   the 4 means and the 10 covariance entries, which enter the binned moment curves
   linearly once the calibration is fixed.
"""
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.optimize import least_squares

from app_paths import get_logger
from gaussian_state import SA_MATRIX, Basis, TwoModeGaussian, cov_to_vec10, symplectic_eigenvalues, vec10_to_cov
from measurement_model import RANK_TOL, design_matrices, normalized_coefficient_arrays, numerical_rank, quadratic_rows
from scan_simulator import MomentCurves, ScanConfig, ScanData, bin_moments
from transfer import ResonatorParams

logger = get_logger("estimator")

COND_LIMIT = 1e8
MISMATCH_SIGMAS = 3.0
# vec10 positions of the diagonal (p+ p+, q+ q+, p- p-, q- q-)
DIAG10 = (0, 4, 7, 9)
CURVES = ("var_c", "var_s", "cov_cs")


class CalibrationError(ValueError):
    """DC profile cannot be calibrated (no resonance dip, bad input)."""


class ModelMismatchError(ValueError):
    """Recovered moments are incompatible with the measurement model."""


@dataclass(frozen=True)
class Calibration:
    """Resonator parameters and the sample-index -> detuning map: delta = (index - delta_offset) / delta_scale."""
    d: float
    f2: float
    delta_scale: float
    delta_offset: float
    gain: float = 1.0
    offset: float = 0.0
    residual_rms: float = 0.0
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        if not 0.0 <= self.d <= 1.0:
            raise CalibrationError(f"calibrated d={self.d} outside [0, 1]")
        if not 0.0 <= self.f2 < 1.0:
            raise CalibrationError(f"f2={self.f2} outside [0, 1)")
        if not (np.isfinite(self.delta_scale) and self.delta_scale > 0.0):
            raise CalibrationError(f"delta_scale must be > 0, got {self.delta_scale}")

    def to_delta(self, index) -> np.ndarray:
        return (np.asarray(index, dtype=float) - self.delta_offset) / self.delta_scale

    def resonator(self, omega_ratio: float) -> ResonatorParams:
        return ResonatorParams(d=self.d, omega_ratio=omega_ratio, f2=self.f2)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Calibration":
        try:
            return cls(
                d=float(data["d"]),
                f2=float(data["f2"]),
                delta_scale=float(data["delta_scale"]),
                delta_offset=float(data["delta_offset"]),
                gain=float(data.get("gain", 1.0)),
                offset=float(data.get("offset", 0.0)),
                residual_rms=float(data.get("residual_rms", 0.0)),
                converged=bool(data.get("converged", True)),
                iterations=int(data.get("iterations", 0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CalibrationError(f"invalid calibration: {e}") from e

    @classmethod
    def nominal(cls, params: ResonatorParams, config: ScanConfig) -> "Calibration":
        """The calibration a perfect DC fit would return for this scan."""
        scale = 1.0 / config.delta_per_sample
        return cls(d=params.d, f2=params.f2, delta_scale=scale, delta_offset=-config.delta_start * scale)


# --- DC calibration ---

def _noise_level(level: np.ndarray) -> float:
    """White-noise scale from second differences (robust MAD)."""
    if level.size < 5:
        return 0.0
    d2 = np.diff(level, 2)
    mad = np.median(np.abs(d2 - np.median(d2)))
    return float(1.4826 * mad / np.sqrt(6.0))


def _initial_guess(g: np.ndarray, y: np.ndarray, f2: float, offset: float) -> np.ndarray:
    shoulder = float(np.percentile(y, 95))
    gain0 = max(shoulder - offset, 1e-12)
    i_min = int(np.argmin(y))
    dip = (y[i_min] - offset) / gain0
    d0 = float(np.clip(1.0 - (1.0 - dip) / (1.0 - f2), 1e-6, 1.0 - 1e-6))
    half = 0.5 * (shoulder + y[i_min])
    below = g[y < half]
    spacing = float(np.median(np.diff(g))) if g.size > 1 else 1.0
    width = 0.5 * float(below.max() - below.min()) if below.size > 1 else spacing
    return np.array([d0, max(width, spacing), float(g[i_min]), gain0])


def calibrate_dc(index, level, f2: float, offset: float = 0.0,
                 max_iter: int = 200, xtol: float = 1e-9) -> Calibration:
    """
    Fit gain * [1 - (1 - f2)(1 - d) / (1 + x^2)] + offset with x = (index - delta_offset) / delta_scale.
    That is gain * sql_level + offset. Raises CalibrationError when the curve shows no dip.
    """
    g = np.asarray(index, dtype=float).reshape(-1)
    y = np.asarray(level, dtype=float).reshape(-1)
    if g.shape != y.shape or g.size < 8:
        raise CalibrationError("DC curve needs at least 8 points with matching index and level")
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(y))):
        raise CalibrationError("DC curve contains non-finite values")
    if not 0.0 <= f2 < 1.0:
        raise CalibrationError(f"f2={f2} outside [0, 1)")
    order = np.argsort(g, kind="stable")
    g, y = g[order], y[order]

    span = float(y.max() - y.min())
    noise = _noise_level(y)
    if span <= max(3.0 * noise, 1e-12 * float(np.max(np.abs(y)))):
        raise CalibrationError(f"no resonance dip: dynamic range {span:.3g} vs noise {noise:.3g}")

    k = 1.0 - f2

    def residual(theta: np.ndarray) -> np.ndarray:
        d, scale, off, gain = theta
        x = (g - off) / scale
        return gain * (1.0 - k * (1.0 - d) / (1.0 + x * x)) + offset - y

    def jacobian(theta: np.ndarray) -> np.ndarray:
        d, scale, off, gain = theta
        x = (g - off) / scale
        lor = 1.0 / (1.0 + x * x)
        slope = 2.0 * gain * k * (1.0 - d) * x * lor * lor  # d(model)/dx
        return np.column_stack([
            gain * k * lor,
            -slope * x / scale,
            -slope / scale,
            1.0 - k * (1.0 - d) * lor,
        ])

    x0 = _initial_guess(g, y, f2, offset)
    lower = np.array([0.0, 1e-12, -np.inf, 0.0])
    upper = np.array([1.0, np.inf, np.inf, np.inf])
    res = least_squares(
        residual, x0, jac=jacobian, bounds=(lower, upper), method="trf",
        x_scale="jac", xtol=xtol, ftol=1e-12, gtol=1e-12, max_nfev=max_iter,
    )
    d, scale, off, gain = (float(v) for v in res.x)
    rms = float(np.sqrt(np.mean(res.fun ** 2)))
    converged = bool(res.status > 0)
    if not converged:
        logger.warning("DC calibration did not converge after %d evaluations: %s", res.nfev, res.message)
    logger.info("DC calibration d=%.6g scale=%.6g offset=%.6g gain=%.6g rms=%.3g", d, scale, off, gain, rms)
    return Calibration(d=min(max(d, 0.0), 1.0), f2=float(f2), delta_scale=scale, delta_offset=off, gain=gain,
                       offset=float(offset), residual_rms=rms, converged=converged, iterations=int(res.nfev))


# --- linear least squares ---

@dataclass(frozen=True, eq=False)
class LinearSolution:
    x: np.ndarray
    covariance: np.ndarray
    chi2: float
    dof: int
    condition: float
    smallest_sv: float
    rank_deficient: bool
    whitened_residual: np.ndarray
    rank: int = 0


def weighted_lstsq(a: np.ndarray, y: np.ndarray, sigma: np.ndarray) -> LinearSolution:
    """
    Minimize sum(((a x - y) / sigma)^2). Parameter covariance is the inverse
    normal matrix; above COND_LIMIT the pseudo-inverse is used and flagged.
    """
    aw = a / sigma[:, None]
    yw = y / sigma
    u, sv, vt = np.linalg.svd(aw, full_matrices=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0.0 else float("inf")
    deficient = cond > COND_LIMIT
    if deficient:
        logger.warning("design is ill-conditioned (condition %.3g > %.0e); using pseudo-inverse", cond, COND_LIMIT)
        keep = sv > sv[0] / COND_LIMIT
        v = vt[keep].T
        x = v @ ((u[:, keep].T @ yw) / sv[keep])
        cov = (v / sv[keep] ** 2) @ v.T
    else:
        x = np.linalg.lstsq(aw, yw, rcond=None)[0]
        cov = np.linalg.inv(aw.T @ aw)
    resid = aw @ x - yw
    rank = int(np.sum(sv > sv[0] * RANK_TOL)) if sv[0] > 0 else 0
    return LinearSolution(x, 0.5 * (cov + cov.T), float(resid @ resid), max(len(y) - rank, 1),
                          cond, float(sv[-1]), deficient, resid, rank)


def _sigma_floor(sigma: np.ndarray) -> np.ndarray:
    top = float(np.max(sigma)) if sigma.size else 0.0
    return np.maximum(sigma, 1e-12 * top if top > 0.0 else 1.0)


def _model_params(calib: Optional[Calibration], params: ResonatorParams) -> ResonatorParams:
    return calib.resonator(params.omega_ratio) if calib is not None else params


def _normalized_coefficients(delta: np.ndarray, params: ResonatorParams, basis: Basis):
    c, vac, _ = normalized_coefficient_arrays(delta, params)
    if basis is Basis.SYM_ANTISYM:
        c = c @ SA_MATRIX
    return c, vac


def _vec10_basis_map() -> np.ndarray:
    """Linear map of vec10 under cov -> M cov M."""
    t = np.zeros((10, 10))
    for k in range(10):
        e = np.zeros(10)
        e[k] = 1.0
        t[:, k] = cov_to_vec10(SA_MATRIX @ vec10_to_cov(e) @ SA_MATRIX)
    return t


# --- first moments ---

@dataclass(frozen=True, eq=False)
class FirstMomentFit:
    basis: Basis
    mean: np.ndarray
    covariance: np.ndarray
    chi2_dof: float
    condition: float
    smallest_sv: float
    rank_deficient: bool

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def in_basis(self, basis) -> "FirstMomentFit":
        basis = Basis.parse(basis)
        if basis is self.basis:
            return self
        m = SA_MATRIX
        return FirstMomentFit(basis, m @ self.mean, m @ self.covariance @ m, self.chi2_dof,
                              self.condition, self.smallest_sv, self.rank_deficient)


def fit_first_moments(curves: MomentCurves, calib: Optional[Calibration], params: ResonatorParams,
                      basis=Basis.SIDEBAND) -> FirstMomentFit:
    """
    Means from the mean-bin curves. Each bin is weighted by the pooled variance of
    its enclosing second-moment bin divided by bin_mean.
    """
    basis = Basis.parse(basis)
    p = _model_params(calib, params)
    delta = calib.to_delta(curves.index_mean) if calib is not None else curves.delta_mean
    c, _ = _normalized_coefficients(delta, p, basis)
    a = c.reshape(-1, 4)
    y = np.column_stack([curves.mean_c, curves.mean_s]).reshape(-1)
    cb = curves.cov_bin_of_mean
    var = np.column_stack([curves.var_c[cb], curves.var_s[cb]]).reshape(-1)
    sigma = _sigma_floor(np.sqrt(np.clip(var, 0.0, None) / curves.bin_mean))
    sol = weighted_lstsq(a, y, sigma)
    return FirstMomentFit(basis, sol.x, sol.covariance, sol.chi2 / sol.dof, sol.condition,
                          sol.smallest_sv, sol.rank_deficient)


# --- second moments ---

@dataclass(frozen=True, eq=False)
class PsdProjection:
    cov: np.ndarray
    eigenvalues: np.ndarray
    eigenvalue_se: np.ndarray
    significant: bool


@dataclass(frozen=True, eq=False)
class SecondMomentFit:
    basis: Basis
    cov10: np.ndarray
    covariance: np.ndarray
    chi2_dof: Dict[str, float]
    condition: float
    smallest_sv: float
    rank_deficient: bool
    admissible: bool
    min_symplectic: float
    projection: Optional[PsdProjection] = None

    @property
    def se10(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def cov(self) -> np.ndarray:
        return vec10_to_cov(self.cov10)

    def in_basis(self, basis) -> "SecondMomentFit":
        basis = Basis.parse(basis)
        if basis is self.basis:
            return self
        t = _vec10_basis_map()
        proj = None
        if self.projection is not None:
            proj = PsdProjection(SA_MATRIX @ self.projection.cov @ SA_MATRIX, self.projection.eigenvalues,
                                 self.projection.eigenvalue_se, self.projection.significant)
        return SecondMomentFit(basis, t @ self.cov10, t @ self.covariance @ t.T, dict(self.chi2_dof),
                               self.condition, self.smallest_sv, self.rank_deficient,
                               self.admissible, self.min_symplectic, proj)


def _second_moment_sigma(var_c, var_s, cov_cs, dof: int) -> np.ndarray:
    """Delta-method standard deviations of (var_c, var_s, cov_cs) for Gaussian samples."""
    vc = np.clip(var_c, 0.0, None)
    vs = np.clip(var_s, 0.0, None)
    return np.sqrt(np.column_stack([
        2.0 * vc * vc / dof,
        2.0 * vs * vs / dof,
        (vc * vs + np.asarray(cov_cs) ** 2) / dof,
    ]))


def project_psd(cov10: np.ndarray, covariance: np.ndarray) -> PsdProjection:
    """
    Clamp negative eigenvalues of the recovered covariance to zero. The change is
    significant when it exceeds the first-order standard error of that eigenvalue.
    """
    w, u = np.linalg.eigh(vec10_to_cov(cov10))
    grads = np.array([quadratic_rows(u[:, k], u[:, k]) for k in range(4)])
    se = np.sqrt(np.clip(np.einsum("ki,ij,kj->k", grads, covariance, grads), 0.0, None))
    shift = np.clip(-w, 0.0, None)
    significant = bool(np.any(shift > se))
    fixed = (u * np.clip(w, 0.0, None)) @ u.T
    return PsdProjection(0.5 * (fixed + fixed.T), w, se, significant)


def fit_second_moments(curves: MomentCurves, calib: Optional[Calibration], params: ResonatorParams,
                       electronic_noise: float = 0.0, basis=Basis.SIDEBAND,
                       project: bool = False) -> SecondMomentFit:
    """
    Covariance from (var_c, var_s, cov_cs) per second-moment bin after subtracting
    the normalized vacuum block and electronic noise. Weights come from the binned
    moments in a first pass and from the first-pass fitted curves in the second.
    """
    basis = Basis.parse(basis)
    p = _model_params(calib, params)
    delta = calib.to_delta(curves.index_cov) if calib is not None else curves.delta_cov
    c, vac = _normalized_coefficients(delta, p, basis)
    cc, ss = c[:, 0], c[:, 1]
    rows = np.stack([quadratic_rows(cc, cc), quadratic_rows(ss, ss), quadratic_rows(cc, ss)], axis=1)
    offsets = np.column_stack([vac[:, 0, 0] + electronic_noise, vac[:, 1, 1] + electronic_noise, vac[:, 0, 1]])
    observed = np.column_stack([curves.var_c, curves.var_s, curves.cov_cs])
    a = rows.reshape(-1, 10)
    y = (observed - offsets).reshape(-1)

    sigma = _second_moment_sigma(observed[:, 0], observed[:, 1], observed[:, 2], curves.dof)
    first = weighted_lstsq(a, y, _sigma_floor(sigma.reshape(-1)))
    predicted = rows @ first.x + offsets
    sigma = _second_moment_sigma(predicted[:, 0], predicted[:, 1], predicted[:, 2], curves.dof)
    sol = weighted_lstsq(a, y, _sigma_floor(sigma.reshape(-1)))

    se = np.sqrt(np.clip(np.diag(sol.covariance), 0.0, None))
    bad = [i for i in DIAG10 if sol.x[i] + MISMATCH_SIGMAS * se[i] < 0.0]
    if bad:
        raise ModelMismatchError(
            f"negative recovered variance beyond {MISMATCH_SIGMAS:g} se at vec10 positions {bad}: "
            + ", ".join(f"{sol.x[i]:.4g}+-{se[i]:.2g}" for i in bad)
        )

    resid = sol.whitened_residual.reshape(-1, 3)
    n_rows = resid.shape[0]
    per_curve_dof = max(n_rows - sol.rank / 3.0, 1.0)
    chi2 = {name: float(resid[:, k] @ resid[:, k]) / per_curve_dof for k, name in enumerate(CURVES)}

    cov = vec10_to_cov(sol.x)
    nu = float(symplectic_eigenvalues(cov)[0])
    psd = bool(np.min(np.linalg.eigvalsh(cov)) >= -1e-9)
    admissible = psd and nu >= 1.0 - 1e-9
    if not admissible:
        logger.warning("recovered covariance is not admissible (min symplectic eigenvalue %.4g)", nu)
    projection = None
    if project:
        projection = project_psd(sol.x, sol.covariance)
        if projection.significant:
            logger.warning("PSD projection moved an eigenvalue by more than its standard error: %s",
                           np.array2string(projection.eigenvalues, precision=4))
    return SecondMomentFit(basis, sol.x, sol.covariance, chi2, sol.condition, sol.smallest_sv,
                           sol.rank_deficient, admissible, nu, projection)


# --- full pipeline ---

@dataclass(frozen=True, eq=False)
class FitResult:
    params: ResonatorParams
    calibration: Optional[Calibration]
    first: FirstMomentFit
    second: SecondMomentFit
    n_mean_bins: int = 0
    n_cov_bins: int = 0
    notes: Tuple[str, ...] = field(default_factory=tuple)

    def state(self, basis=Basis.SIDEBAND) -> TwoModeGaussian:
        """Raw estimate as a state (no admissibility check)."""
        basis = Basis.parse(basis)
        return TwoModeGaussian(self.first.in_basis(basis).mean, self.second.in_basis(basis).cov, basis)

    def to_json(self) -> Dict[str, Any]:
        return fit_result_to_json(self)


def fit_scan(records: ScanData, params: ResonatorParams, config: ScanConfig,
             calib: Optional[Calibration] = None, electronic_noise: Optional[float] = None,
             project: bool = False) -> FitResult:
    """Bin a scan and fit both moment orders against one calibration."""
    curves = bin_moments(records, config)
    notes = []
    if calib is None:
        logger.warning("no calibration supplied; using the recorded detuning and configured resonator parameters")
        notes.append("uncalibrated: recorded delta and configured d, f2")
    if curves.dropped:
        notes.append(f"dropped {curves.dropped} trailing samples")
    noise = config.electronic_noise if electronic_noise is None else electronic_noise
    first = fit_first_moments(curves, calib, params)
    second = fit_second_moments(curves, calib, params, electronic_noise=noise, project=project)
    return FitResult(_model_params(calib, params), calib, first, second,
                     len(curves.mean_c), len(curves.var_c), tuple(notes))


def imbalance(fit: FitResult) -> Tuple[float, float]:
    """(var p+ + var q+) - (var p- + var q-) with its standard error."""
    second = fit.second.in_basis(Basis.SIDEBAND)
    g = np.zeros(10)
    g[[DIAG10[0], DIAG10[1]]] = 1.0
    g[[DIAG10[2], DIAG10[3]]] = -1.0
    return float(g @ second.cov10), float(np.sqrt(max(g @ second.covariance @ g, 0.0)))


# --- identifiability ---

@dataclass(frozen=True, eq=False)
class IdentifiabilityReport:
    first_rank: int
    first_sv: np.ndarray
    second_rank: int
    second_sv: np.ndarray
    second_condition: float
    null_vector: Optional[np.ndarray]

    def to_json(self) -> Dict[str, Any]:
        return {
            "threshold": RANK_TOL,
            "first_moments": {"rank": self.first_rank, "singular_values": [float(v) for v in self.first_sv]},
            "second_moments": {
                "rank": self.second_rank,
                "singular_values": [float(v) for v in self.second_sv],
                "condition": self.second_condition,
                "null_vector": None if self.null_vector is None else [float(v) for v in self.null_vector],
            },
        }


def identifiability_report(params: ResonatorParams, grid) -> IdentifiabilityReport:
    """Singular spectra of the noiseless first- and second-moment designs on a detuning grid."""
    first, second = design_matrices(np.asarray(grid, dtype=float), params, normalized=False)
    r1, sv1 = numerical_rank(first)
    r2, sv2 = numerical_rank(second)
    null = None
    if r2 < 10:
        null = np.linalg.svd(second)[2][-1]
        null = null / null[np.argmax(np.abs(null))]
        logger.info("second-moment design rank %d; null direction %s", r2, np.array2string(null, precision=3))
    cond = float(sv2[0] / sv2[-1]) if sv2[-1] > 0 else float("inf")
    return IdentifiabilityReport(r1, sv1, r2, sv2, cond, null)


# --- JSON ---

def _moment_block(first: FirstMomentFit, second: SecondMomentFit) -> Dict[str, Any]:
    return {
        "mean": [float(v) for v in first.mean],
        "mean_se": [float(v) for v in first.se],
        "cov10": [float(v) for v in second.cov10],
        "cov10_se": [float(v) for v in second.se10],
        "cov": [[float(v) for v in row] for row in second.cov],
    }


def fit_result_to_json(fit: FitResult) -> Dict[str, Any]:
    value, se = imbalance(fit)
    out: Dict[str, Any] = {
        "params": fit.params.to_dict(),
        "calibration": None if fit.calibration is None else fit.calibration.to_dict(),
        "bins": {"mean": fit.n_mean_bins, "cov": fit.n_cov_bins},
        "sideband": _moment_block(fit.first.in_basis(Basis.SIDEBAND), fit.second.in_basis(Basis.SIDEBAND)),
        "sa": _moment_block(fit.first.in_basis(Basis.SYM_ANTISYM), fit.second.in_basis(Basis.SYM_ANTISYM)),
        "chi2_dof": {"mean": fit.first.chi2_dof, **fit.second.chi2_dof},
        "diagnostics": {
            "first_condition": fit.first.condition,
            "first_smallest_sv": fit.first.smallest_sv,
            "first_rank_deficient": fit.first.rank_deficient,
            "second_condition": fit.second.condition,
            "second_smallest_sv": fit.second.smallest_sv,
            "second_rank_deficient": fit.second.rank_deficient,
            "admissible": fit.second.admissible,
            "min_symplectic_eigenvalue": fit.second.min_symplectic,
        },
        "imbalance": {"value": value, "se": se},
        "notes": list(fit.notes),
    }
    proj = fit.second.in_basis(Basis.SIDEBAND).projection
    if proj is not None:
        out["psd_projection"] = {
            "cov": [[float(v) for v in row] for row in proj.cov],
            "eigenvalues": [float(v) for v in proj.eigenvalues],
            "eigenvalue_se": [float(v) for v in proj.eigenvalue_se],
            "significant": proj.significant,
        }
    return out
