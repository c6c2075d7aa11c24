"""
Resonator-detection observables as linear forms in the sideband quadratures.

At each detuning the cosine and sine demodulated photocurrents are
    J_cos = c_cos . x + vacuum,   J_sin = c_sin . x + vacuum
with x = (p+, q+, p-, q-). The vacuum part collects every mode the resonator and
the mode mismatch mix into the detected field; its 2x2 covariance is vac_cov.
Un-normalized, a vacuum input gives Var(J_cos) = Var(J_sin) = 2 * sql.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from app_paths import get_logger
from gaussian_state import SA_MATRIX, Basis, TwoModeGaussian
from transfer import ResonatorParams, effective_coeff, phase_psi, reflection, sql_level, transmission_T

RANK_TOL = 1e-6
# sql below this is a dark fringe: only reachable with d = 0 and f2 = 0
_DARK_SQL = 1e-200

logger = get_logger("measurement_model")


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    delta: float
    c_cos: np.ndarray
    c_sin: np.ndarray
    vac_cov: np.ndarray
    sql: float

    @property
    def matrix(self) -> np.ndarray:
        """2x4 matrix stacking c_cos and c_sin."""
        return np.vstack([self.c_cos, self.c_sin])


@dataclass(frozen=True, eq=False)
class PredictedMoments:
    delta: float
    mean2: np.ndarray
    cov2: np.ndarray


@dataclass(frozen=True)
class ModalMixing:
    """Upper-sideband mixing with vacuum: cos(xi) = sqrt(1 - T(delta + omega_ratio))."""
    xi: float
    cos_xi: float
    sin_xi: float
    psi_upper: float


def _quadrature_rows(g_plus: np.ndarray, g_minus: np.ndarray) -> np.ndarray:
    """(n, 2, 4) rows for a mode pair with complex weights; row 0 cosine, row 1 sine."""
    g_plus = np.asarray(g_plus, dtype=complex)
    g_minus = np.asarray(g_minus, dtype=complex)
    c_cos = np.stack([g_plus.real, g_plus.imag, g_minus.real, g_minus.imag], axis=-1)
    c_sin = np.stack([-g_plus.imag, g_plus.real, g_minus.imag, -g_minus.real], axis=-1)
    return np.stack([c_cos, c_sin], axis=-2)


def coefficient_arrays(delta, params: ResonatorParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorized coefficients on a detuning array.
    Returns (C, vac, sql) with C of shape (n, 2, 4), vac (n, 2, 2) and sql (n,).
    """
    x = np.atleast_1d(np.asarray(delta, dtype=float))
    w = params.omega_ratio
    f2 = params.f2
    g_plus, g_minus = effective_coeff(x, params)
    signal = _quadrature_rows(g_plus, g_minus)

    r0 = np.asarray(reflection(x, params.d))
    u_plus = r0 * np.conj(np.asarray(reflection(x + w, params.d)))
    u_minus = r0 * np.conj(np.asarray(reflection(x - w, params.d)))
    amp = np.sqrt(f2 * (1.0 - f2))
    mismatch = _quadrature_rows(amp * (1.0 - u_plus), amp * (1.0 - u_minus))
    through = np.sqrt(1.0 - f2) * np.abs(r0)
    transmitted = _quadrature_rows(
        through * np.sqrt(np.asarray(transmission_T(x + w, params.d))),
        through * np.sqrt(np.asarray(transmission_T(x - w, params.d))),
    )
    vac = np.einsum("nik,njk->nij", mismatch, mismatch) + np.einsum("nik,njk->nij", transmitted, transmitted)
    return signal, vac, np.atleast_1d(np.asarray(sql_level(x, params)))


def normalized_coefficient_arrays(delta, params: ResonatorParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    coefficient_arrays divided by the shot-noise level: C / sqrt(2 sql) and vac / (2 sql).

    Where the reflected LO vanishes (d = 0, f2 = 0, delta = 0) both have a finite
    limit, exp(i psi) conj(r(delta +- omega)) / sqrt(2) for the signal rows and the
    transmitted sidebands alone for vac, with psi taken on the grid's side of the zero.
    Returns (C, vac, sql).
    """
    x = np.atleast_1d(np.asarray(delta, dtype=float))
    c, vac, sql = coefficient_arrays(x, params)
    dark = sql < _DARK_SQL
    safe = np.where(dark, 1.0, 2.0 * sql)
    c = c / np.sqrt(safe)[:, None, None]
    vac = vac / safe[:, None, None]
    if np.any(dark):
        logger.info("reflected LO vanishes at %d point(s) (delta=%s); using the normalized limit",
                    int(dark.sum()), np.array2string(x[dark], precision=6))
        w, d = params.omega_ratio, params.d
        xd = x[dark]
        carrier = np.exp(1j * np.asarray(phase_psi(x, d)))[dark]
        c[dark] = _quadrature_rows(carrier * np.conj(np.asarray(reflection(xd + w, d))) / np.sqrt(2.0),
                                   carrier * np.conj(np.asarray(reflection(xd - w, d))) / np.sqrt(2.0))
        t_rows = _quadrature_rows(np.sqrt(np.asarray(transmission_T(xd + w, d))) + 0j,
                                  np.sqrt(np.asarray(transmission_T(xd - w, d))) + 0j)
        vac[dark] = 0.5 * np.einsum("nik,njk->nij", t_rows, t_rows)
    return c, vac, sql


def coefficients(delta: float, params: ResonatorParams) -> CoefficientSet:
    c, vac, sql = coefficient_arrays(delta, params)
    return CoefficientSet(float(delta), c[0, 0], c[0, 1], vac[0], float(sql[0]))


def coefficients_in_basis(cs: CoefficientSet, basis) -> Tuple[np.ndarray, np.ndarray]:
    """c_cos, c_sin acting on quadratures of the given basis."""
    if Basis.parse(basis) is Basis.SIDEBAND:
        return cs.c_cos.copy(), cs.c_sin.copy()
    return SA_MATRIX @ cs.c_cos, SA_MATRIX @ cs.c_sin


def predict_moment_arrays(state: TwoModeGaussian, delta, params: ResonatorParams,
                          normalized: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized predict_moments: returns mean (n, 2) and cov (n, 2, 2)."""
    sb = state.check_admissible().in_basis(Basis.SIDEBAND)
    arrays = normalized_coefficient_arrays if normalized else coefficient_arrays
    c, vac, _ = arrays(delta, params)
    mean = np.einsum("nij,j->ni", c, sb.mean)
    cov = np.einsum("nij,jk,nlk->nil", c, sb.cov, c) + vac
    return mean, cov


def predict_moments(state: TwoModeGaussian, delta: float, params: ResonatorParams,
                    normalized: bool = True) -> PredictedMoments:
    mean, cov = predict_moment_arrays(state, delta, params, normalized)
    return PredictedMoments(float(delta), mean[0], cov[0])


def theta_projection(moments: PredictedMoments, theta: float) -> Tuple[float, float]:
    """Mean and variance of J_theta = cos(theta) J_cos + sin(theta) J_sin."""
    u = np.array([np.cos(theta), np.sin(theta)])
    return float(u @ moments.mean2), float(u @ moments.cov2 @ u)


def general_quadrature_vector(varphi: float, phi: float, theta: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    return np.array([ct * np.cos(varphi), ct * np.sin(varphi), st * np.cos(phi), st * np.sin(phi)])


def general_quadrature(varphi: float, phi: float, theta: float, state: TwoModeGaussian) -> Tuple[float, float]:
    """
    Mean and variance of X = cos(theta) X+(varphi) + sin(theta) X-(phi), with
    X(angle) = cos(angle) p + sin(angle) q of the respective sideband.
    """
    sb = state.in_basis(Basis.SIDEBAND)
    u = general_quadrature_vector(varphi, phi, theta)
    return float(u @ sb.mean), float(u @ sb.cov @ u)


def modal_mixing_angle(delta: float, params: ResonatorParams) -> ModalMixing:
    t_upper = float(transmission_T(delta + params.omega_ratio, params.d))
    cos_xi = float(np.sqrt(max(0.0, 1.0 - t_upper)))
    xi = float(np.arccos(min(1.0, cos_xi)))
    return ModalMixing(xi, cos_xi, float(np.sin(xi)), float(phase_psi(delta + params.omega_ratio, params.d)))


def tomography_grid(state: TwoModeGaussian, params: ResonatorParams, deltas, thetas,
                    normalized: bool = True) -> np.ndarray:
    """Rows (delta, theta, mean, variance) of J_theta, delta-major."""
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    mean, cov = predict_moment_arrays(state, deltas, params, normalized)
    u = np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)  # (m, 2)
    mu = mean @ u.T  # (n, m)
    var = np.einsum("mi,nij,mj->nm", u, cov, u)
    dd, tt = np.meshgrid(deltas, thetas, indexing="ij")
    return np.column_stack([dd.ravel(), tt.ravel(), mu.ravel(), var.ravel()])


# --- second-moment design helpers ---

def quadratic_rows(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Coefficients of the 10 upper-triangle covariance entries in u^T V v:
    u_i v_i on the diagonal, u_i v_j + u_j v_i off it. Works on (..., 4) arrays.
    """
    rows, cols = np.triu_indices(4)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    out = u[..., rows] * v[..., cols] + u[..., cols] * v[..., rows]
    diag = rows == cols
    out[..., diag] *= 0.5
    return out


def numerical_rank(matrix: np.ndarray, tol: float = RANK_TOL) -> Tuple[int, np.ndarray]:
    sv = np.linalg.svd(np.asarray(matrix, dtype=float), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, sv
    return int(np.sum(sv / sv[0] > tol)), sv


def hd_family_rank(n_angles: int = 9, tol: float = RANK_TOL) -> dict:
    """
    Second-moment rank reachable by X(varphi, phi, theta) when the two sideband
    angles are tied (varphi = phi) versus free.
    """
    angles = np.linspace(0.0, np.pi, n_angles, endpoint=False)
    thetas = np.linspace(0.0, 0.5 * np.pi, n_angles)
    tied, free = [], []
    for theta in thetas:
        for a in angles:
            u = general_quadrature_vector(a, a, theta)
            tied.append(quadratic_rows(u, u))
            for b in angles:
                u = general_quadrature_vector(a, b, theta)
                free.append(quadratic_rows(u, u))
    hd_rank, _ = numerical_rank(np.array(tied), tol)
    full_rank, _ = numerical_rank(np.array(free), tol)
    _, _, vt = np.linalg.svd(np.array(tied))
    return {"hd": hd_rank, "complete": full_rank, "hd_null_vector": vt[-1] if hd_rank < 10 else None}


def design_matrices(delta, params: ResonatorParams,
                    basis=Basis.SIDEBAND, normalized: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    Noiseless designs on a grid: first moments (2n, 4) and second moments (3n, 10),
    rows ordered per detuning as (cos, sin) and (var_c, var_s, cov_cs).
    """
    arrays = normalized_coefficient_arrays if normalized else coefficient_arrays
    c, _, _ = arrays(delta, params)
    if Basis.parse(basis) is Basis.SYM_ANTISYM:
        c = c @ SA_MATRIX
    first = c.reshape(-1, 4)
    second = np.stack([
        quadratic_rows(c[:, 0], c[:, 0]),
        quadratic_rows(c[:, 1], c[:, 1]),
        quadratic_rows(c[:, 0], c[:, 1]),
    ], axis=1).reshape(-1, 10)
    return first, second
