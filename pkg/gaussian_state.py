"""
Two-mode Gaussian states of the upper/lower sideband pair.

Quadratures follow [p, q] = 2i, so the vacuum has unit variance in every
quadrature. Vectors are ordered (p_plus, q_plus, p_minus, q_minus) in the sideband
basis and (p_s, q_s, p_a, q_a) in the symmetric/antisymmetric basis.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

ADMISSIBLE_TOL = 1e-9
SYMMETRY_TOL = 1e-12

_R2 = 1.0 / np.sqrt(2.0)
# p_s = (p+ + p-)/sqrt2, q_s = (q+ + q-)/sqrt2, p_a = (p+ - p-)/sqrt2, q_a = (q+ - q-)/sqrt2.
# Symmetric and orthogonal, so it is its own inverse.
SA_MATRIX = _R2 * np.array([
    [1.0, 0.0, 1.0, 0.0],
    [0.0, 1.0, 0.0, 1.0],
    [1.0, 0.0, -1.0, 0.0],
    [0.0, 1.0, 0.0, -1.0],
])

# Exchange of the two sidebands with conjugation: p+ <-> p-, q+ <-> -q-.
EXCHANGE_MATRIX = np.array([
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, -1.0],
    [1.0, 0.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0],
])

# Symplectic form for two (p, q) pairs.
OMEGA = np.kron(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]))

SA_MATRIX.setflags(write=False)
EXCHANGE_MATRIX.setflags(write=False)
OMEGA.setflags(write=False)


class InadmissibleStateError(ValueError):
    """Covariance violates the uncertainty principle (or is not PSD)."""

    def __init__(self, message: str, eigenvalue: float):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class Basis(str, Enum):
    SIDEBAND = "sideband"
    SYM_ANTISYM = "sa"

    @classmethod
    def parse(cls, value) -> "Basis":
        if isinstance(value, Basis):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown basis {value!r}; expected 'sideband' or 'sa'") from None

    def other(self) -> "Basis":
        return Basis.SYM_ANTISYM if self is Basis.SIDEBAND else Basis.SIDEBAND


@dataclass(frozen=True)
class PhaseModSpec:
    """Phase-modulated carrier: displacement s at modulation phase phi, plus symmetric excess noise."""
    s: float
    phi: float = 0.0
    excess_p: float = 0.0
    excess_q: float = 0.0

    def __post_init__(self):
        for name in ("s", "excess_p", "excess_q"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        if not np.isfinite(self.phi):
            raise ValueError(f"phi must be finite, got {self.phi!r}")


@dataclass(frozen=True, eq=False)
class TwoModeGaussian:
    """
    Mean 4-vector and 4x4 covariance in the tagged basis.

    Construction checks shape and symmetry only; admissibility is checked by the
    constructors below and by check_admissible(). Fitted estimates may be
    inadmissible and are still representable.
    """
    mean: np.ndarray
    cov: np.ndarray
    basis: Basis = Basis.SIDEBAND

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.shape != (4,):
            raise ValueError(f"mean must have 4 components, got shape {mean.shape}")
        if cov.shape != (4, 4):
            raise ValueError(f"cov must be 4x4, got shape {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("state moments must be finite")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * scale:
            raise ValueError("cov must be symmetric")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "basis", Basis.parse(self.basis))

    def in_basis(self, basis) -> "TwoModeGaussian":
        if Basis.parse(basis) is self.basis:
            return self
        return basis_change(self)

    def symplectic_eigenvalues(self) -> np.ndarray:
        return symplectic_eigenvalues(self.cov)

    def is_admissible(self) -> bool:
        return is_admissible(self.cov)

    def check_admissible(self) -> "TwoModeGaussian":
        check_admissible(self.cov)
        return self

    def to_json(self) -> Dict[str, Any]:
        return state_to_json(self)


# --- admissibility ---

def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Ascending symplectic spectrum (nu_1, nu_2): moduli of the eigenvalues of i*Omega*V."""
    cov = np.asarray(cov, dtype=float)
    ev = np.abs(np.linalg.eigvals(1j * OMEGA @ cov))
    ev = np.sort(ev)
    # eigenvalues come in +- pairs
    return 0.5 * (ev[0::2] + ev[1::2])


def is_admissible(cov: np.ndarray, tol: float = ADMISSIBLE_TOL) -> bool:
    try:
        check_admissible(cov, tol)
    except InadmissibleStateError:
        return False
    return True


def check_admissible(cov: np.ndarray, tol: float = ADMISSIBLE_TOL) -> None:
    cov = np.asarray(cov, dtype=float)
    lam = float(np.min(np.linalg.eigvalsh(0.5 * (cov + cov.T))))
    if lam < -tol:
        raise InadmissibleStateError(f"covariance is not positive semidefinite (eigenvalue {lam:.6g})", lam)
    nu = float(symplectic_eigenvalues(cov)[0])
    if nu < 1.0 - tol:
        raise InadmissibleStateError(
            f"covariance violates the uncertainty relation: symplectic eigenvalue {nu:.6g} < 1", nu
        )


# --- basis handling ---

def basis_change(state: TwoModeGaussian) -> TwoModeGaussian:
    """Toggle between sideband and S/A bases: mean -> M mean, cov -> M cov M^T."""
    m = SA_MATRIX
    return TwoModeGaussian(m @ state.mean, m @ state.cov @ m.T, state.basis.other())


def sideband_exchange(state: TwoModeGaussian) -> TwoModeGaussian:
    """
    Swap the upper and lower sideband (p+ <-> p-, q+ <-> -q-).
    The resonator coefficients at -delta are the exchanged coefficients at delta.
    """
    sb = state.in_basis(Basis.SIDEBAND)
    p = EXCHANGE_MATRIX
    out = TwoModeGaussian(p @ sb.mean, p @ sb.cov @ p.T, Basis.SIDEBAND)
    return out.in_basis(state.basis)


def semiclassical_means(state: TwoModeGaussian) -> Tuple[complex, complex]:
    """(<P>, <Q>) with P = p_s + i q_a and Q = q_s - i p_a."""
    ps, qs, pa, qa = state.in_basis(Basis.SYM_ANTISYM).mean
    return complex(ps, qa), complex(qs, -pa)


def displacement_amplitudes(state: TwoModeGaussian) -> Tuple[complex, complex]:
    """Coherent amplitudes (alpha_plus, alpha_minus), alpha = (<p> + i<q>) / 2."""
    pp, qp, pm, qm = state.in_basis(Basis.SIDEBAND).mean
    return complex(pp, qp) / 2.0, complex(pm, qm) / 2.0


# --- constructors ---

def from_moments(mean, cov, basis=Basis.SIDEBAND, check: bool = True) -> TwoModeGaussian:
    state = TwoModeGaussian(mean, cov, Basis.parse(basis))
    if check:
        state.check_admissible()
    return state


def vacuum() -> TwoModeGaussian:
    return TwoModeGaussian(np.zeros(4), np.eye(4), Basis.SIDEBAND)


def coherent(mean4, basis=Basis.SIDEBAND) -> TwoModeGaussian:
    return TwoModeGaussian(mean4, np.eye(4), Basis.parse(basis))


def thermal(n_excess: float) -> TwoModeGaussian:
    """Zero mean, cov = (1 + n_excess) * I in both sidebands."""
    return from_moments(np.zeros(4), (1.0 + float(n_excess)) * np.eye(4), Basis.SIDEBAND)


def phase_modulated_state(spec: PhaseModSpec) -> TwoModeGaussian:
    """
    Sideband state produced by weak phase modulation of the carrier.

    Only the semiclassical phase quadrature is displaced: S/A means are
    (0, s cos phi, s sin phi, 0). The excess noise keeps the observed pattern
    var(p+) = var(q-) and var(q+) = var(p-).
    """
    sa_mean = np.array([0.0, spec.s * np.cos(spec.phi), spec.s * np.sin(spec.phi), 0.0])
    cov = np.eye(4) + np.diag([spec.excess_p, spec.excess_q, spec.excess_q, spec.excess_p])
    return TwoModeGaussian(SA_MATRIX @ sa_mean, cov, Basis.SIDEBAND)


# --- JSON ---

def state_to_json(state: TwoModeGaussian) -> Dict[str, Any]:
    return {
        "basis": state.basis.value,
        "mean": [float(x) for x in state.mean],
        "cov": [[float(x) for x in row] for row in state.cov],
    }


def state_from_json(data: Dict[str, Any], check: bool = True) -> TwoModeGaussian:
    if not isinstance(data, dict) or "mean" not in data or "cov" not in data:
        raise ValueError("state JSON needs 'mean' and 'cov'")
    return from_moments(data["mean"], data["cov"], data.get("basis", "sideband"), check=check)


def mixed_basis_state(mean, mean_basis, cov, cov_basis, check: bool = True) -> TwoModeGaussian:
    """Sideband-basis state from a mean and a covariance quoted in different bases."""
    m = np.asarray(mean, dtype=float)
    v = np.asarray(cov, dtype=float)
    if Basis.parse(mean_basis) is Basis.SYM_ANTISYM:
        m = SA_MATRIX @ m
    if Basis.parse(cov_basis) is Basis.SYM_ANTISYM:
        v = SA_MATRIX @ v @ SA_MATRIX
    return from_moments(m, v, Basis.SIDEBAND, check=check)


def vec10_index() -> Tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the upper triangle in (00, 01, 02, 03, 11, 12, 13, 22, 23, 33) order."""
    return np.triu_indices(4)


def cov_to_vec10(cov: np.ndarray) -> np.ndarray:
    rows, cols = vec10_index()
    return np.asarray(cov, dtype=float)[rows, cols]


def vec10_to_cov(vec: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    rows, cols = vec10_index()
    cov = np.zeros((4, 4)) if out is None else out
    cov[rows, cols] = vec
    cov[cols, rows] = vec
    return cov
