"""
Transfer functions of the detection resonator in the high-finesse limit.

Detuning is dimensionless: delta = (carrier - cavity resonance) / gamma, with
2*gamma the resonance bandwidth. Every function accepts a float or a numpy array
of detunings and returns the same shape. Nothing here holds state, so grid points
can be evaluated in any order or in parallel.
"""
from dataclasses import dataclass, asdict
from typing import Dict, Optional, Tuple, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

# |r| below this is treated as the reflection zero of an impedance-matched cavity
_SINGULAR_ABS = 1e-300


class DomainError(ValueError):
    """Resonator input outside the physical domain of the model."""


@dataclass(frozen=True)
class ResonatorParams:
    """
    Detection cavity plus mode matching.
    - d: intensity reflectance at exact resonance, 0 (impedance matched) .. 1 (lossless)
    - omega_ratio: sideband offset in half-bandwidth units, Omega / gamma
    - f2: power fraction in the spatial mode that does not couple to the cavity
    """
    d: float
    omega_ratio: float
    f2: float = 0.0

    def __post_init__(self):
        _check_d(self.d)
        if not (np.isfinite(self.omega_ratio) and self.omega_ratio > 0):
            raise DomainError(f"omega_ratio must be finite and > 0, got {self.omega_ratio!r}")
        if not (np.isfinite(self.f2) and 0.0 <= self.f2 < 1.0):
            raise DomainError(f"f2 must lie in [0, 1), got {self.f2!r}")

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def _check_d(d: float) -> None:
    if not (np.isfinite(d) and 0.0 <= d <= 1.0):
        raise DomainError(f"impedance matching parameter d must lie in [0, 1], got {d!r}")


def _as_delta(delta: ArrayLike) -> np.ndarray:
    arr = np.asarray(delta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("detuning must be finite")
    return arr


def _shape_like(value: np.ndarray, delta: ArrayLike):
    """Return a scalar for scalar input, else the array."""
    if np.ndim(delta) == 0:
        return value.item()
    return value


def reflection(delta: ArrayLike, d: float):
    """Complex amplitude reflection r = -(sqrt(d) + i*delta) / (1 - i*delta)."""
    _check_d(d)
    x = _as_delta(delta)
    r = -(np.sqrt(d) + 1j * x) / (1.0 - 1j * x)
    return _shape_like(np.asarray(r), delta)


def transmission_T(delta: ArrayLike, d: float):
    """Spectral attenuation T = (1 - d) / (1 + delta^2); |r|^2 + T = 1."""
    _check_d(d)
    x = _as_delta(delta)
    return _shape_like(np.asarray((1.0 - d) / (1.0 + x * x)), delta)


def psi_singular(delta: ArrayLike, d: float):
    """True where the reflection vanishes (d = 0 at delta = 0) and the phase is undefined."""
    r = np.asarray(reflection(delta, d))
    return _shape_like(np.abs(r) < _SINGULAR_ABS, delta)


def _grid_direction(delta: ArrayLike, direction: Optional[int]) -> int:
    """+1 for grids evaluated toward increasing detuning, -1 otherwise; scalars count as +1."""
    if direction is not None:
        if direction not in (1, -1):
            raise DomainError(f"direction must be +1 or -1, got {direction}")
        return direction
    x = np.ravel(np.asarray(delta, dtype=float))
    return -1 if x.size > 1 and x[-1] < x[0] else 1


def phase_psi(delta: ArrayLike, d: float, direction: Optional[int] = None):
    """
    Phase of the reflection on its continuous branch.

    The branch is anchored at delta -> +inf where psi = 0 and followed toward
    negative detuning, so psi runs from 0 down to -2*pi. On that branch
    atan2(Im r, Re r) only needs a single 2*pi shift for positive values, which
    gives the same curve as unwrapping a dense grid but works for any set of
    points.

    At the reflection zero (d = 0, delta = 0) the value is the limit from the side
    the grid moves on to: delta -> 0+ (-pi/2) for ascending grids and scalars,
    delta -> 0- (-3*pi/2) for descending ones. direction overrides the inference
    from the first and last grid points; see psi_singular.
    """
    r = np.asarray(reflection(delta, d))
    im = np.where(r.imag == 0.0, 0.0, r.imag)  # drop negative zeros so r = -1 maps to +pi first
    psi = np.arctan2(im, r.real)
    psi = np.where(psi > 0.0, psi - 2.0 * np.pi, psi)
    singular = np.abs(r) < _SINGULAR_ABS
    if np.any(singular):
        # r ~ -i*delta near the zero
        limit = -0.5 * np.pi if _grid_direction(delta, direction) > 0 else -1.5 * np.pi
        psi = np.where(singular, limit, psi)
    return _shape_like(np.asarray(psi), delta)


def sideband_coeff(delta: ArrayLike, params: ResonatorParams) -> Tuple:
    """
    Sideband transformation coefficients (R_plus, R_minus) with
    R_pm(delta) = exp(i*psi(delta)) * conj(r(delta +- omega_ratio)).
    """
    x = _as_delta(delta)
    carrier = np.exp(1j * np.asarray(phase_psi(x, params.d)))
    r_plus = carrier * np.conj(np.asarray(reflection(x + params.omega_ratio, params.d)))
    r_minus = carrier * np.conj(np.asarray(reflection(x - params.omega_ratio, params.d)))
    return _shape_like(r_plus, delta), _shape_like(r_minus, delta)


def effective_coeff(delta: ArrayLike, params: ResonatorParams) -> Tuple:
    """
    Mode-mismatch corrected coefficients (G_plus, G_minus):
    G = (1 - f2) * |r(delta)| * R + f2.

    |r| * exp(i*psi) is r itself, so the product is formed from r directly and
    stays finite through the reflection zero.
    """
    x = _as_delta(delta)
    r0 = np.asarray(reflection(x, params.d))
    g_plus = (1.0 - params.f2) * r0 * np.conj(np.asarray(reflection(x + params.omega_ratio, params.d))) + params.f2
    g_minus = (1.0 - params.f2) * r0 * np.conj(np.asarray(reflection(x - params.omega_ratio, params.d))) + params.f2
    return _shape_like(g_plus, delta), _shape_like(g_minus, delta)


def sql_level(delta: ArrayLike, params: ResonatorParams):
    """Reflected LO power fraction (1 - f2) * |r|^2 + f2; equals 1 far from resonance."""
    x = _as_delta(delta)
    r0 = np.asarray(reflection(x, params.d))
    level = (1.0 - params.f2) * np.abs(r0) ** 2 + params.f2
    return _shape_like(np.asarray(level), delta)
