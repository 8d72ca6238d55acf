"""Complex states, density matrices and Born-rule probabilities.

States are kept in polar form (non-negative amplitudes and phases over the
standard basis of C^n).  Matrices are ordinary ``complex128`` numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    structural: float = 1e-6
    equivalence: float = 1e-8
    arithmetic: float = 1e-12
    psd_floor: float = -1e-8


TOL = Tolerances()


def wrap_phase(phi):
    """Map angles onto [-pi, pi]."""
    phi = np.asarray(phi, dtype=float)
    out = np.mod(phi + np.pi, 2.0 * np.pi) - np.pi
    # keep +pi inputs at +pi instead of flipping them to -pi
    return np.where((out == -np.pi) & (phi > 0), np.pi, out)


@dataclass(frozen=True)
class PolarState:
    """Unit-norm complex vector stored as amplitudes and phases."""

    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.amplitudes, dtype=float)
        phi = np.asarray(self.phases, dtype=float)
        if r.ndim != 1 or r.shape != phi.shape:
            raise ValueError(f"amplitudes {r.shape} and phases {phi.shape} must be equal-length vectors")
        if np.any(r < 0):
            raise ValueError("amplitudes must be non-negative")
        if abs(float(r @ r) - 1.0) > TOL.structural:
            raise ValueError("state not normalized")
        object.__setattr__(self, "amplitudes", r)
        object.__setattr__(self, "phases", wrap_phase(phi))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def to_complex(self) -> np.ndarray:
        return self.amplitudes * np.exp(1j * self.phases)

    @classmethod
    def from_complex(cls, z) -> "PolarState":
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        phi = np.where(r > 0, np.angle(z), 0.0)
        return cls(r, phi)


def polar_add(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    """Sum of two complex numbers given as ``(r, phi)``, returned in polar form.

    The amplitude follows the interference expansion and the phase the
    quadrant-aware arctangent of the summed sine and cosine parts.  A zero
    result gets phase 0.
    """
    r1, p1 = a
    r2, p2 = b
    if r1 < 0 or r2 < 0:
        raise ValueError("amplitudes must be non-negative")
    im = r1 * np.sin(p1) + r2 * np.sin(p2)
    re = r1 * np.cos(p1) + r2 * np.cos(p2)
    r = float(np.hypot(re, im))
    if r <= TOL.arithmetic * max(r1, r2, 1.0):
        return 0.0, 0.0
    return r, float(wrap_phase(np.arctan2(im, re)))


def interference_probability(a: tuple[float, float], b: tuple[float, float]) -> float:
    """|r1 e^{i phi1} + r2 e^{i phi2}|^2 written out with its interference term."""
    r1, p1 = a
    r2, p2 = b
    if r1 < 0 or r2 < 0:
        raise ValueError("amplitudes must be non-negative")
    return max(0.0, r1 * r1 + r2 * r2 + 2.0 * r1 * r2 * np.cos(p1 - p2))


def superpose(amplitudes, phases) -> PolarState:
    r = np.asarray(amplitudes, dtype=float)
    phi = np.asarray(phases, dtype=float)
    if r.shape != phi.shape:
        raise ValueError("amplitudes and phases differ in length")
    if np.any(r < 0):
        raise ValueError("amplitudes must be non-negative")
    norm = np.linalg.norm(r)
    if norm == 0:
        raise ValueError("degenerate state")
    return PolarState(r / norm, phi)


def pure_projector(state: PolarState) -> np.ndarray:
    z = state.to_complex()
    if abs(np.vdot(z, z).real - 1.0) > TOL.structural:
        raise ValueError("state not normalized")
    return np.outer(z, z.conj())


def check_weights(weights) -> np.ndarray:
    p = np.asarray(weights, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > TOL.equivalence:
        raise ValueError("mixture weights must be non-negative and sum to 1")
    return p


def _stack(states: Sequence[PolarState]) -> np.ndarray:
    if len(states) == 0:
        raise ValueError("empty mixture")
    dims = {s.dim for s in states}
    if len(dims) != 1:
        raise ValueError(f"states have mixed dimensions {sorted(dims)}")
    return np.stack([s.to_complex() for s in states])


def mix(states: Sequence[PolarState], weights) -> np.ndarray:
    """Density matrix sum_i p_i |w_i><w_i|."""
    Z = _stack(states)
    p = check_weights(weights)
    if p.shape[0] != Z.shape[0]:
        raise ValueError(f"{Z.shape[0]} states but {p.shape[0]} weights")
    rho = (Z.T * p) @ Z.conj()
    # exact Hermitian symmetry regardless of rounding in the product
    return 0.5 * (rho + rho.conj().T)


def born_probability(rho: np.ndarray, v: PolarState) -> float:
    """tr(|v><v| rho) = <v|rho|v>."""
    rho = np.asarray(rho)
    if rho.shape != (v.dim, v.dim):
        raise ValueError(f"dimension mismatch: rho {rho.shape}, state {v.dim}")
    z = v.to_complex()
    return float(np.vdot(z, rho @ z).real)


def born_probability_factored(states: Sequence[PolarState], weights, v: PolarState) -> float:
    """Same value as ``born_probability(mix(states, weights), v)`` without forming rho."""
    Z = _stack(states)
    p = check_weights(weights)
    if p.shape[0] != Z.shape[0]:
        raise ValueError(f"{Z.shape[0]} states but {p.shape[0]} weights")
    if Z.shape[1] != v.dim:
        raise ValueError(f"dimension mismatch: states {Z.shape[1]}, measurement {v.dim}")
    overlap = Z @ v.to_complex().conj()
    return float(p @ (overlap.real**2 + overlap.imag**2))


@dataclass
class DensityReport:
    trace_deviation: float
    hermitian_asymmetry: float
    min_eigenvalue: float
    tol: float

    @property
    def passed(self) -> bool:
        return (
            self.trace_deviation <= self.tol
            and self.hermitian_asymmetry <= self.tol
            and self.min_eigenvalue >= TOL.psd_floor
        )

    def __bool__(self) -> bool:
        return self.passed


def validate_density(rho, tol: float = TOL.structural) -> DensityReport:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    trace_dev = abs(np.trace(rho) - 1.0)
    asym = float(np.max(np.abs(rho - rho.conj().T))) if rho.size else 0.0
    herm = 0.5 * (rho + rho.conj().T)
    min_eig = float(np.linalg.eigvalsh(herm)[0]) if rho.size else 0.0
    return DensityReport(float(trace_dev), asym, min_eig, tol)
