"""Exact state-vector simulation of a collective spin N/2 in the Dicke basis.

Used as ground truth for the Gaussian moment formulas and for the
equivalence of a feedback y-rotation with subtracting the phase beforehand.
Amplitudes are indexed by ``mu = -N/2, ..., N/2`` (ascending J_z eigenvalue).
Rotations are exact: J_x is real symmetric tridiagonal in this basis and is
diagonalized once per N; J_y is J_x conjugated by a diagonal z-rotation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .spin_ensemble import EnsembleSpec, SpinMoments

N_MAX = 200
NORM_TOL = 1e-12


@dataclass(frozen=True)
class StateVector:
    n_atoms: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.amplitudes.shape != (self.n_atoms + 1,):
            raise ValueError("amplitudes must have length n_atoms + 1")

    @property
    def mu(self) -> np.ndarray:
        return mu_grid(self.n_atoms)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))


@dataclass(frozen=True)
class OutcomePmf:
    n_atoms: int
    probabilities: np.ndarray = field(repr=False)

    @property
    def mu(self) -> np.ndarray:
        return mu_grid(self.n_atoms)

    def mean(self) -> float:
        return float(np.dot(self.mu, self.probabilities))

    def variance(self) -> float:
        m = self.mean()
        return float(np.dot((self.mu - m) ** 2, self.probabilities))

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mu", "p"])
            for m, p in zip(self.mu, self.probabilities):
                writer.writerow([repr(float(m)), repr(float(p))])


def mu_grid(n_atoms: int) -> np.ndarray:
    return np.arange(n_atoms + 1) - 0.5 * n_atoms


def _ladder_offdiag(n_atoms: int) -> np.ndarray:
    """<mu+1| J_x |mu> for consecutive ascending mu."""
    j = 0.5 * n_atoms
    m = mu_grid(n_atoms)[:-1]
    return 0.5 * np.sqrt(j * (j + 1) - m * (m + 1))


@lru_cache(maxsize=64)
def _jx_eigensystem(n_atoms: int) -> tuple[np.ndarray, np.ndarray]:
    w, v = eigh_tridiagonal(np.zeros(n_atoms + 1), _ladder_offdiag(n_atoms))
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


def _z_phases(n_atoms: int, angle: float) -> np.ndarray:
    return np.exp(-1j * angle * mu_grid(n_atoms))


def _apply_jx(n_atoms: int, psi: np.ndarray) -> np.ndarray:
    off = _ladder_offdiag(n_atoms)
    out = np.zeros_like(psi)
    out[1:] += off * psi[:-1]
    out[:-1] += off * psi[1:]
    return out


def _apply_jy(n_atoms: int, psi: np.ndarray) -> np.ndarray:
    # J_y = (J+ - J-)/(2i): raising part gets -i, lowering part +i
    off = _ladder_offdiag(n_atoms)
    out = np.zeros_like(psi, dtype=complex)
    out[1:] += -1j * off * psi[:-1]
    out[:-1] += 1j * off * psi[1:]
    return out


def _rotate_amplitudes(n_atoms: int, psi: np.ndarray, axis: str, angle: float) -> np.ndarray:
    if axis == "z":
        return _z_phases(n_atoms, angle) * psi
    if axis == "x":
        w, v = _jx_eigensystem(n_atoms)
        return v @ (np.exp(-1j * angle * w) * (v.T @ psi))
    if axis == "y":
        # exp(-i a J_y) = U exp(-i a J_x) U^dagger with U = exp(-i pi/2 J_z)
        u = _z_phases(n_atoms, 0.5 * np.pi)
        return u * _rotate_amplitudes(n_atoms, np.conj(u) * psi, "x", angle)
    raise ValueError(f"axis must be 'x', 'y' or 'z', got {axis!r}")


def _check_size(n_atoms: int, n_max: int) -> None:
    if n_atoms > n_max:
        raise ValueError(f"n_atoms={n_atoms} exceeds the dense-simulation limit {n_max}")


def build_pseudo_squeezed_state(spec: EnsembleSpec, n_max: int = N_MAX) -> StateVector:
    """Gaussian superposition ``sum_mu exp(-mu^2/(s^2 N)) |mu>_y`` in the J_z basis.

    The J_y eigenbasis is reached from the J_z basis by a pi/2 rotation about
    x, which leaves the real, positive superposition pointing along +x.
    Weights are truncated at |mu| <= N/2 and renormalized.
    """
    n = spec.n_atoms
    _check_size(n, n_max)
    mu = mu_grid(n)
    weights = np.exp(-(mu**2) / (spec.squeezing**2 * n)).astype(complex)
    psi = _rotate_amplitudes(n, weights, "x", -0.5 * np.pi)
    psi /= np.linalg.norm(psi)
    return StateVector(n, psi)


def coherent_z_state(n_atoms: int, up: bool = True) -> StateVector:
    psi = np.zeros(n_atoms + 1, dtype=complex)
    psi[-1 if up else 0] = 1.0
    return StateVector(n_atoms, psi)


def rotate(state: StateVector, axis: str, angle: float) -> StateVector:
    """Apply ``exp(-i angle J_axis)``."""
    if not np.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    amps = _rotate_amplitudes(state.n_atoms, state.amplitudes.astype(complex), axis, angle)
    return StateVector(state.n_atoms, amps)


def ramsey_evolve(state: StateVector, theta: float, feedback_angle: float = 0.0) -> StateVector:
    """Phase ``theta`` about z, pi/2 readout pulse about x, then the feedback rotation about y.

    The readout pulse maps the mean spin (cos t, sin t, 0) to (cos t, 0, sin t);
    the feedback rotation ``exp(-i f J_y)`` then turns it to
    (cos(t - f), 0, sin(t - f)), i.e. it subtracts ``feedback_angle`` from
    the measured phase.
    """
    psi = rotate(state, "z", theta)
    psi = rotate(psi, "x", 0.5 * np.pi)
    if feedback_angle:
        psi = rotate(psi, "y", feedback_angle)
    amps = psi.amplitudes / np.linalg.norm(psi.amplitudes)
    return StateVector(state.n_atoms, amps)


def outcome_pmf(state: StateVector) -> OutcomePmf:
    p = np.abs(state.amplitudes) ** 2
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"state is not normalized (norm^2 = {total})")
    return OutcomePmf(state.n_atoms, p / total)


def exact_moments(state: StateVector) -> SpinMoments:
    """Expectation values from the tridiagonal operator actions."""
    n = state.n_atoms
    psi = state.amplitudes.astype(complex)
    jx_psi = _apply_jx(n, psi)
    jy_psi = _apply_jy(n, psi)
    jx = float(np.real(np.vdot(psi, jx_psi)))
    jx2 = float(np.real(np.vdot(jx_psi, jx_psi)))
    jy = float(np.real(np.vdot(psi, jy_psi)))
    jy2 = float(np.real(np.vdot(jy_psi, jy_psi)))
    jz = float(np.dot(mu_grid(n), np.abs(psi) ** 2))
    return SpinMoments(
        jx_mean=jx, jx2_mean=jx2, jy_var=jy2 - jy * jy, jx_var=jx2 - jx * jx, jy_mean=jy, jz_mean=jz
    )
