"""Truncated harmonic and anharmonic oscillators on 2^N levels, with the selective drive."""

import logging

import numpy as np

from app.linalg import expm_hermitian_generator
from app.models import DriveSpec, OscillatorSpec

logger = logging.getLogger(__name__)


def level_energies(spec: OscillatorSpec) -> np.ndarray:
    """Omega[(n + 1/2) + mu (n + 1/2)^2] for n = 0..levels-1"""
    n = np.arange(spec.levels) + 0.5
    return spec.omega * (n + spec.mu * n**2)


def qho_hamiltonian(spec: OscillatorSpec) -> np.ndarray:
    if spec.mu != 0:
        raise ValueError(f"harmonic oscillator requires mu = 0, got {spec.mu}")
    return np.diag(level_energies(spec)).astype(complex)


def aho_hamiltonian(spec: OscillatorSpec) -> np.ndarray:
    return np.diag(level_energies(spec)).astype(complex)


def transition_energy(m: int, spec: OscillatorSpec) -> float:
    """Delta E_m = Omega [2 mu (m + 1) + 1], the m -> m+1 spacing"""
    if not 0 <= m < spec.levels - 1:
        raise ValueError(f"transition {m}->{m + 1} outside {spec.levels} levels")
    return spec.omega * (2 * spec.mu * (m + 1) + 1)


def driven_hamiltonian(spec: OscillatorSpec, drive: DriveSpec) -> np.ndarray:
    """H_AHO + (Omega_R / 2)(|m><m+1| + |m+1><m|)"""
    m = drive.level_m
    if m > spec.levels - 2:
        raise ValueError(f"drive level m={m} needs m <= {spec.levels - 2}")
    h = aho_hamiltonian(spec)
    h[m, m + 1] = h[m + 1, m] = 0.5 * drive.rabi_frequency
    return h


def exact_propagator(h: np.ndarray, t: float) -> np.ndarray:
    """Oracle U = exp(-i H_s T)"""
    return expm_hermitian_generator(h, t)


def generalized_rabi_frequency(h: np.ndarray, m: int) -> float:
    """Eigenvalue splitting of the {m, m+1} block, sqrt(Delta^2 + Omega_R^2) for a two-level drive"""
    block = h[m : m + 2, m : m + 2]
    eigenvalues = np.linalg.eigvalsh(block)
    return float(eigenvalues[1] - eigenvalues[0])
