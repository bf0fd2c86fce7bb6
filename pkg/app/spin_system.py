"""N-spin NMR processor: rotating-frame Hamiltonian, hard pulses, delays, crusher, thermal states.

Tensor slot 0 is the most significant; basis states run up...up to down...down with
sigma_z |up> = +|up>.
"""

import logging
from typing import Dict

import numpy as np

from app.linalg import kron_all, max_entry_norm
from app.models import DensityMatrix, PhaseAxis, PulseEvent, SpinSystemParams

logger = logging.getLogger(__name__)

IDENTITY_2 = np.eye(2, dtype=complex)
PAULI: Dict[str, np.ndarray] = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def z_eigenvalues(spin: int, n_spins: int) -> np.ndarray:
    """Diagonal of sigma_z on one slot, as +1/-1 per basis index"""
    bits = (np.arange(2**n_spins) >> (n_spins - 1 - spin)) & 1
    return 1.0 - 2.0 * bits


def pauli_operator(axis: str, spin: int, n_spins: int) -> np.ndarray:
    """I x ... x sigma_axis x ... x I with sigma at the given 0-based slot"""
    if axis not in PAULI:
        raise ValueError(f"unknown Pauli axis {axis!r}")
    if not 0 <= spin < n_spins:
        raise ValueError(f"spin index {spin} out of range for {n_spins} spins")
    return kron_all([PAULI[axis] if slot == spin else IDENTITY_2 for slot in range(n_spins)])


def natural_hamiltonian(params: SpinSystemParams) -> np.ndarray:
    """Rotating-frame H_p0 in rad/s: offsets plus weak scalar couplings pi*J sz sz, times the precession sense"""
    n = params.n_spins
    diagonal = np.zeros(2**n)
    for i in range(n):
        diagonal += params.offset(i) * z_eigenvalues(i, n)
        for j in range(i + 1, n):
            diagonal += np.pi * params.coupling(i, j) * z_eigenvalues(i, n) * z_eigenvalues(j, n)
    return np.diag(0.5 * params.precession_sense * diagonal).astype(complex)


def rotation_operator(pulse: PulseEvent, n_spins: int) -> np.ndarray:
    """R = exp(-i theta/2 sum sigma_axis) over the pulse targets"""
    for target in pulse.targets:
        if target >= n_spins:
            raise ValueError(f"pulse target {target} out of range for {n_spins} spins")
    match pulse.axis:
        case PhaseAxis.X:
            sigma = PAULI["x"]
        case PhaseAxis.MINUS_X:
            sigma = -PAULI["x"]
        case PhaseAxis.Y:
            sigma = PAULI["y"]
        case PhaseAxis.MINUS_Y:
            sigma = -PAULI["y"]
        case _:
            raise ValueError(f"unsupported pulse axis {pulse.axis}")
    half = pulse.flip_angle / 2
    single = np.cos(half) * IDENTITY_2 - 1j * np.sin(half) * sigma
    return kron_all([single if slot in pulse.targets else IDENTITY_2 for slot in range(n_spins)])


def apply_pulse(state: DensityMatrix, pulse: PulseEvent) -> DensityMatrix:
    r = rotation_operator(pulse, state.n_spins)
    return state.evolved(r @ state.matrix @ r.conj().T)


def delay_propagator(params: SpinSystemParams, dt: float) -> np.ndarray:
    return np.diag(np.exp(-1j * np.diagonal(natural_hamiltonian(params)).real * dt))


def evolve_delay(state: DensityMatrix, dt: float, params: SpinSystemParams, relaxation: bool = False) -> DensityMatrix:
    """Free evolution under H_p0 for dt seconds, then optional phenomenological T1/T2 relaxation"""
    if dt < 0:
        raise ValueError(f"delay must be non-negative, got {dt}")
    if state.dim != 2**params.n_spins:
        raise ValueError(f"state of dimension {state.dim} does not fit {params.n_spins} spins")

    phases = np.exp(-1j * np.diagonal(natural_hamiltonian(params)).real * dt)
    rho = phases[:, None] * state.matrix * phases.conj()[None, :]
    if not relaxation:
        return state.evolved(rho)

    if params.t1 is None and params.t2 is None:
        raise ValueError("relaxation requested but neither T1 nor T2 is set")

    if params.t2 is not None:
        decay = np.exp(-dt / params.t2)
        diagonal = np.diagonal(rho).copy()
        rho = rho * decay
        np.fill_diagonal(rho, diagonal)
    if params.t1 is not None:
        target = np.trace(state.matrix) / state.dim * np.ones(state.dim)
        if state.is_deviation:
            target = target + np.diagonal(thermal_deviation(params).matrix)
        recovery = np.exp(-dt / params.t1)
        np.fill_diagonal(rho, target + (np.diagonal(rho) - target) * recovery)
    return state.evolved(rho)


def gradient_crush(state: DensityMatrix) -> DensityMatrix:
    """Zero every off-diagonal element, zero-quantum terms included"""
    return state.evolved(np.diag(np.diagonal(state.matrix)))


def thermal_deviation(params: SpinSystemParams) -> DensityMatrix:
    """High-temperature deviation proportional to sum_i sigma_z^i, scaled to unit largest eigenvalue"""
    n = params.n_spins
    diagonal = sum(z_eigenvalues(i, n) for i in range(n))
    return DensityMatrix(matrix=np.diag(diagonal / np.max(np.abs(diagonal))).astype(complex), is_deviation=True)


def pseudopure_from_deviation(deviation: DensityMatrix) -> DensityMatrix:
    """Unit-trace state I/d + eps*D whose largest eigenvalue reaches 1 when D is pseudopure"""
    d = deviation.dim
    traceless = deviation.matrix - np.trace(deviation.matrix) / d * np.eye(d)
    top = float(np.max(np.linalg.eigvalsh(traceless)))
    if top <= 0:
        raise ValueError("deviation matrix has no positive part to rescale")
    rho = np.eye(d) / d + traceless * (1 - 1 / d) / top
    return DensityMatrix(matrix=rho)


def commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    return max_entry_norm(a @ b - b @ a)


def purity(state: DensityMatrix) -> float:
    return float(np.real(np.trace(state.matrix @ state.matrix)))
