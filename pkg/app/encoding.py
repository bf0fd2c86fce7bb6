"""Level <-> spin-state maps and the average Hamiltonians they induce.

Closed forms follow the label convention used throughout the package: the superscript-1
operator of a closed form acts on tensor slot 1 and superscript 2 on slot 0.
Under this assignment the harmonic Gray-code form equals the conjugated Hamiltonian exactly.
"""

import logging
from typing import TypeVar, Union

import numpy as np

from app.linalg import max_entry_norm
from app.models import DensityMatrix, Encoding, EncodingKind, StateVector
from app.spin_system import pauli_operator

logger = logging.getLogger(__name__)

StateT = TypeVar("StateT", StateVector, DensityMatrix)


def gray_encoding(n_spins: int) -> Encoding:
    """Reflected binary Gray code, up = 0, down = 1, slot 0 most significant"""
    if n_spins < 1:
        raise ValueError(f"encoding needs at least one spin, got {n_spins}")
    return Encoding(
        kind=EncodingKind.GRAY, n_spins=n_spins, permutation=[n ^ (n >> 1) for n in range(2**n_spins)]
    )


def binary_encoding(n_spins: int) -> Encoding:
    """Level k with bit i of k on spin i+1, so spin 1 holds the least significant bit"""
    if n_spins < 1:
        raise ValueError(f"encoding needs at least one spin, got {n_spins}")
    permutation = [int(format(k, f"0{n_spins}b")[::-1], 2) for k in range(2**n_spins)]
    return Encoding(kind=EncodingKind.BINARY, n_spins=n_spins, permutation=permutation)


def identity_encoding(n_spins: int) -> Encoding:
    return Encoding(kind=EncodingKind.IDENTITY, n_spins=n_spins, permutation=list(range(2**n_spins)))


def encoding_for(kind: EncodingKind, n_spins: int) -> Encoding:
    match kind:
        case EncodingKind.GRAY:
            return gray_encoding(n_spins)
        case EncodingKind.BINARY:
            return binary_encoding(n_spins)
        case EncodingKind.IDENTITY:
            return identity_encoding(n_spins)
        case _:
            raise ValueError(f"unknown encoding {kind}")


def _check_dim(dim: int, e: Encoding) -> None:
    if dim != e.dim:
        raise ValueError(f"dimension {dim} does not match {e.kind.value} encoding on {e.n_spins} spins")


def pushforward_operator(op: np.ndarray, e: Encoding) -> np.ndarray:
    """Level-space operator to spin space"""
    _check_dim(op.shape[0], e)
    p = e.matrix()
    return p @ op @ p.T


def pullback_operator(op: np.ndarray, e: Encoding) -> np.ndarray:
    _check_dim(op.shape[0], e)
    p = e.matrix()
    return p.T @ op @ p


def pushforward_state(s: Union[StateVector, DensityMatrix], e: Encoding) -> Union[StateVector, DensityMatrix]:
    """|s> -> |p>: permute amplitudes (or rows and columns) into the spin basis"""
    match s:
        case StateVector():
            _check_dim(s.dim, e)
            return StateVector(amplitudes=e.matrix() @ s.amplitudes)
        case DensityMatrix():
            return s.evolved(pushforward_operator(s.matrix, e))
        case _:
            raise TypeError(f"cannot push forward {type(s).__name__}")


def pullback_state(p: Union[StateVector, DensityMatrix], e: Encoding) -> Union[StateVector, DensityMatrix]:
    match p:
        case StateVector():
            _check_dim(p.dim, e)
            return StateVector(amplitudes=e.matrix().T @ p.amplitudes)
        case DensityMatrix():
            return p.evolved(pullback_operator(p.matrix, e))
        case _:
            raise TypeError(f"cannot pull back {type(p).__name__}")


def average_hamiltonian(h_s: np.ndarray, e: Encoding) -> np.ndarray:
    """phi^-1 H_s phi written in the spin product basis"""
    return pushforward_operator(h_s, e)


def pullback_oracle(u_s: np.ndarray, e: Encoding) -> np.ndarray:
    """Oracle propagator of the simulated system written in the spin product basis"""
    return pushforward_operator(u_s, e)


def equal_modulo_identity(a: np.ndarray, b: np.ndarray) -> float:
    """max |A - B - (tr(A - B)/d) I|"""
    if a.shape != b.shape:
        raise ValueError(f"cannot compare shapes {a.shape} and {b.shape}")
    diff = a - b
    return max_entry_norm(diff - np.trace(diff) / diff.shape[0] * np.eye(diff.shape[0]))


def qho_closed_form(omega: float, n_spins: int = 2) -> np.ndarray:
    """Omega(2 - sz^2 (1 + sz^1 / 2)), the two-spin Gray-code harmonic generator"""
    if n_spins != 2:
        raise ValueError(f"closed form exists for two spins only, got {n_spins}")
    z_hi = pauli_operator("z", 0, 2)
    z_lo = pauli_operator("z", 1, 2)
    identity = np.eye(4)
    return omega * (2 * identity - z_hi @ (identity + 0.5 * z_lo))


def coupling_free_closed_form(n_spins: int, omega: float) -> np.ndarray:
    """Omega/2 (2^n - sum_i 2^(i-1) sz^i), the binary-code harmonic generator"""
    if n_spins < 1:
        raise ValueError(f"closed form needs at least one spin, got {n_spins}")
    weighted = sum(2**i * pauli_operator("z", i, n_spins) for i in range(n_spins))
    return 0.5 * omega * (2**n_spins * np.eye(2**n_spins) - weighted)


def _driven_two_spin_form(omega: float, z_lo_weight: float, z_block_weight: float, rabi: float) -> np.ndarray:
    z_hi = pauli_operator("z", 0, 2)
    z_lo = pauli_operator("z", 1, 2)
    x_lo = pauli_operator("x", 1, 2)
    identity = np.eye(4)
    diagonal = omega * (z_lo_weight * z_lo - z_block_weight * z_hi @ (identity + 0.5 * z_lo))
    return diagonal + 0.25 * rabi * x_lo @ (identity + z_hi)


def driven_aho_closed_form(omega: float, mu: float, rabi: float) -> np.ndarray:
    """Omega[mu sz^1 - (4mu + 1) sz^2 (1 + sz^1 / 2)] + Omega_R/4 sx^1 (1 + sz^2)

    Equals the Gray-code driven Hamiltonian (m = 0) up to Omega(2 + 21mu/4) times identity.
    """
    return _driven_two_spin_form(omega, mu, 4 * mu + 1, rabi)


def realised_driven_aho_form(omega: float, mu: float, rabi: float) -> np.ndarray:
    """Omega/4 [mu sz^1 - 4(4mu + 1) sz^2 (1 + sz^1 / 2)] + Omega_R/4 sx^1 (1 + sz^2)

    The weight on sz^1 is a quarter of the exact one. This is the generator the
    anharmonic pulse sequence realises.
    """
    return _driven_two_spin_form(omega, 0.25 * mu, 4 * mu + 1, rabi)
