import math

import numpy as np
import pytest

from app.encoding import gray_encoding
from app.models import DriveSpec, Encoding, OscillatorSpec, SequenceKind, SpinSystemParams
from app.pulse_programs import two_proton_system

OMEGA = 2 * math.pi


@pytest.fixture
def qho_params() -> SpinSystemParams:
    """Two-proton processor with the receiver on spin 2"""
    return two_proton_system(SequenceKind.QHO)


@pytest.fixture
def aho_params() -> SpinSystemParams:
    """Two-proton processor with the receiver J/2 below spin 2"""
    return two_proton_system(SequenceKind.AHO)


@pytest.fixture
def qho_spec() -> OscillatorSpec:
    return OscillatorSpec(levels=4, omega=OMEGA)


@pytest.fixture
def aho_spec() -> OscillatorSpec:
    return OscillatorSpec(levels=4, omega=OMEGA, mu=-2 / 9)


@pytest.fixture
def aho_drive() -> DriveSpec:
    return DriveSpec(level_m=0, rabi_frequency=-2 / 9 * OMEGA)


@pytest.fixture
def gray() -> Encoding:
    return gray_encoding(2)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (z + z.conj().T) / 2


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = z @ z.conj().T
    return rho / np.trace(rho)
