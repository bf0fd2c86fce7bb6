"""Dense complex linear algebra shared by every simulation layer.

All generators are in angular units with hbar = 1, so propagators are exp(-i h t).
"""

import logging
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from app.models import DistanceResult

logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-10
UNITARY_TOLERANCE = 1e-12


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tensor product, a in the more significant slot"""
    return np.kron(a, b)


def kron_all(factors: Sequence[np.ndarray]) -> np.ndarray:
    if not factors:
        raise ValueError("kron_all needs at least one factor")
    return reduce(np.kron, factors)


def max_entry_norm(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def hermitian_error(h: np.ndarray) -> float:
    return max_entry_norm(h - h.conj().T)


def unitarity_error(u: np.ndarray) -> float:
    return max_entry_norm(u.conj().T @ u - np.eye(u.shape[0]))


def is_unitary(u: np.ndarray, tolerance: float = UNITARY_TOLERANCE) -> bool:
    return u.ndim == 2 and u.shape[0] == u.shape[1] and unitarity_error(u) <= tolerance


def expm_hermitian_generator(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i h t) through the eigendecomposition of the Hermitian generator h"""
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"generator must be square, got shape {h.shape}")
    error = hermitian_error(h)
    if error > HERMITIAN_TOLERANCE:
        raise ValueError(f"generator is not Hermitian: max |h - h^H| = {error:.3e}")

    if np.count_nonzero(h - np.diag(np.diagonal(h))) == 0:
        return np.diag(np.exp(-1j * np.diagonal(h).real * t))

    eigenvalues, eigenvectors = np.linalg.eigh(h)
    return (eigenvectors * np.exp(-1j * eigenvalues * t)) @ eigenvectors.conj().T


def phase_invariant_distance(u1: np.ndarray, u2: np.ndarray) -> DistanceResult:
    """min over theta of max |u1 - exp(i theta) u2|

    The trace overlap fixes theta; when it vanishes the phase is searched on a grid and refined.
    """
    if u1.shape != u2.shape:
        raise ValueError(f"cannot compare propagators of shapes {u1.shape} and {u2.shape}")

    overlap = np.trace(u2.conj().T @ u1)
    if abs(overlap) > 1e-9 * u1.shape[0]:
        theta = float(np.angle(overlap))
        value = max_entry_norm(u1 - np.exp(1j * theta) * u2)
        return DistanceResult(value=value, phase=theta)

    logger.warning("Trace overlap vanishes, aligning global phase by grid search")

    def distance_at(theta: float) -> float:
        return max_entry_norm(u1 - np.exp(1j * theta) * u2)

    grid = np.linspace(0.0, 2 * np.pi, 721)
    values = [distance_at(theta) for theta in grid]
    best = int(np.argmin(values))
    step = grid[1] - grid[0]
    refined = minimize_scalar(distance_at, bounds=(grid[best] - step, grid[best] + step), method="bounded")
    theta, value = (float(refined.x), float(refined.fun)) if refined.fun < values[best] else (grid[best], values[best])
    return DistanceResult(value=value, phase=float(np.mod(theta, 2 * np.pi)), used_grid_search=True)
