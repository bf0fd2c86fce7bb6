import math

import numpy as np
import pytest

from app.linalg import max_entry_norm
from app.models import DensityMatrix, PhaseAxis, PulseEvent, SpinSystemParams
from app.spin_system import (
    apply_pulse,
    commutator_norm,
    evolve_delay,
    gradient_crush,
    natural_hamiltonian,
    pauli_operator,
    pseudopure_from_deviation,
    purity,
    rotation_operator,
    thermal_deviation,
)
from conftest import random_density

DELTA = 2 * math.pi * 226


def two_spins(
    offsets=(0.0, 0.0), j_hz: float = 0.0, sense: int = 1, t1: float | None = None, t2: float | None = None
) -> SpinSystemParams:
    return SpinSystemParams(
        n_spins=2,
        resonance_frequencies=list(offsets),
        receiver_frequency=0.0,
        j_couplings=[[0.0, j_hz], [j_hz, 0.0]],
        t1=t1,
        t2=t2,
        precession_sense=sense,
    )


def pure(amplitudes) -> DensityMatrix:
    psi = np.asarray(amplitudes, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return DensityMatrix(matrix=np.outer(psi, psi.conj()))


class TestSpinSystemParams:
    """Test parameter validation"""

    def test_asymmetric_coupling_rejected(self):
        """Test J must be symmetric"""
        with pytest.raises(ValueError):
            SpinSystemParams(n_spins=2, resonance_frequencies=[0, 0], j_couplings=[[0, 1], [2, 0]])

    def test_t2_bound(self):
        """Test T2 <= 2 T1"""
        with pytest.raises(ValueError):
            two_spins(t1=1.0, t2=3.0)

    def test_infinite_t2_skips_bound(self):
        """Test T2 = inf next to a finite T1 only switches transverse decay off"""
        params = two_spins(t1=2.0, t2=float("inf"))
        assert params.t1 == 2.0
        assert math.isinf(params.t2)

    def test_frequency_count(self):
        """Test one resonance frequency per spin"""
        with pytest.raises(ValueError):
            SpinSystemParams(n_spins=2, resonance_frequencies=[0.0], j_couplings=[[0, 0], [0, 0]])

    def test_precession_sense(self):
        """Test sense must be +1 or -1"""
        with pytest.raises(ValueError):
            two_spins(sense=0)


class TestPauliOperator:
    """Test embedded Pauli operators"""

    def test_z_on_spin_1(self):
        """Test sz on the first spin"""
        assert np.array_equal(pauli_operator("z", 0, 2), np.diag([1, 1, -1, -1]))

    def test_x_on_spin_2_squares_to_identity(self):
        """Test sx on the second spin is an involution"""
        x = pauli_operator("x", 1, 2)
        assert np.array_equal(x @ x, np.eye(4))

    def test_zz_product(self):
        """Test sz1 sz2 is diag(1, -1, -1, 1)"""
        assert np.array_equal(pauli_operator("z", 0, 2) @ pauli_operator("z", 1, 2), np.diag([1, -1, -1, 1]))

    def test_out_of_range(self):
        """Test spin index must exist"""
        with pytest.raises(ValueError):
            pauli_operator("z", 2, 2)


class TestNaturalHamiltonian:
    """Test the rotating-frame Hamiltonian"""

    def test_offset_and_coupling(self):
        """Test entries 1/2(+-delta +- pi J) for spin 2 offset delta"""
        h = natural_hamiltonian(two_spins(offsets=(0.0, DELTA), j_hz=5.7))
        j = math.pi * 5.7
        expected = 0.5 * np.array([DELTA + j, -DELTA - j, DELTA - j, -DELTA + j])
        assert max_entry_norm(np.diagonal(h) - expected) < 1e-12

    def test_zero(self):
        """Test no offsets and no coupling gives zero"""
        assert max_entry_norm(natural_hamiltonian(two_spins())) == 0

    def test_single_offset(self):
        """Test J = 0 with spin 2 offset gives delta/2 diag(1, -1, 1, -1)"""
        h = natural_hamiltonian(two_spins(offsets=(0.0, 3.0)))
        assert max_entry_norm(h - 1.5 * np.diag([1, -1, 1, -1])) < 1e-15

    def test_negative_sense_flips_sign(self):
        """Test the negative precession sense negates the Hamiltonian"""
        positive = natural_hamiltonian(two_spins(offsets=(DELTA, 0.0), j_hz=5.7, sense=1))
        negative = natural_hamiltonian(two_spins(offsets=(DELTA, 0.0), j_hz=5.7, sense=-1))
        assert max_entry_norm(positive + negative) == 0

    def test_commutes_with_every_sz(self):
        """Test H is diagonal"""
        h = natural_hamiltonian(two_spins(offsets=(DELTA, 1.0), j_hz=5.7))
        for spin in range(2):
            assert commutator_norm(h, pauli_operator("z", spin, 2)) < 1e-14


class TestApplyPulse:
    """Test ideal hard pulses"""

    def test_zero_angle(self, rng):
        """Test a zero pulse leaves the state alone"""
        rho = DensityMatrix(matrix=random_density(rng, 4))
        pulse = PulseEvent(flip_angle=0.0, axis=PhaseAxis.Y, targets=(0, 1))
        assert max_entry_norm(apply_pulse(rho, pulse).matrix - rho.matrix) < 1e-15

    def test_pi_y_twice_on_diagonal(self):
        """Test two pi_y pulses restore a diagonal state"""
        rho = DensityMatrix(matrix=np.diag([0.4, 0.3, 0.2, 0.1]).astype(complex))
        pulse = PulseEvent(flip_angle=math.pi, axis=PhaseAxis.Y, targets=(0, 1))
        assert max_entry_norm(apply_pulse(apply_pulse(rho, pulse), pulse).matrix - rho.matrix) < 1e-12

    def test_read_pulse_on_ground_state(self):
        """Test [pi/2]_y on spin 1 of |uu> gives equal populations and a spin-1 coherence of 1/2"""
        pulse = PulseEvent(flip_angle=math.pi / 2, axis=PhaseAxis.Y, targets=(0,))
        rho = apply_pulse(pure([1, 0, 0, 0]), pulse).matrix
        expected = np.zeros((4, 4))
        expected[np.ix_([0, 2], [0, 2])] = 0.5
        assert max_entry_norm(rho - expected) < 1e-12

    def test_preserves_spectrum(self, rng):
        """Test trace, Hermiticity and eigenvalues survive a pulse"""
        rho = DensityMatrix(matrix=random_density(rng, 4))
        pulse = PulseEvent(flip_angle=1.234, axis=PhaseAxis.MINUS_X, targets=(1,))
        out = apply_pulse(rho, pulse).matrix
        assert abs(np.trace(out) - 1) < 1e-12
        assert max_entry_norm(out - out.conj().T) < 1e-12
        assert np.allclose(np.linalg.eigvalsh(out), np.linalg.eigvalsh(rho.matrix), atol=1e-10)

    def test_pi_y_inverts_every_sz(self):
        """Test a pi_y pulse on all spins maps sz^i to -sz^i"""
        r = rotation_operator(PulseEvent(flip_angle=math.pi, axis=PhaseAxis.Y, targets=(0, 1)), 2)
        for spin in range(2):
            z = pauli_operator("z", spin, 2)
            assert max_entry_norm(r @ z @ r.conj().T + z) < 1e-12

    def test_target_out_of_range(self):
        """Test pulses on missing spins are rejected"""
        with pytest.raises(ValueError):
            apply_pulse(pure([1, 0, 0, 0]), PulseEvent(flip_angle=1.0, axis=PhaseAxis.X, targets=(2,)))


class TestEvolveDelay:
    """Test free evolution and relaxation"""

    def test_zero_delay(self, rng):
        """Test dt = 0 leaves the state alone"""
        rho = DensityMatrix(matrix=random_density(rng, 4))
        out = evolve_delay(rho, 0.0, two_spins(offsets=(DELTA, 1.0), j_hz=5.7))
        assert max_entry_norm(out.matrix - rho.matrix) < 1e-15

    def test_populations_do_not_evolve(self):
        """Test diagonal states commute with H"""
        rho = DensityMatrix(matrix=np.diag([0.4, 0.3, 0.2, 0.1]).astype(complex))
        out = evolve_delay(rho, 0.37, two_spins(offsets=(DELTA, 1.0), j_hz=5.7))
        assert max_entry_norm(out.matrix - rho.matrix) < 1e-15

    def test_double_quantum_phase(self):
        """Test rho_03 of |uu> + i|dd> picks up exp(-i delta dt) with spin 2 offset delta"""
        delta, dt = 2.0, 0.3
        rho = pure([1, 0, 0, 1j])
        out = evolve_delay(rho, dt, two_spins(offsets=(0.0, delta)))
        assert abs(out.matrix[0, 3] - rho.matrix[0, 3] * np.exp(-1j * delta * dt)) < 1e-15

    def test_negative_delay(self):
        """Test negative delays are rejected"""
        with pytest.raises(ValueError):
            evolve_delay(pure([1, 0, 0, 0]), -1.0, two_spins())

    def test_relaxation_needs_times(self):
        """Test relaxation on without T1 or T2 is rejected"""
        with pytest.raises(ValueError):
            evolve_delay(pure([1, 0, 0, 0]), 1.0, two_spins(), relaxation=True)

    def test_unitary_evolution_preserves_purity(self, rng):
        """Test trace and purity survive relaxation-free delays"""
        rho = DensityMatrix(matrix=random_density(rng, 4))
        out = evolve_delay(rho, 0.8, two_spins(offsets=(DELTA, 1.0), j_hz=5.7))
        assert abs(np.trace(out.matrix) - 1) < 1e-12
        assert abs(purity(out) - purity(rho)) < 1e-12

    def test_relaxation_damps_coherences(self, rng):
        """Test T2 damps off-diagonals, T1 pulls populations to I/d, trace kept, purity drops"""
        rho = DensityMatrix(matrix=random_density(rng, 4))
        params = two_spins(t1=2.0, t2=1.0)
        out = evolve_delay(rho, 0.5, params, relaxation=True).matrix
        off = ~np.eye(4, dtype=bool)
        assert max_entry_norm(out[off] - rho.matrix[off] * np.exp(-0.5)) < 1e-15
        expected_diag = 0.25 + (np.diagonal(rho.matrix) - 0.25) * np.exp(-0.25)
        assert max_entry_norm(np.diagonal(out) - expected_diag) < 1e-15
        assert abs(np.trace(out) - 1) < 1e-12
        assert purity(DensityMatrix(matrix=out)) <= purity(rho) + 1e-12

    def test_infinite_t2_is_no_relaxation(self, rng):
        """Test the T2 = inf sentinel matches the relaxation-free delay exactly"""
        rho = DensityMatrix(matrix=random_density(rng, 4))
        params = two_spins(offsets=(DELTA, 0.0), j_hz=5.7, t2=math.inf)
        relaxed = evolve_delay(rho, 0.4, params, relaxation=True)
        plain = evolve_delay(rho, 0.4, params)
        assert max_entry_norm(relaxed.matrix - plain.matrix) < 1e-12

    def test_deviation_relaxes_to_thermal(self):
        """Test deviation matrices relax toward the thermal deviation"""
        params = two_spins(t1=1.0)
        start = DensityMatrix(matrix=np.zeros((4, 4), dtype=complex), is_deviation=True)
        out = evolve_delay(start, 50.0, params, relaxation=True)
        assert max_entry_norm(out.matrix - thermal_deviation(params).matrix) < 1e-12


class TestGradientAndThermal:
    """Test the crusher and thermal states"""

    def test_crush_idempotent(self, rng):
        """Test crushing twice equals crushing once and keeps the trace"""
        rho = DensityMatrix(matrix=random_density(rng, 4))
        once = gradient_crush(rho)
        assert np.array_equal(gradient_crush(once).matrix, once.matrix)
        assert np.trace(once.matrix) == np.trace(rho.matrix)
        assert np.count_nonzero(once.matrix - np.diag(np.diagonal(once.matrix))) == 0

    def test_crush_corner_coherence(self):
        """Test |uu> + i|dd> crushes to diag(1, 0, 0, 1)/2"""
        out = gradient_crush(pure([1, 0, 0, 1j])).matrix
        assert max_entry_norm(out - np.diag([0.5, 0, 0, 0.5])) < 1e-15

    def test_thermal_two_spins(self):
        """Test the thermal deviation is diag(1, 0, 0, -1)"""
        dev = thermal_deviation(two_spins())
        assert dev.is_deviation
        assert np.array_equal(dev.matrix, np.diag([1, 0, 0, -1]))
        assert np.trace(dev.matrix) == 0

    def test_thermal_one_spin(self):
        """Test one spin gives a traceless diag(1, -1) up to scale"""
        params = SpinSystemParams(n_spins=1, resonance_frequencies=[0.0], j_couplings=[[0.0]])
        assert np.array_equal(thermal_deviation(params).matrix, np.diag([1, -1]))

    def test_pseudopure_rescale(self):
        """Test 4|uu><uu| - I rescales to the pure |uu><uu|"""
        deviation = DensityMatrix(matrix=(4 * np.diag([1, 0, 0, 0]) - np.eye(4)).astype(complex), is_deviation=True)
        out = pseudopure_from_deviation(deviation).matrix
        assert max_entry_norm(out - np.diag([1, 0, 0, 0])) < 1e-15
