import math

import numpy as np
import pytest

from app.encoding import average_hamiltonian, realised_driven_aho_form
from app.linalg import expm_hermitian_generator, is_unitary, max_entry_norm, phase_invariant_distance
from app.models import (
    DelayEvent,
    DensityMatrix,
    DriveSpec,
    GradientEvent,
    OscillatorSpec,
    PhaseAxis,
    PulseEvent,
    PulseProgram,
    SequenceKind,
)
from app.oscillator import exact_propagator, qho_hamiltonian
from app.pulse_programs import (
    aho_program,
    aho_timing,
    check_aho_regime,
    compile_program,
    concatenate,
    execute_program,
    format_angle,
    format_program,
    two_proton_system,
    parse_angle,
    parse_program,
    program_duration,
    pseudopure_prep_program,
    qho_program,
    qho_timing,
)
from app.spin_system import pseudopure_from_deviation, thermal_deviation
from conftest import random_density

OMEGA = 2 * math.pi


def qho_oracle(omega_t, spec, gray):
    return exact_propagator(average_hamiltonian(qho_hamiltonian(spec), gray), omega_t / OMEGA)


class TestPseudopurePreparation:
    """Test the thermal to pseudopure preparation"""

    def test_yields_up_up(self, qho_params):
        """Test the rescaled deviation is |up up><up up|"""
        deviation = execute_program(pseudopure_prep_program(qho_params), thermal_deviation(qho_params), qho_params)
        rho = pseudopure_from_deviation(deviation)
        target = np.zeros((4, 4))
        target[0, 0] = 1
        assert max_entry_norm(rho.matrix - target) < 1e-10

    def test_gradient_leaves_diagonal(self, qho_params):
        """Test the crushed deviation is diagonal"""
        deviation = execute_program(pseudopure_prep_program(qho_params), thermal_deviation(qho_params), qho_params)
        assert np.count_nonzero(deviation.matrix - np.diag(np.diagonal(deviation.matrix))) == 0
        assert deviation.is_deviation

    def test_program_shape(self, qho_params):
        """Test six events ending in a gradient, delays of 1/4J"""
        program = pseudopure_prep_program(qho_params)
        assert len(program.events) == 6
        assert program.has_gradient
        delays = [e.duration for e in program.events if isinstance(e, DelayEvent)]
        assert delays == [1 / (4 * 5.7)] * 2

    def test_requires_coupling(self):
        """Test J = 0 cannot prepare a pseudopure state"""
        with pytest.raises(ValueError):
            pseudopure_prep_program(two_proton_system(SequenceKind.QHO, j_hz=0.0))


class TestQhoTiming:
    """Test the harmonic delay solution"""

    def test_unit_omega_t(self, qho_params):
        """Test OmegaT = 1 on the 5.7 Hz / 226 Hz processor"""
        timing = qho_timing(1.0, qho_params)
        assert abs(timing.tau1 - (1 / (math.pi * 5.7) - 1 / (math.pi * 226))) < 1e-15
        assert abs(timing.tau2 - 1 / (math.pi * 226)) < 1e-15
        assert abs(timing.tau1 - 0.05444) < 1e-4
        assert abs(timing.tau2 - 1.408e-3) < 1e-6

    def test_zero(self, qho_params):
        """Test OmegaT = 0 gives no delay"""
        timing = qho_timing(0.0, qho_params)
        assert timing.tau1 == timing.tau2 == 0

    def test_linear_in_omega_t(self, qho_params):
        """Test the delays scale with OmegaT"""
        one, three = qho_timing(1.0, qho_params), qho_timing(3.0, qho_params)
        assert abs(three.tau1 - 3 * one.tau1) < 1e-15
        assert abs(three.tau2 - 3 * one.tau2) < 1e-15

    def test_rejects_bad_inputs(self, qho_params):
        """Test J = 0, equal lines, negative OmegaT and a negative tau1"""
        with pytest.raises(ValueError):
            qho_timing(1.0, two_proton_system(SequenceKind.QHO, j_hz=0.0))
        with pytest.raises(ValueError):
            qho_timing(1.0, two_proton_system(SequenceKind.QHO, delta_nu_hz=0.0))
        with pytest.raises(ValueError):
            qho_timing(-1.0, qho_params)
        with pytest.raises(ValueError, match="negative delay"):
            qho_timing(1.0, two_proton_system(SequenceKind.QHO, j_hz=300.0))


class TestQhoProgram:
    """Test the harmonic V_T against its oracle"""

    def test_matches_oracle(self, qho_params, qho_spec, gray):
        """Test d(V_T, U_QHO) < 1e-9 across a period"""
        for omega_t in np.linspace(0, OMEGA, 17):
            u = compile_program(qho_program(omega_t, qho_params), qho_params)
            assert is_unitary(u)
            assert phase_invariant_distance(u, qho_oracle(omega_t, qho_spec, gray)).value < 1e-9

    def test_square_is_double_time(self, qho_params):
        """Test V_T V_T = V_2T up to phase"""
        u = compile_program(qho_program(0.8, qho_params), qho_params)
        double = compile_program(qho_program(1.6, qho_params), qho_params)
        assert phase_invariant_distance(u @ u, double).value < 1e-9

    def test_duration(self, qho_params):
        """Test t_phys = tau1 + tau2"""
        timing = qho_timing(2.0, qho_params)
        assert abs(program_duration(qho_program(2.0, qho_params)) - (timing.tau1 + timing.tau2)) < 1e-15

    def test_needs_receiver_on_spin_two(self, aho_params):
        """Test the anharmonic receiver placement is refused"""
        with pytest.raises(ValueError):
            qho_program(1.0, aho_params)


class TestAhoTiming:
    """Test the anharmonic delay solution"""

    def test_block_phase_locked(self, aho_params, aho_spec, aho_drive):
        """Test Delta (tau1 + tau2) - 2 OmegaT/9 is 2 pi m"""
        offset = aho_params.offset(0)
        for omega_t in range(0, 256, 15):
            timing = aho_timing(float(omega_t), aho_params, aho_spec, aho_drive)
            assert timing.m_integer is not None and timing.m_integer >= 0
            locked = offset * (timing.tau1 + timing.tau2) - 2 * omega_t / 9
            assert abs(locked - 2 * math.pi * timing.m_integer) < 1e-8

    def test_tau2(self, aho_params, aho_spec, aho_drive):
        """Test tau2 = sqrt(2) OmegaT/(9 pi J)"""
        timing = aho_timing(9.0, aho_params, aho_spec, aho_drive)
        assert abs(timing.tau2 - math.sqrt(2) / (math.pi * 5.7)) < 1e-15

    def test_regime(self, aho_spec, aho_drive):
        """Test only mu = Omega_R/Omega = -2/9 on the 0-1 transition is accepted"""
        check_aho_regime(aho_spec, aho_drive)
        with pytest.raises(ValueError):
            check_aho_regime(OscillatorSpec(levels=4, omega=OMEGA, mu=0.1), aho_drive)
        with pytest.raises(ValueError):
            check_aho_regime(aho_spec, DriveSpec(level_m=0, rabi_frequency=OMEGA))
        with pytest.raises(ValueError):
            check_aho_regime(aho_spec, DriveSpec(level_m=1, rabi_frequency=aho_drive.rabi_frequency))


class TestAhoProgram:
    """Test the driven anharmonic V_T against its oracle"""

    def test_matches_oracle(self, aho_params, aho_spec, aho_drive):
        """Test d(V_T, exp(-i H T)) < 1e-6 for the realised closed form"""
        h = realised_driven_aho_form(OMEGA, aho_spec.mu, aho_drive.rabi_frequency)
        for omega_t in list(np.arange(0, 6.3, 0.7)) + [17.0, 100.0, 255.0]:
            u = compile_program(aho_program(float(omega_t), aho_params, aho_spec, aho_drive), aho_params)
            assert phase_invariant_distance(u, expm_hermitian_generator(h, omega_t / OMEGA)).value < 1e-6

    def test_pulses_on_spin_two(self, aho_params, aho_spec, aho_drive):
        """Test every pulse targets slot 1"""
        program = aho_program(3.0, aho_params, aho_spec, aho_drive)
        pulses = [e for e in program.events if isinstance(e, PulseEvent)]
        assert [p.flip_angle for p in pulses] == [math.pi, 3 * math.pi / 4, math.pi / 4]
        assert all(p.targets == (1,) for p in pulses)

    def test_needs_shifted_receiver(self, qho_params, aho_spec, aho_drive):
        """Test the harmonic receiver placement is refused"""
        with pytest.raises(ValueError):
            aho_program(1.0, qho_params, aho_spec, aho_drive)


class TestCompileAndExecute:
    """Test program propagators and state execution"""

    def test_empty_program(self, qho_params):
        """Test the empty program is the identity"""
        assert np.array_equal(compile_program(PulseProgram(), qho_params), np.eye(4))

    def test_concatenation(self, qho_params):
        """Test U(a then b) = U(b) U(a)"""
        a, b = qho_program(0.4, qho_params), qho_program(1.3, qho_params)
        combined = compile_program(concatenate(a, b), qho_params)
        assert max_entry_norm(combined - compile_program(b, qho_params) @ compile_program(a, qho_params)) < 1e-12
        assert concatenate(a, b).label == "qho+qho"

    def test_gradient_has_no_propagator(self, qho_params):
        """Test compiling a gradient is a type error"""
        with pytest.raises(TypeError):
            compile_program(pseudopure_prep_program(qho_params), qho_params)

    def test_single_gradient(self):
        """Test programs hold at most one gradient"""
        with pytest.raises(ValueError):
            PulseProgram(events=(GradientEvent(), GradientEvent()))

    def test_execute_matches_compile(self, aho_params, aho_spec, aho_drive, rng):
        """Test execution without relaxation is U rho U^H"""
        program = aho_program(2.0, aho_params, aho_spec, aho_drive)
        u = compile_program(program, aho_params)
        rho = DensityMatrix(matrix=random_density(rng, 4))
        executed = execute_program(program, rho, aho_params)
        assert max_entry_norm(executed.matrix - u @ rho.matrix @ u.conj().T) < 1e-12

    def test_execute_dimension(self, qho_params):
        """Test a one-spin state is refused"""
        with pytest.raises(ValueError):
            execute_program(PulseProgram(), DensityMatrix(matrix=np.eye(2) / 2), qho_params)


class TestTextForm:
    """Test angle and program text"""

    def test_parse_angle(self):
        """Test fractions and multiples of pi"""
        assert parse_angle("-5pi/6") == -5 * math.pi / 6
        assert parse_angle("pi/4") == math.pi / 4
        assert parse_angle("2pi") == 2 * math.pi
        assert parse_angle("-2/9") == -2 / 9
        assert parse_angle("0.3") == 0.3

    def test_parse_angle_rejects(self):
        """Test junk and zero denominators"""
        for text in ("abc", "", "-", "pi/0", "/3"):
            with pytest.raises(ValueError):
                parse_angle(text)

    def test_format_angle(self):
        """Test pi multiples print as fractions, other values as floats"""
        assert format_angle(math.pi) == "pi"
        assert format_angle(-5 * math.pi / 6) == "-5pi/6"
        assert format_angle(3 * math.pi / 4) == "3pi/4"
        assert format_angle(0.0) == "0"
        assert format_angle(0.3) == "0.3"

    def test_format_program(self, qho_params):
        """Test one event per line with 1-based spins"""
        lines = format_program(qho_program(1.0, qho_params)).splitlines()
        assert lines[0] == "pulse y 1+2 pi"
        assert lines[1].startswith("delay ")
        assert format_program(pseudopure_prep_program(qho_params)).splitlines()[-1] == "grad"

    def test_reparse_keeps_propagator(self, aho_params, aho_spec, aho_drive):
        """Test format then parse rebuilds the same program"""
        program = aho_program(5.0, aho_params, aho_spec, aho_drive)
        reparsed = parse_program(format_program(program))
        assert max_entry_norm(compile_program(reparsed, aho_params) - compile_program(program, aho_params)) < 1e-15

    def test_parse_comments_and_blanks(self):
        """Test comments and blank lines are skipped"""
        program = parse_program("# prep\n\npulse -x 2 pi/2  # read\ndelay 0.5\ngrad\n")
        assert program.events[0] == PulseEvent(flip_angle=math.pi / 2, axis=PhaseAxis.MINUS_X, targets=(1,))
        assert program.events[1] == DelayEvent(duration=0.5)
        assert program.has_gradient

    def test_parse_errors(self):
        """Test bad axes, spins, delays and unknown events name the line"""
        for text in ("pulse q 1 pi", "pulse y 0 pi", "delay -1", "delay soon", "twist 1"):
            with pytest.raises(ValueError, match="line 1"):
                parse_program(text)
