"""Pulse sequences: pseudopure preparation and the harmonic and driven anharmonic V_T programs.

Programs run in the negative precession sense (SpinSystemParams.precession_sense = -1). Tensor
slot 0 holds the proton whose line lies Delta-nu above the other; the harmonic run puts the
receiver on slot 1 and every anharmonic pulse targets slot 1.
"""

import logging
import math
import re
from fractions import Fraction
from typing import List, Optional, Union

import numpy as np

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
    SpinSystemParams,
    TimingSolution,
)
from app.spin_system import apply_pulse, delay_propagator, evolve_delay, gradient_crush, rotation_operator

logger = logging.getLogger(__name__)

BOTH = (0, 1)
DRIVEN_SLOT = 1
AHO_MU = -2 / 9
AHO_RABI_RATIO = -2 / 9
REGIME_TOLERANCE = 1e-12
RESONANCE_TOLERANCE = 1e-9


def two_proton_system(
    kind: SequenceKind,
    j_hz: float = 5.7,
    delta_nu_hz: float = 226.0,
    t1: Optional[float] = None,
    t2: Optional[float] = None,
    precession_sense: int = -1,
) -> SpinSystemParams:
    """Two-proton processor with the receiver placed for the given sequence.

    Harmonic runs sit on slot 1's line; anharmonic runs sit J/2 below it.
    """
    receiver = -math.pi * j_hz if kind == SequenceKind.AHO else 0.0
    return SpinSystemParams(
        n_spins=2,
        resonance_frequencies=[2 * math.pi * delta_nu_hz, 0.0],
        receiver_frequency=receiver,
        j_couplings=[[0.0, j_hz], [j_hz, 0.0]],
        t1=t1,
        t2=t2,
        precession_sense=precession_sense,
    )


def _require_two_spins(params: SpinSystemParams) -> None:
    if params.n_spins != 2:
        raise ValueError(f"sequence is defined for two spins, got {params.n_spins}")


def pseudopure_prep_program(params: SpinSystemParams) -> PulseProgram:
    """[pi/4]_x - [1/4J] - [pi]_y - [1/4J] - [-5pi/6]_y - [G], all pulses on both spins"""
    _require_two_spins(params)
    j = params.coupling(0, 1)
    if j <= 0:
        raise ValueError(f"preparation needs a positive J coupling, got J={j} Hz")
    delay = 1 / (4 * j)
    events = (
        PulseEvent(flip_angle=math.pi / 4, axis=PhaseAxis.X, targets=BOTH),
        DelayEvent(duration=delay),
        PulseEvent(flip_angle=math.pi, axis=PhaseAxis.Y, targets=BOTH),
        DelayEvent(duration=delay),
        PulseEvent(flip_angle=-5 * math.pi / 6, axis=PhaseAxis.Y, targets=BOTH),
        GradientEvent(),
    )
    return PulseProgram(events=events, label="pseudopure")


def qho_timing(omega_t: float, params: SpinSystemParams) -> TimingSolution:
    """tau1 = OmegaT[1/(pi J) - 2/delta], tau2 = 2 OmegaT/delta with delta the line separation in rad/s"""
    _require_two_spins(params)
    j = params.coupling(0, 1)
    delta = params.resonance_frequencies[0] - params.resonance_frequencies[1]
    if j == 0:
        raise ValueError("harmonic timing needs a nonzero J coupling")
    if delta == 0:
        raise ValueError("harmonic timing needs distinct resonance frequencies")
    if omega_t < 0:
        raise ValueError(f"OmegaT must be non-negative, got {omega_t}")
    tau1 = omega_t * (1 / (math.pi * j) - 2 / delta)
    tau2 = 2 * omega_t / delta
    if tau1 < 0 or tau2 < 0:
        raise ValueError(
            f"negative delay for J={j} Hz, delta={delta:.6g} rad/s: tau1={tau1:.6g}, tau2={tau2:.6g}"
        )
    return TimingSolution(tau1=tau1, tau2=tau2)


def qho_program(omega_t: float, params: SpinSystemParams) -> PulseProgram:
    """[pi]_y - [tau1/2] - [pi]_y - [tau1/2 + tau2], pulses on both spins"""
    if abs(params.offset(1)) > RESONANCE_TOLERANCE:
        raise ValueError(f"harmonic sequence needs the receiver on spin 2, offset is {params.offset(1):.6g} rad/s")
    timing = qho_timing(omega_t, params)
    events = (
        PulseEvent(flip_angle=math.pi, axis=PhaseAxis.Y, targets=BOTH),
        DelayEvent(duration=timing.tau1 / 2),
        PulseEvent(flip_angle=math.pi, axis=PhaseAxis.Y, targets=BOTH),
        DelayEvent(duration=timing.tau1 / 2 + timing.tau2),
    )
    return PulseProgram(events=events, omega_t=omega_t, label="qho")


def check_aho_regime(spec: OscillatorSpec, drive: DriveSpec) -> None:
    ratio = drive.rabi_frequency / spec.omega
    if abs(spec.mu - AHO_MU) > REGIME_TOLERANCE or abs(ratio - AHO_RABI_RATIO) > REGIME_TOLERANCE:
        raise ValueError(
            f"anharmonic timing is specialised to mu=-2/9 and Omega_R=-2/9 Omega, "
            f"got mu={spec.mu:.6g}, Omega_R/Omega={ratio:.6g}"
        )
    if drive.level_m != 0:
        raise ValueError(f"anharmonic sequence drives the 0-1 transition, got m={drive.level_m}")


def aho_timing(omega_t: float, params: SpinSystemParams, spec: OscillatorSpec, drive: DriveSpec) -> TimingSolution:
    """tau2 = sqrt(2) OmegaT/(9 pi J); tau1 = (2 pi m + 2 OmegaT/9)/Delta - tau2 with the smallest m >= 0

    Delta is the rotating-frame offset of tensor slot 0, the proton the pulses leave alone.
    Delta (tau1 + tau2) = 2 OmegaT/9 (mod 2 pi) locks the relative phase of the two blocks
    conditioned on slot 0.
    """
    _require_two_spins(params)
    check_aho_regime(spec, drive)
    j = params.coupling(0, 1)
    offset = params.offset(0)
    if j <= 0:
        raise ValueError(f"anharmonic timing needs a positive J coupling, got J={j} Hz")
    if offset <= 0:
        raise ValueError(f"anharmonic timing needs a positive slot-0 offset, got {offset:.6g} rad/s")
    if omega_t < 0:
        raise ValueError(f"OmegaT must be non-negative, got {omega_t}")

    tau2 = math.sqrt(2) * omega_t / (9 * math.pi * j)
    block_phase = 2 * omega_t / 9
    m = max(0, math.ceil((offset * tau2 - block_phase) / (2 * math.pi)))
    tau1 = max(0.0, (2 * math.pi * m + block_phase) / offset - tau2)
    logger.debug(f"aho timing at OmegaT={omega_t:.6g}: m={m}, tau1={tau1:.6g}, tau2={tau2:.6g}")
    return TimingSolution(tau1=tau1, tau2=tau2, m_integer=m)


def aho_program(omega_t: float, params: SpinSystemParams, spec: OscillatorSpec, drive: DriveSpec) -> PulseProgram:
    """[tau1/2] - [pi]_y - [tau1/2] - [3pi/4]_y - [tau2] - [pi/4]_y, pulses on spin 2"""
    if abs(params.offset(1) - math.pi * params.coupling(0, 1)) > RESONANCE_TOLERANCE:
        raise ValueError(
            f"anharmonic sequence needs the receiver J/2 below spin 2, offset is {params.offset(1):.6g} rad/s"
        )
    timing = aho_timing(omega_t, params, spec, drive)
    target = (DRIVEN_SLOT,)
    events = (
        DelayEvent(duration=timing.tau1 / 2),
        PulseEvent(flip_angle=math.pi, axis=PhaseAxis.Y, targets=target),
        DelayEvent(duration=timing.tau1 / 2),
        PulseEvent(flip_angle=3 * math.pi / 4, axis=PhaseAxis.Y, targets=target),
        DelayEvent(duration=timing.tau2),
        PulseEvent(flip_angle=math.pi / 4, axis=PhaseAxis.Y, targets=target),
    )
    return PulseProgram(events=events, omega_t=omega_t, label="aho")


def concatenate(first: PulseProgram, second: PulseProgram) -> PulseProgram:
    """first then second"""
    return PulseProgram(
        events=first.events + second.events,
        omega_t=first.omega_t + second.omega_t,
        label="+".join(label for label in (first.label, second.label) if label),
    )


def program_duration(p: PulseProgram) -> float:
    """Physical duration t_phys: pulses take no time"""
    return sum(e.duration for e in p.events if isinstance(e, DelayEvent))


def compile_program(p: PulseProgram, params: SpinSystemParams) -> np.ndarray:
    """Net propagator, later events multiplying on the left"""
    u = np.eye(2**params.n_spins, dtype=complex)
    for event in p.events:
        match event:
            case PulseEvent():
                u = rotation_operator(event, params.n_spins) @ u
            case DelayEvent():
                u = delay_propagator(params, event.duration) @ u
            case GradientEvent():
                raise TypeError(f"program {p.label!r} contains a gradient, run it with execute_program")
    return u


def execute_program(
    p: PulseProgram, state: DensityMatrix, params: SpinSystemParams, relaxation: bool = False
) -> DensityMatrix:
    if state.dim != 2**params.n_spins:
        raise ValueError(f"state of dimension {state.dim} does not fit {params.n_spins} spins")
    for event in p.events:
        match event:
            case PulseEvent():
                state = apply_pulse(state, event)
            case DelayEvent():
                state = evolve_delay(state, event.duration, params, relaxation)
            case GradientEvent():
                state = gradient_crush(state)
    return state


# Text form
ANGLE_PATTERN = re.compile(r"^(?P<coef>[+-]?(\d+(\.\d*)?|\.\d+)?)(?P<pi>pi)?(/(?P<den>\d+))?$")


def parse_angle(text: str) -> float:
    """Number with optional pi factor and denominator: '-5pi/6', 'pi/4', '2pi', '-2/9', '0.3'"""
    cleaned = text.strip().replace(" ", "").replace("*", "")
    match_ = ANGLE_PATTERN.match(cleaned)
    if match_ is None or cleaned in ("", "+", "-"):
        raise ValueError(f"cannot parse number {text!r}")
    coef_text = match_.group("coef")
    if coef_text in ("", "+", "-"):
        if match_.group("pi") is None:
            raise ValueError(f"cannot parse number {text!r}")
        coef = -1.0 if coef_text == "-" else 1.0
    else:
        coef = float(coef_text)
    value = coef * (math.pi if match_.group("pi") else 1.0)
    if match_.group("den"):
        denominator = int(match_.group("den"))
        if denominator == 0:
            raise ValueError(f"zero denominator in {text!r}")
        value /= denominator
    return value


def format_angle(angle: float) -> str:
    ratio = Fraction(angle / math.pi).limit_denominator(64)
    if abs(float(ratio) * math.pi - angle) > 1e-12:
        return repr(angle)
    if ratio == 0:
        return "0"
    sign = "-" if ratio < 0 else ""
    numerator = abs(ratio.numerator)
    head = "pi" if numerator == 1 else f"{numerator}pi"
    return f"{sign}{head}" if ratio.denominator == 1 else f"{sign}{head}/{ratio.denominator}"


def format_program(p: PulseProgram) -> str:
    """One event per line: 'pulse y 1+2 pi', 'delay 0.02723', 'grad'"""
    lines: List[str] = []
    for event in p.events:
        match event:
            case PulseEvent():
                targets = "+".join(str(t + 1) for t in event.targets)
                lines.append(f"pulse {event.axis.value} {targets} {format_angle(event.flip_angle)}")
            case DelayEvent():
                lines.append(f"delay {event.duration!r}")
            case GradientEvent():
                lines.append("grad")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_program(text: str, label: str = "", omega_t: float = 0.0) -> PulseProgram:
    events: List[Union[PulseEvent, DelayEvent, GradientEvent]] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        match tokens:
            case ["pulse", axis, targets, angle]:
                try:
                    spins = tuple(int(t) - 1 for t in targets.split("+"))
                    events.append(PulseEvent(flip_angle=parse_angle(angle), axis=PhaseAxis(axis), targets=spins))
                except ValueError as e:
                    logger.error(f"Bad pulse on line {number}: {raw!r}")
                    raise ValueError(f"line {number}: {e}") from e
            case ["delay", duration]:
                try:
                    events.append(DelayEvent(duration=float(duration)))
                except ValueError as e:
                    logger.error(f"Bad delay on line {number}: {raw!r}")
                    raise ValueError(f"line {number}: {e}") from e
            case ["grad"]:
                events.append(GradientEvent())
            case _:
                raise ValueError(f"line {number}: unrecognised event {raw.strip()!r}")
    return PulseProgram(events=tuple(events), label=label, omega_t=omega_t)
