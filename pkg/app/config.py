"""Experiment configuration: sectioned key = value text validated field by field.

Unknown sections and keys are rejected. Numbers accept fractions and multiples of pi
('-2/9', 'pi/16', '2pi'); 'inf' disables a relaxation channel.
"""

import configparser
import logging
import math
import os
from pathlib import Path
from typing import Annotated, Any, List, Optional

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, model_validator

from app.encoding import encoding_for
from app.models import (
    DriveSpec,
    Encoding,
    EncodingKind,
    OscillatorSpec,
    Preparation,
    PulseEvent,
    SequenceKind,
    SpinSystemParams,
)
from app.pulse_programs import aho_timing, check_aho_regime, two_proton_system, parse_angle, parse_program, qho_timing

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "configs"
DEFAULT_OUTPUT_DIR = "output"


def _to_float(value: Any) -> Any:
    if not isinstance(value, str):
        return value
    try:
        return float(value)
    except ValueError:
        logger.debug(f"{value!r} is not a plain float, reading it as a fraction or multiple of pi")
        return parse_angle(value)


def _to_complex(token: str) -> complex:
    cleaned = token.strip().replace(" ", "").replace("i", "j")
    if cleaned in ("j", "+j", "-j"):
        cleaned = cleaned.replace("j", "1j")
    try:
        return complex(cleaned)
    except ValueError as e:
        logger.error(f"Bad amplitude {token!r}")
        raise ValueError(f"cannot parse amplitude {token!r}") from e


def _to_amplitudes(value: Any) -> Any:
    if isinstance(value, str):
        return [_to_complex(token) for token in value.split(",") if token.strip()]
    return value


Number = Annotated[float, BeforeValidator(_to_float)]
Amplitudes = Annotated[List[complex], BeforeValidator(_to_amplitudes)]


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExperimentSection(Section):
    name: str = "experiment"
    description: str = ""
    sequence: SequenceKind = SequenceKind.QHO
    encoding: EncodingKind = EncodingKind.GRAY
    preparation: Preparation = Preparation.IDEAL
    initial_state: Amplitudes = Field(default_factory=lambda: [1, 0, 0, 0])
    read_pulse: str = ""
    max_workers: int = Field(default=1, ge=1)


class SystemSection(Section):
    n_spins: int = Field(default=2, ge=1, le=6)
    j_hz: Number = 5.7
    delta_nu_hz: Number = 226.0
    precession_sense: int = -1


class OscillatorSection(Section):
    omega: Number = 2 * math.pi
    mu: Number = 0.0
    drive_level: int = Field(default=0, ge=0)
    rabi_ratio: Number = 0.0


class GridSection(Section):
    """Grid in the dimensionless OmegaT"""

    start: Number = Field(default=0.0, ge=0)
    step: Number = Field(default=2 * math.pi / 32, gt=0)
    count: int = Field(default=64, ge=2)


class RelaxationSection(Section):
    enabled: bool = False
    t1: Optional[Number] = None
    t2: Optional[Number] = None


class OutputSection(Section):
    directory: str = DEFAULT_OUTPUT_DIR


class ExperimentConfig(BaseModel):
    """One experiment: system, oscillator, initial state, readout and T grid"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    system: SystemSection = Field(default_factory=SystemSection)
    oscillator: OscillatorSection = Field(default_factory=OscillatorSection)
    grid: GridSection = Field(default_factory=GridSection)
    relaxation: RelaxationSection = Field(default_factory=RelaxationSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def check_experiment(self) -> "ExperimentConfig":
        levels = 2**self.system.n_spins
        amplitudes = self.experiment.initial_state
        if len(amplitudes) != levels:
            raise ValueError(f"initial_state has {len(amplitudes)} amplitudes, {levels} levels expected")
        if not any(abs(a) > 0 for a in amplitudes):
            raise ValueError("initial_state is not normalizable")
        if self.relaxation.enabled and self.relaxation.t1 is None and self.relaxation.t2 is None:
            raise ValueError("relaxation enabled but neither t1 nor t2 is set")

        sequence = self.experiment.sequence
        if sequence != SequenceKind.IDEAL:
            if self.system.n_spins != 2:
                raise ValueError(f"{sequence.value} sequence runs on two spins, got n_spins={self.system.n_spins}")
            if self.experiment.encoding != EncodingKind.GRAY:
                raise ValueError(f"{sequence.value} sequence realises the gray-coded oscillator only")
        elif self.experiment.encoding == EncodingKind.IDENTITY:
            raise ValueError("ideal runs need a gray or binary encoding")
        elif self.relaxation.enabled:
            raise ValueError("ideal runs have no delays to relax in")
        if self.experiment.preparation == Preparation.PULSE_SEQUENCE:
            if self.system.n_spins != 2 or any(abs(a) > 0 for a in amplitudes[1:]):
                raise ValueError("pulse-sequence preparation yields level 0 on two spins only")
        if self.experiment.read_pulse:
            self.read_pulse()

        params = self.spin_params()
        first_point = max(self.grid.start, self.grid.step)
        match sequence:
            case SequenceKind.QHO:
                if self.oscillator.mu != 0 or self.oscillator.rabi_ratio != 0:
                    raise ValueError(
                        "qho sequence simulates the undriven harmonic oscillator, set mu and rabi_ratio to 0"
                    )
                qho_timing(first_point, params)
            case SequenceKind.AHO:
                check_aho_regime(self.oscillator_spec(), self.drive_spec())
                aho_timing(first_point, params, self.oscillator_spec(), self.drive_spec())
            case SequenceKind.IDEAL:
                if self.experiment.encoding == EncodingKind.GRAY and self.system.n_spins > 2:
                    raise ValueError("ideal runs use closed forms that exist for gray coding on two spins only")
                if self.oscillator.mu != 0 or self.oscillator.rabi_ratio != 0:
                    raise ValueError("ideal runs use the harmonic closed forms, set mu and rabi_ratio to 0")
        return self

    def spin_params(self) -> SpinSystemParams:
        t1 = self.relaxation.t1 if self.relaxation.enabled else None
        t2 = self.relaxation.t2 if self.relaxation.enabled else None
        if self.system.n_spins != 2:
            n = self.system.n_spins
            return SpinSystemParams(
                n_spins=n,
                resonance_frequencies=[0.0] * n,
                j_couplings=[[0.0] * n for _ in range(n)],
                t1=t1,
                t2=t2,
                precession_sense=self.system.precession_sense,
            )
        return two_proton_system(
            self.experiment.sequence,
            j_hz=self.system.j_hz,
            delta_nu_hz=self.system.delta_nu_hz,
            t1=t1,
            t2=t2,
            precession_sense=self.system.precession_sense,
        )

    def oscillator_spec(self) -> OscillatorSpec:
        return OscillatorSpec(levels=2**self.system.n_spins, omega=self.oscillator.omega, mu=self.oscillator.mu)

    def drive_spec(self) -> DriveSpec:
        return DriveSpec(
            level_m=self.oscillator.drive_level, rabi_frequency=self.oscillator.rabi_ratio * self.oscillator.omega
        )

    def encoding(self) -> Encoding:
        return encoding_for(self.experiment.encoding, self.system.n_spins)

    def read_pulse(self) -> Optional[PulseEvent]:
        """Read pulse written as '<axis> <spins> <angle>', e.g. 'y 2 pi/2'"""
        if not self.experiment.read_pulse:
            return None
        program = parse_program(f"pulse {self.experiment.read_pulse}")
        pulse = program.events[0]
        if not isinstance(pulse, PulseEvent) or max(pulse.targets) >= self.system.n_spins:
            raise ValueError(f"read pulse {self.experiment.read_pulse!r} does not fit {self.system.n_spins} spins")
        return pulse

    def omega_t_grid(self) -> np.ndarray:
        return self.grid.start + self.grid.step * np.arange(self.grid.count)

    def t_grid(self) -> np.ndarray:
        """Simulated times T in seconds"""
        return self.omega_t_grid() / self.oscillator.omega

    def output_dir(self) -> Path:
        return Path(os.environ.get("APP_OUTPUT_DIR", self.output.directory))


def parse_config(text: str) -> ExperimentConfig:
    """Sectioned key = value text to a validated ExperimentConfig, defaults for anything left out"""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # type: ignore[assignment]
    try:
        parser.read_string(text)
    except configparser.Error as e:
        logger.error(f"Malformed config: {e}")
        raise ValueError(f"malformed config: {e}") from e

    known = set(ExperimentConfig.model_fields.keys())
    unknown = [name for name in parser.sections() if name not in known]
    if unknown:
        raise ValueError(f"unknown config sections: {', '.join(unknown)}")

    raw = {name: dict(parser.items(name)) for name in parser.sections()}
    return ExperimentConfig.model_validate(raw)


def load_config(path: Path) -> ExperimentConfig:
    logger.info(f"Loading experiment config {path}")
    return parse_config(path.read_text())


def shipped_configs() -> List[Path]:
    return sorted(CONFIG_DIR.glob("*.ini"))


def shipped_config(name: str) -> Path:
    path = CONFIG_DIR / f"{name}.ini"
    if not path.exists():
        raise ValueError(f"no shipped experiment named {name!r}")
    return path
