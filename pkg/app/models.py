from enum import Enum
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from pydantic import Field as PydanticField
from sqlmodel import Field, SQLModel


class PhaseAxis(str, Enum):
    """Rotation axis of a hard pulse in the rotating frame"""

    X = "x"
    MINUS_X = "-x"
    Y = "y"
    MINUS_Y = "-y"


class EncodingKind(str, Enum):
    """Level to spin-state map"""

    GRAY = "gray"
    BINARY = "binary"
    IDENTITY = "identity"


class SequenceKind(str, Enum):
    """How the simulated propagator V_T is realised for an experiment"""

    QHO = "qho"
    AHO = "aho"
    IDEAL = "ideal"


class Preparation(str, Enum):
    """Initial state preparation"""

    IDEAL = "ideal"
    PULSE_SEQUENCE = "pulse_sequence"


# Flat records
class SpinSystemParams(SQLModel, table=False):
    """Physical constants of the spin processor, angular frequencies in rad/s, couplings in Hz"""

    n_spins: int = Field(ge=1, le=6)
    resonance_frequencies: List[float]
    receiver_frequency: float = Field(default=0.0)
    j_couplings: List[List[float]]
    t1: Optional[float] = Field(default=None, gt=0)
    t2: Optional[float] = Field(default=None, gt=0)
    precession_sense: int = Field(default=-1)

    @model_validator(mode="after")
    def check_consistency(self) -> "SpinSystemParams":
        if len(self.resonance_frequencies) != self.n_spins:
            raise ValueError(
                f"expected {self.n_spins} resonance frequencies, got {len(self.resonance_frequencies)}"
            )
        j = np.asarray(self.j_couplings, dtype=float)
        if j.shape != (self.n_spins, self.n_spins):
            raise ValueError(f"j_couplings must be {self.n_spins}x{self.n_spins}, got shape {j.shape}")
        if not np.array_equal(j, j.T):
            raise ValueError("j_couplings must be symmetric")
        if np.any(np.diag(j) != 0):
            raise ValueError("j_couplings must have a zero diagonal")
        # inf switches a channel off and takes no part in the bound
        if self.t1 is not None and self.t2 is not None and np.isfinite(self.t2) and self.t2 > 2 * self.t1:
            raise ValueError(f"T2={self.t2} exceeds 2*T1={2 * self.t1}")
        if self.precession_sense not in (1, -1):
            raise ValueError(f"precession_sense must be +1 or -1, got {self.precession_sense}")
        return self

    def offset(self, spin: int) -> float:
        """Rotating-frame offset of one spin in rad/s"""
        return self.resonance_frequencies[spin] - self.receiver_frequency

    def coupling(self, a: int, b: int) -> float:
        return self.j_couplings[a][b]


class OscillatorSpec(SQLModel, table=False):
    """Truncated oscillator: level count, frequency (rad/s) and anharmonicity"""

    levels: int = Field(ge=2)
    omega: float = Field(default=2 * np.pi)
    mu: float = Field(default=0.0)

    @model_validator(mode="after")
    def check_levels(self) -> "OscillatorSpec":
        if self.levels & (self.levels - 1):
            raise ValueError(f"levels must be a power of two, got {self.levels}")
        if self.omega == 0:
            raise ValueError("oscillator frequency must be nonzero")
        return self

    @property
    def n_spins(self) -> int:
        return self.levels.bit_length() - 1


class Encoding(SQLModel, table=False):
    """Bijection from oscillator level n to spin basis index permutation[n]"""

    kind: EncodingKind
    n_spins: int = Field(ge=1, le=6)
    permutation: List[int]

    @model_validator(mode="after")
    def check_bijection(self) -> "Encoding":
        size = 2**self.n_spins
        if sorted(self.permutation) != list(range(size)):
            raise ValueError(f"{self.kind.value} encoding is not a bijection on {size} states")
        return self

    @property
    def dim(self) -> int:
        return 2**self.n_spins

    def matrix(self) -> np.ndarray:
        """Permutation matrix P with P|n> = |phi(n)>"""
        p = np.zeros((self.dim, self.dim))
        p[self.permutation, np.arange(self.dim)] = 1.0
        return p

    def spin_index(self, level: int) -> int:
        return self.permutation[level]

    def level_of(self, index: int) -> int:
        return self.permutation.index(index)


class DriveSpec(SQLModel, table=False):
    """Selective drive between levels m and m+1"""

    level_m: int = Field(default=0, ge=0)
    rabi_frequency: float = Field(default=0.0)


class TimingSolution(SQLModel, table=False):
    """Delays of a V_T sequence in seconds"""

    tau1: float = Field(ge=0)
    tau2: float = Field(ge=0)
    m_integer: Optional[int] = Field(default=None)


class DistanceResult(SQLModel, table=False):
    """Phase-invariant distance between two propagators"""

    value: float = Field(ge=0)
    phase: float
    used_grid_search: bool = Field(default=False)


class FrequencyBin(SQLModel, table=False):
    frequency: float
    fraction: float = Field(ge=0, le=1)


class LineSpectrum(SQLModel, table=False):
    """Spectral content of one readout line"""

    line: str
    total_power: float = Field(ge=0)
    dc_fraction: float = Field(ge=0, le=1)
    non_dc_fraction: float = Field(ge=0, le=1)
    # bin fractions are shares of the non-DC power
    bins: List[FrequencyBin] = Field(default_factory=list)

    def fraction_at(self, frequency: float, tolerance: float) -> float:
        """Share of non-DC power in reported bins within tolerance of frequency"""
        return sum(b.fraction for b in self.bins if abs(b.frequency - frequency) <= tolerance)

    @property
    def dominant_frequency(self) -> Optional[float]:
        if not self.bins:
            return None
        return max(self.bins, key=lambda b: b.fraction).frequency


class FrequencyReport(SQLModel, table=False):
    """Per-line discrete spectra with DC reported separately"""

    resolution: float = Field(gt=0)
    lines: List[LineSpectrum] = Field(default_factory=list)

    def line(self, name: str) -> LineSpectrum:
        for spectrum in self.lines:
            if spectrum.line == name:
                return spectrum
        raise KeyError(f"no spectrum for line {name}")


class EnvelopeFit(SQLModel, table=False):
    """Damped-oscillation fit: offset + amplitude*exp(-rate*t)*cos(frequency*T + phase)"""

    rate: float
    amplitude: float = Field(ge=0)
    frequency: float
    offset: float
    residual: float = Field(ge=0)


class CheckResult(SQLModel, table=False):
    """Outcome of a single tolerance check"""

    criterion: int = Field(ge=0)
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = Field(default="")


class OracleComparison(SQLModel, table=False):
    """Worst-case phase-invariant distance of the realised V_T over the T grid"""

    oracle: str
    max_distance: float = Field(ge=0)
    tolerance: float = Field(gt=0)
    points: int = Field(ge=0)
    reference_oracle: Optional[str] = Field(default=None)
    reference_distance: Optional[float] = Field(default=None)

    @property
    def passed(self) -> bool:
        return self.max_distance < self.tolerance


# Array-backed values
class DensityMatrix(BaseModel):
    """Density matrix of the spin system or the simulated oscillator; deviation matrices skip the trace rule"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray
    is_deviation: bool = False

    @model_validator(mode="after")
    def check_matrix(self) -> "DensityMatrix":
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        hermitian_error = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
        if hermitian_error > 1e-10:
            raise ValueError(f"density matrix not Hermitian, max |rho - rho^H| = {hermitian_error:.3e}")
        if not self.is_deviation and abs(np.trace(m) - 1) > 1e-10:
            raise ValueError(f"normalized density matrix has trace {np.trace(m).real:.12f}")
        return self

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_spins(self) -> int:
        return self.dim.bit_length() - 1

    def evolved(self, matrix: np.ndarray) -> "DensityMatrix":
        """Same flavour of state with a new matrix"""
        return DensityMatrix(matrix=matrix, is_deviation=self.is_deviation)

    @classmethod
    def from_state(cls, state: "StateVector") -> "DensityMatrix":
        psi = state.amplitudes
        return cls(matrix=np.outer(psi, psi.conj()))


class StateVector(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    amplitudes: np.ndarray

    @model_validator(mode="after")
    def check_norm(self) -> "StateVector":
        norm = float(np.linalg.norm(self.amplitudes))
        if abs(norm - 1) > 1e-12:
            raise ValueError(f"state vector norm is {norm}, normalize it first")
        return self

    @classmethod
    def normalized(cls, amplitudes: np.ndarray) -> "StateVector":
        psi = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise ValueError("cannot normalize a zero state vector")
        return cls(amplitudes=psi / norm)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]


# Program events
class PulseEvent(BaseModel):
    """Ideal hard pulse [flip_angle]_axis on the target spins (0-based tensor slots)"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["pulse"] = "pulse"
    flip_angle: float
    axis: PhaseAxis
    targets: Tuple[int, ...]

    @model_validator(mode="after")
    def check_targets(self) -> "PulseEvent":
        if not self.targets:
            raise ValueError("pulse needs at least one target spin")
        if any(t < 0 for t in self.targets) or len(set(self.targets)) != len(self.targets):
            raise ValueError(f"invalid pulse targets {self.targets}")
        return self


class DelayEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["delay"] = "delay"
    duration: float = PydanticField(ge=0)


class GradientEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["gradient"] = "gradient"


ProgramEvent = Annotated[Union[PulseEvent, DelayEvent, GradientEvent], PydanticField(discriminator="kind")]


class PulseProgram(BaseModel):
    """Ordered pulse/delay/gradient events, left to right in time"""

    model_config = ConfigDict(frozen=True)

    events: Tuple[ProgramEvent, ...] = ()
    omega_t: float = 0.0
    label: str = ""

    @model_validator(mode="after")
    def check_gradients(self) -> "PulseProgram":
        gradients = sum(1 for e in self.events if isinstance(e, GradientEvent))
        if gradients > 1:
            raise ValueError(f"program {self.label!r} has {gradients} gradients, at most one allowed")
        return self

    @property
    def has_gradient(self) -> bool:
        return any(isinstance(e, GradientEvent) for e in self.events)


# Readout values
class PeakSet(BaseModel):
    """Complex single-quantum line amplitudes keyed by line label"""

    model_config = ConfigDict(frozen=True)

    amplitudes: Dict[str, complex]

    def __getitem__(self, line: str) -> complex:
        return self.amplitudes[line]

    @property
    def labels(self) -> List[str]:
        return list(self.amplitudes.keys())


class PeakSeries(BaseModel):
    """Peak amplitudes and level populations sampled over simulated time T"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t_grid: np.ndarray
    t_phys: np.ndarray
    lines: Dict[str, np.ndarray]
    populations: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def check_grid(self) -> "PeakSeries":
        t = self.t_grid
        if t.ndim != 1 or t.size < 2:
            raise ValueError("T grid needs at least two points")
        steps = np.diff(t)
        if np.any(steps <= 0):
            raise ValueError("T grid must be strictly increasing")
        if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, abs(steps[0])):
            raise ValueError("T grid must be uniform")
        if self.t_phys.shape != t.shape:
            raise ValueError("t_phys must have one entry per T point")
        for name, values in self.lines.items():
            if values.shape != t.shape:
                raise ValueError(f"line {name} has {values.shape[0]} samples for {t.size} T points")
        if self.populations is not None and self.populations.shape[0] != t.size:
            raise ValueError("populations must have one row per T point")
        return self

    @property
    def step(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])
