import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from io import StringIO
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from sqlmodel import Field, SQLModel

from app.config import ExperimentConfig
from app.encoding import (
    coupling_free_closed_form,
    pullback_operator,
    pullback_oracle,
    pushforward_state,
    qho_closed_form,
    realised_driven_aho_form,
)
from app.linalg import expm_hermitian_generator, phase_invariant_distance
from app.models import (
    CheckResult,
    DensityMatrix,
    EncodingKind,
    FrequencyReport,
    OracleComparison,
    PeakSeries,
    PeakSet,
    Preparation,
    PulseProgram,
    SequenceKind,
    StateVector,
)
from app.oscillator import driven_hamiltonian, exact_propagator, generalized_rabi_frequency, qho_hamiltonian
from app.pulse_programs import (
    aho_program,
    compile_program,
    execute_program,
    format_program,
    program_duration,
    pseudopure_prep_program,
    qho_program,
)
from app.readout import apply_read_pulse, extract_peaks, frequency_content, level_populations
from app.spin_system import pseudopure_from_deviation, thermal_deviation

logger = logging.getLogger(__name__)

QHO_ORACLE_TOLERANCE = 1e-9
AHO_ORACLE_TOLERANCE = 1e-6
IDEAL_ORACLE_TOLERANCE = 1e-9
POPULATION_TOLERANCE = 1e-12
NO_OSCILLATION_THRESHOLD = 1e-6


class PointResult(SQLModel, table=False):
    """Readout at one T point"""

    omega_t: float
    t_phys: float = Field(ge=0)
    distance: float = Field(ge=0)
    reference_distance: Optional[float] = Field(default=None)
    peaks: Dict[str, complex]
    populations: List[float]


class ExperimentSummary(SQLModel, table=False):
    """Outcome of one run: written files and every tolerance check"""

    name: str
    points: int = Field(ge=0)
    files: List[str] = Field(default_factory=list)
    checks: List[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


class ExperimentService:
    """Prepare, evolve and read out an experiment over its T grid"""

    @staticmethod
    def initial_state(config: ExperimentConfig) -> DensityMatrix:
        """Spin-space density matrix at T = 0"""
        match config.experiment.preparation:
            case Preparation.PULSE_SEQUENCE:
                params = config.spin_params().model_copy(update={"t1": None, "t2": None})
                deviation = execute_program(pseudopure_prep_program(params), thermal_deviation(params), params)
                return pseudopure_from_deviation(deviation)
            case _:
                state = StateVector.normalized(np.array(config.experiment.initial_state, dtype=complex))
                pushed = pushforward_state(state, config.encoding())
                return DensityMatrix.from_state(pushed)  # type: ignore[arg-type]

    @staticmethod
    def program_at(config: ExperimentConfig, omega_t: float) -> Optional[PulseProgram]:
        params = config.spin_params()
        match config.experiment.sequence:
            case SequenceKind.QHO:
                return qho_program(omega_t, params)
            case SequenceKind.AHO:
                return aho_program(omega_t, params, config.oscillator_spec(), config.drive_spec())
            case _:
                return None

    @staticmethod
    def ideal_generator(config: ExperimentConfig) -> np.ndarray:
        """Closed-form average Hamiltonian used when no physical sequence is specified"""
        omega = config.oscillator.omega
        if config.experiment.encoding == EncodingKind.BINARY:
            return coupling_free_closed_form(config.system.n_spins, omega)
        return qho_closed_form(omega, config.system.n_spins)

    @staticmethod
    def oracles(config: ExperimentConfig, t: float) -> Tuple[str, np.ndarray, Optional[str], Optional[np.ndarray]]:
        """(label, oracle) the realised V_T must match, plus an informational reference oracle"""
        spec = config.oscillator_spec()
        encoding = config.encoding()
        match config.experiment.sequence:
            case SequenceKind.AHO:
                drive = config.drive_spec()
                generator = realised_driven_aho_form(spec.omega, spec.mu, drive.rabi_frequency)
                realised = expm_hermitian_generator(generator, t)
                reference = pullback_oracle(exact_propagator(driven_hamiltonian(spec, drive), t), encoding)
                return "realised driven closed form", realised, "driven AHO", reference
            case _:
                return "QHO", pullback_oracle(exact_propagator(qho_hamiltonian(spec), t), encoding), None, None

    @staticmethod
    def slowest_frequency(config: ExperimentConfig) -> float:
        """Lowest frequency the run should resolve: the level-m Rabi frequency when driven, Omega otherwise"""
        match config.experiment.sequence:
            case SequenceKind.AHO:
                spec, drive = config.oscillator_spec(), config.drive_spec()
                generator = realised_driven_aho_form(spec.omega, spec.mu, drive.rabi_frequency)
                return generalized_rabi_frequency(pullback_operator(generator, config.encoding()), drive.level_m)
            case _:
                return config.oscillator.omega

    @staticmethod
    def evaluate_point(config: ExperimentConfig, omega_t: float, rho0: DensityMatrix) -> PointResult:
        t = omega_t / config.oscillator.omega
        params = config.spin_params()
        program = ExperimentService.program_at(config, omega_t)
        if program is None:
            u = expm_hermitian_generator(ExperimentService.ideal_generator(config), t)
            rho = rho0.evolved(u @ rho0.matrix @ u.conj().T)
            t_phys = 0.0
        else:
            u = compile_program(program, params)
            rho = execute_program(program, rho0, params, config.relaxation.enabled)
            t_phys = program_duration(program)
            logger.debug(f"OmegaT={omega_t:.6g} program:\n{format_program(program)}")

        _, oracle, _, reference = ExperimentService.oracles(config, t)
        populations = level_populations(rho, config.encoding())
        peaks = extract_peaks(apply_read_pulse(rho, config.read_pulse()))
        return PointResult(
            omega_t=omega_t,
            t_phys=t_phys,
            distance=phase_invariant_distance(u, oracle).value,
            reference_distance=None if reference is None else phase_invariant_distance(u, reference).value,
            peaks=peaks.amplitudes,
            populations=[float(p) for p in populations],
        )

    @staticmethod
    def assemble_series(config: ExperimentConfig) -> Tuple[PeakSeries, OracleComparison]:
        """Run prepare -> V_T -> read at every grid point, in grid order whatever the worker count"""
        rho0 = ExperimentService.initial_state(config)
        omega_ts = [float(x) for x in config.omega_t_grid()]
        workers = config.experiment.max_workers
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                points = list(executor.map(lambda x: ExperimentService.evaluate_point(config, x, rho0), omega_ts))
        else:
            points = [ExperimentService.evaluate_point(config, x, rho0) for x in omega_ts]

        labels = PeakSet(amplitudes=points[0].peaks).labels
        series = PeakSeries(
            t_grid=config.t_grid(),
            t_phys=np.array([p.t_phys for p in points]),
            lines={label: np.array([p.peaks[label] for p in points], dtype=complex) for label in labels},
            populations=np.array([p.populations for p in points]),
        )
        oracle_label, _, reference_label, _ = ExperimentService.oracles(config, 0.0)
        references = [p.reference_distance for p in points if p.reference_distance is not None]
        comparison = OracleComparison(
            oracle=oracle_label,
            max_distance=max(p.distance for p in points),
            tolerance=ExperimentService.oracle_tolerance(config),
            points=len(points),
            reference_oracle=reference_label,
            reference_distance=max(references) if references else None,
        )
        logger.info(
            f"Assembled {len(points)} points for {config.experiment.name}: "
            f"max oracle distance {comparison.max_distance:.3e}"
        )
        return series, comparison

    @staticmethod
    def oracle_tolerance(config: ExperimentConfig) -> float:
        match config.experiment.sequence:
            case SequenceKind.AHO:
                return AHO_ORACLE_TOLERANCE
            case SequenceKind.QHO:
                return QHO_ORACLE_TOLERANCE
            case _:
                return IDEAL_ORACLE_TOLERANCE

    @staticmethod
    def series_checks(series: PeakSeries, comparison: OracleComparison) -> List[CheckResult]:
        """Invariant checks every run must pass"""
        checks = [
            CheckResult(
                criterion=0,
                name=f"oracle distance ({comparison.oracle})",
                passed=comparison.passed,
                measured=comparison.max_distance,
                threshold=comparison.tolerance,
            )
        ]
        if series.populations is not None:
            sums = np.abs(series.populations.sum(axis=1) - 1)
            bounds = np.maximum(-series.populations, series.populations - 1).max(initial=0.0)
            checks.append(
                CheckResult(
                    criterion=0,
                    name="populations sum to one",
                    passed=bool(sums.max() < POPULATION_TOLERANCE),
                    measured=float(sums.max()),
                    threshold=POPULATION_TOLERANCE,
                )
            )
            checks.append(
                CheckResult(
                    criterion=0,
                    name="populations within [0, 1]",
                    passed=bool(bounds <= POPULATION_TOLERANCE),
                    measured=float(max(bounds, 0.0)),
                    threshold=POPULATION_TOLERANCE,
                )
            )
        largest = max((float(np.max(np.abs(v))) for v in series.lines.values()), default=0.0)
        checks.append(
            CheckResult(
                criterion=0,
                name="peak amplitudes bounded by one",
                passed=largest <= 1 + POPULATION_TOLERANCE,
                measured=largest,
                threshold=1.0,
            )
        )
        return checks

    @staticmethod
    def run_experiment(config: ExperimentConfig, output_dir: Optional[Path] = None) -> ExperimentSummary:
        """Assemble the series and write its CSV, frequency report and oracle report"""
        series, comparison = ExperimentService.assemble_series(config)
        report = frequency_content(series, slowest_frequency=ExperimentService.slowest_frequency(config))
        directory = output_dir if output_dir is not None else config.output_dir()
        name = config.experiment.name

        files = [
            ExportService.write_atomic(directory / f"{name}_series.csv", ExportService.series_to_csv(series)),
            ExportService.write_atomic(directory / f"{name}_frequency.txt", ExportService.report_to_text(report)),
            ExportService.write_atomic(directory / f"{name}_oracle.txt", ExportService.oracle_to_text(comparison)),
        ]
        summary = ExperimentSummary(
            name=name,
            points=series.t_grid.size,
            files=[str(f) for f in files],
            checks=ExperimentService.series_checks(series, comparison),
        )
        logger.info(f"Experiment {name} {'passed' if summary.passed else 'FAILED'}, wrote {len(files)} files")
        return summary


class ExportService:
    """Deterministic text forms of series and reports"""

    @staticmethod
    def series_to_csv(series: PeakSeries) -> str:
        """Columns T, t_phys, <line>_re, <line>_im, <line>_abs per line, level<n> per level"""
        fieldnames = ["T", "t_phys"]
        for label in series.lines:
            fieldnames += [f"{label}_re", f"{label}_im", f"{label}_abs"]
        levels = 0 if series.populations is None else series.populations.shape[1]
        fieldnames += [f"level{n}" for n in range(levels)]

        output = StringIO()
        writer = csv.DictWriter(output, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for k, t in enumerate(series.t_grid):
            row = {"T": repr(float(t)), "t_phys": repr(float(series.t_phys[k]))}
            for label, values in series.lines.items():
                row[f"{label}_re"] = repr(float(values[k].real))
                row[f"{label}_im"] = repr(float(values[k].imag))
                row[f"{label}_abs"] = repr(float(abs(values[k])))
            for n in range(levels):
                row[f"level{n}"] = repr(float(series.populations[k, n]))  # type: ignore[index]
            writer.writerow(row)
        return output.getvalue()

    @staticmethod
    def report_to_text(report: FrequencyReport) -> str:
        lines = [f"resolution: {report.resolution!r}"]
        for spectrum in report.lines:
            prefix = spectrum.line
            lines.append(f"{prefix}.dc_fraction: {spectrum.dc_fraction!r}")
            lines.append(f"{prefix}.non_dc_fraction: {spectrum.non_dc_fraction!r}")
            oscillating = spectrum.non_dc_fraction >= NO_OSCILLATION_THRESHOLD
            lines.append(f"{prefix}.oscillation: {'yes' if oscillating else 'no'}")
            for b in spectrum.bins:
                lines.append(f"{prefix}.bin: {b.frequency!r} {b.fraction!r}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def oracle_to_text(comparison: OracleComparison) -> str:
        lines = [
            f"oracle: {comparison.oracle}",
            f"points: {comparison.points}",
            f"max_distance: {comparison.max_distance!r}",
            f"tolerance: {comparison.tolerance!r}",
            f"passed: {'yes' if comparison.passed else 'no'}",
        ]
        if comparison.reference_oracle is not None:
            lines.append(f"reference_oracle: {comparison.reference_oracle}")
            lines.append(f"reference_distance: {comparison.reference_distance!r}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def checks_to_text(checks: List[CheckResult]) -> str:
        rows = []
        for check in checks:
            status = "PASS" if check.passed else "FAIL"
            detail = f" ({check.detail})" if check.detail else ""
            rows.append(
                f"[{status}] {check.criterion:>2} {check.name}: measured {check.measured:.3e}, "
                f"threshold {check.threshold:.3e}{detail}"
            )
        return "\n".join(rows) + "\n"

    @staticmethod
    def write_atomic(path: Path, text: str) -> Path:
        """Whole-file replace through a sibling temporary file"""
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.name}.tmp")
        tmp.write_text(text)
        tmp.replace(path)
        logger.info(f"Wrote {path}")
        return path
