"""Measurement side: single-quantum peaks, level populations, spectra and decay envelopes."""

import logging
from typing import Dict, List, Optional

import numpy as np
from scipy.optimize import curve_fit

from app.encoding import pullback_operator
from app.models import (
    DensityMatrix,
    Encoding,
    EnvelopeFit,
    FrequencyBin,
    FrequencyReport,
    LineSpectrum,
    PeakSeries,
    PeakSet,
    PulseEvent,
)
from app.spin_system import apply_pulse

logger = logging.getLogger(__name__)

MIN_SPECTRUM_SAMPLES = 8
MIN_FIT_SAMPLES = 6
BIN_THRESHOLD = 0.05
# lines below this RMS amplitude are rounding noise and count as silent
SILENT_RMS = 1e-12


def _spin_letters(index: int, n_spins: int) -> str:
    return format(index, f"0{n_spins}b").replace("0", "u").replace("1", "d")


def line_map(n_spins: int) -> Dict[str, tuple[int, int]]:
    """Label -> (row, col) of every single-quantum element, flipped spin up in the row.

    Two spins give spin1_uu_du, spin1_ud_dd, spin2_uu_ud and spin2_du_dd.
    """
    lines: Dict[str, tuple[int, int]] = {}
    for spin in range(n_spins):
        flip = 1 << (n_spins - 1 - spin)
        for row in range(2**n_spins):
            if row & flip:
                continue
            col = row | flip
            label = f"spin{spin + 1}_{_spin_letters(row, n_spins)}_{_spin_letters(col, n_spins)}"
            lines[label] = (row, col)
    return lines


def extract_peaks(rho: DensityMatrix) -> PeakSet:
    """Single-quantum coherences of rho, the integrated amplitudes of ideal delta lines"""
    if rho.dim < 2 or rho.dim & (rho.dim - 1):
        raise ValueError(f"density matrix dimension {rho.dim} is not a spin-system size")
    return PeakSet(
        amplitudes={label: complex(rho.matrix[i, j]) for label, (i, j) in line_map(rho.n_spins).items()}
    )


def apply_read_pulse(rho: DensityMatrix, pulse: Optional[PulseEvent]) -> DensityMatrix:
    return rho if pulse is None else apply_pulse(rho, pulse)


def level_populations(rho: DensityMatrix, e: Encoding) -> np.ndarray:
    """Diagonal of the state pulled back to oscillator levels"""
    return np.real(np.diagonal(pullback_operator(rho.matrix, e))).copy()


def series_trace(series: PeakSeries, name: str) -> np.ndarray:
    """A peak line by label, or a level population column as 'level<n>'"""
    if name in series.lines:
        return series.lines[name]
    if name.startswith("level") and series.populations is not None:
        level = int(name.removeprefix("level"))
        if 0 <= level < series.populations.shape[1]:
            return series.populations[:, level]
    raise KeyError(f"series has no trace named {name!r}")


def trace_names(series: PeakSeries, include_populations: bool = True) -> List[str]:
    names = list(series.lines.keys())
    if include_populations and series.populations is not None:
        names += [f"level{n}" for n in range(series.populations.shape[1])]
    return names


def line_spectrum(name: str, values: np.ndarray, step: float) -> LineSpectrum:
    n = values.size
    power = np.abs(np.fft.fft(values)) ** 2
    frequencies = np.abs(np.fft.fftfreq(n, d=step)) * 2 * np.pi
    total = float(np.sum(power))
    if total <= n * n * SILENT_RMS**2:
        return LineSpectrum(line=name, total_power=0.0, dc_fraction=1.0, non_dc_fraction=0.0)

    non_dc = float(np.sum(power[1:]))
    bins: List[FrequencyBin] = []
    if non_dc > 0:
        # fold +f and -f together
        for k in range(1, n // 2 + 1):
            folded = power[k] + (power[n - k] if n - k != k else 0.0)
            share = float(folded / non_dc)
            if share > BIN_THRESHOLD:
                bins.append(FrequencyBin(frequency=float(frequencies[k]), fraction=min(share, 1.0)))
    return LineSpectrum(
        line=name,
        total_power=total,
        dc_fraction=min(float(power[0]) / total, 1.0),
        non_dc_fraction=min(non_dc / total, 1.0),
        bins=bins,
    )


def frequency_content(
    series: PeakSeries, include_populations: bool = True, slowest_frequency: Optional[float] = None
) -> FrequencyReport:
    """Discrete spectrum of every trace over T, frequencies in rad/s"""
    n = series.t_grid.size
    if n < MIN_SPECTRUM_SAMPLES:
        raise ValueError(f"frequency analysis needs at least {MIN_SPECTRUM_SAMPLES} samples, got {n}")
    span = series.step * n
    if slowest_frequency is not None and slowest_frequency * span < 4 * np.pi * (1 - 1e-9):
        raise ValueError(
            f"T grid spans {span:.6g} s, shorter than two periods at {slowest_frequency:.6g} rad/s"
        )
    names = trace_names(series, include_populations)
    return FrequencyReport(
        resolution=2 * np.pi / span,
        lines=[line_spectrum(name, series_trace(series, name), series.step) for name in names],
    )


def _design(omega: float, t_grid: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(t_grid), np.cos(omega * t_grid), np.sin(omega * t_grid)])


def _linear_residual(omega: float, t_grid: np.ndarray, y: np.ndarray) -> float:
    design = _design(omega, t_grid)
    coefficients = np.linalg.lstsq(design, y, rcond=None)[0]
    return float(np.sum((design @ coefficients - y) ** 2))


def _fit_plain_decay(y: np.ndarray, t_phys: np.ndarray) -> EnvelopeFit:
    """Least squares fit of c + A exp(-rate t_phys) for a trace that relaxes without oscillating"""
    span = float(t_phys[-1] - t_phys[0])
    if span <= 0:
        raise ValueError("plain decay fit needs t_phys to advance over the grid")

    def model(t: np.ndarray, c: float, amplitude: float, rate: float) -> np.ndarray:
        return c + amplitude * np.exp(-rate * t)

    rate0 = 1 / span
    p0 = (float(y[-1]), float(y[0] - y[-1]) * np.exp(rate0 * t_phys[0]), rate0)
    try:
        params, _ = curve_fit(model, t_phys, y, p0=p0, maxfev=20000)
    except RuntimeError as e:
        logger.error(f"Plain decay fit did not converge: {e}")
        raise ValueError(f"degenerate envelope fit: {e}") from e

    c, amplitude, rate = (float(p) for p in params)
    if not np.isfinite(rate) or amplitude == 0:
        raise ValueError(f"degenerate envelope fit: rate={rate}, amplitude={amplitude}")
    residual = float(np.sqrt(np.mean((model(t_phys, c, amplitude, rate) - y) ** 2)))
    return EnvelopeFit(rate=rate, amplitude=abs(amplitude), frequency=0.0, offset=c, residual=residual)


def fit_damped_oscillation(values: np.ndarray, t_grid: np.ndarray, t_phys: np.ndarray) -> EnvelopeFit:
    """Least squares fit of c + exp(-rate t_phys)(a cos wT + b sin wT); the envelope decays in physical time.

    A fitted frequency below one bin falls back to c + A exp(-rate t_phys), reported with frequency 0.
    """
    y = np.real(np.asarray(values, dtype=complex))
    if y.size < MIN_FIT_SAMPLES:
        raise ValueError(f"envelope fit needs at least {MIN_FIT_SAMPLES} samples, got {y.size}")
    if t_grid.shape != y.shape or t_phys.shape != y.shape:
        raise ValueError("values, T grid and t_phys must have the same length")

    step = float(t_grid[1] - t_grid[0])
    spectrum = np.abs(np.fft.rfft(y - y.mean())) ** 2
    if float(np.max(spectrum[1:], initial=0.0)) <= 1e-24 * y.size:
        raise ValueError("trace does not oscillate, envelope is not positive")
    peak = int(np.argmax(spectrum[1:])) + 1
    resolution = 2 * np.pi / (step * y.size)

    candidates = np.linspace(max(peak - 1, 0.05) * resolution, (peak + 1) * resolution, 401)
    omega0 = float(candidates[int(np.argmin([_linear_residual(w, t_grid, y) for w in candidates]))])
    c0, a0, b0 = np.linalg.lstsq(_design(omega0, t_grid), y, rcond=None)[0]

    def model(t: np.ndarray, c: float, rate: float, a: float, b: float, w: float) -> np.ndarray:
        return c + np.exp(-rate * t_phys) * (a * np.cos(w * t_grid) + b * np.sin(w * t_grid))

    try:
        params, _ = curve_fit(model, t_grid, y, p0=(c0, 0.0, a0, b0, omega0), maxfev=20000)
    except RuntimeError as e:
        logger.warning(f"Damped oscillation fit did not converge, trying a plain decay: {e}")
        return _fit_plain_decay(y, t_phys)

    c, rate, a, b, w = (float(p) for p in params)
    # below one bin the cos and sin weights trade off without bound
    if abs(w) < resolution:
        logger.debug(f"Fitted frequency {w:.3g} rad/s is below one bin, refitting a plain decay")
        return _fit_plain_decay(y, t_phys)
    amplitude = float(np.hypot(a, b))
    if not np.isfinite(rate) or amplitude <= 0:
        raise ValueError(f"degenerate envelope fit: rate={rate}, amplitude={amplitude}")
    residual = float(np.sqrt(np.mean((model(t_grid, c, rate, a, b, w) - y) ** 2)))
    return EnvelopeFit(rate=rate, amplitude=amplitude, frequency=abs(w), offset=c, residual=residual)


def fit_exponential_envelope(series: PeakSeries, trace: str) -> EnvelopeFit:
    """Decay rate of a peak line or level population against the physical program duration"""
    return fit_damped_oscillation(series_trace(series, trace), series.t_grid, series.t_phys)
