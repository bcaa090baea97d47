"""
Modulation-transfer error signal: the lower-leg detuning is frequency modulated and the
upper-leg transmission is demodulated at the modulation frequency.

The transmission follows the instantaneous detuning (quasi-static), so one modulation
period is sampled at P phases and each phase is a stationary upper-leg spectrum point.
"""

import math
import time
from typing import List, Optional, Tuple

import numpy as np

from src.core.errors import CalibrationError, DomainError
from src.core.parallel import ordered_map
from src.core.units import to_hz
from src.physics.doppler import GridLike, averaged_coherence, build_grid
from src.physics.types import (DopplerEnvironment, ErrorSignal, GridPolicy, LadderSystem, LockMetrics,
                               ModulationSpec, OpticalDepthCalibration, ScanSpec)
from util.logging import logger

QUASI_STATIC_FRACTION = 0.25
SLOPE_HALF_SPAN = 3


def modulation_phases(samples: int) -> np.ndarray:
    return np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)


def _distinct_offsets(mod: ModulationSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct sin(theta_j) values and the index of each phase into them."""
    keys = np.round(np.sin(modulation_phases(mod.samples_per_period)), 12) + 0.0
    return np.unique(keys, return_inverse=True)


def _modulation_margin(template: LadderSystem, depth: float) -> float:
    """Velocity shift of the fastest-moving resonance under a detuning excursion of depth."""
    dk = abs(template.k_l - template.k_u)
    return depth / min(template.k_l, dk) if dk > 0 else depth / template.k_l


def _point_grid(template: LadderSystem, env: DopplerEnvironment, grid: GridLike, margin: float) -> GridLike:
    if isinstance(grid, GridPolicy) and grid.method == "quadrature":
        return build_grid(env, template, grid.base_points, grid.window_points, margin)
    return grid


def transmission_at(template: LadderSystem, cal: OpticalDepthCalibration, env: DopplerEnvironment,
                    grid: GridLike, absorption_scale: float) -> float:
    """Upper-leg transmission of one detuning pair under a fixed OD scale."""
    absorption = averaged_coherence(template, env, grid, "upper").imag
    return math.exp(-max(cal.d_peak_upper * absorption / absorption_scale, 0.0))


def _check_quasi_static(template: LadderSystem, mod: ModulationSpec):
    linewidth_hz = to_hz(template.gamma_l)
    if mod.f_mod > QUASI_STATIC_FRACTION * linewidth_hz:
        logger.warning("modulation frequency is not small against the intermediate linewidth; "
                       "quasi-static demodulation is approximate",
                       {"f_mod_hz": mod.f_mod, "gamma_l_hz": linewidth_hz})


def error_signal(template: LadderSystem, cal: OpticalDepthCalibration, env: DopplerEnvironment,
                 scan: ScanSpec, mod: ModulationSpec = ModulationSpec(),
                 grid: GridLike = GridPolicy(), threads: int = 1) -> ErrorSignal:
    """Demodulated upper-leg transmission versus delta_u."""
    if scan.which != "upper":
        raise DomainError("the error signal scans the upper-leg detuning")
    _check_quasi_static(template, mod)
    start = time.time()

    keys, inverse = _distinct_offsets(mod)
    offsets = mod.depth * keys
    margin = _modulation_margin(template, mod.depth)
    zero = int(np.flatnonzero(keys == 0.0)[0])

    def absorption_row(delta_u: float) -> np.ndarray:
        sys = template.with_detuning("upper", delta_u)
        local = _point_grid(sys, env, grid, margin)
        return np.array([
            averaged_coherence(sys.replace(delta_l=sys.delta_l + off), env, local, "upper").imag
            for off in offsets
        ])

    absorption = np.vstack(ordered_map(absorption_row, scan.axis(), threads))
    scale = float(absorption[:, zero].max())
    if not (math.isfinite(scale) and scale > 0):
        raise CalibrationError(f"upper-leg absorption peak is {scale}; nothing is excited")

    transmission = np.exp(-np.clip(cal.d_peak_upper * absorption / scale, 0.0, None))
    change = transmission[:, inverse] - transmission[:, [zero]]
    theta = modulation_phases(mod.samples_per_period)
    norm = 2.0 / mod.samples_per_period
    in_phase = norm * change @ np.sin(theta)
    quadrature = norm * change @ np.cos(theta)

    axis = scan.axis()
    phase = mod.demod_phase
    if phase is None:
        phase = _best_phase(axis, in_phase, quadrature)
    values = math.cos(phase) * in_phase + math.sin(phase) * quadrature

    signal = ErrorSignal(scan_axis=axis, values=values, demod_phase=float(phase), absorption_scale=scale)
    signal.metrics = lock_metrics(signal)
    logger.log_scan("error_signal", scan.points, start, time.time(),
                    details={"demod_phase": signal.demod_phase, "locked": signal.metrics.has_lock_point})
    return signal


def _best_phase(axis: np.ndarray, in_phase: np.ndarray, quadrature: np.ndarray) -> float:
    """Phase that maximizes the positive slope at the central zero crossing."""
    slope_x = _crossing_slope(axis, in_phase)
    slope_y = _crossing_slope(axis, quadrature)
    if slope_x == 0 and slope_y == 0:
        return 0.0
    return math.atan2(slope_y, slope_x)


def _crossing_slope(axis: np.ndarray, values: np.ndarray) -> float:
    found = _central_crossing(axis, values)
    if found is None:
        return 0.0
    return _slope(axis, values, found[1], found[2])


def _crossings(axis: np.ndarray, values: np.ndarray) -> List[Tuple[float, int, int]]:
    """(position, last index before, first index after) of every sign change."""
    sign = np.sign(values)
    found = []
    for i in range(values.size - 1):
        if sign[i] != 0 and sign[i + 1] != 0 and sign[i] != sign[i + 1]:
            x0, x1, y0, y1 = axis[i], axis[i + 1], values[i], values[i + 1]
            found.append((float(x0 - y0 * (x1 - x0) / (y1 - y0)), i, i + 1))
        elif sign[i] == 0 and 0 < i and sign[i - 1] * sign[i + 1] < 0:
            found.append((float(axis[i]), i - 1, i + 1))
    return found


def _central_crossing(axis: np.ndarray, values: np.ndarray) -> Optional[Tuple[float, int, int]]:
    found = _crossings(axis, values)
    if not found:
        return None
    center = 0.5 * (axis[0] + axis[-1])
    return min(found, key=lambda c: (abs(c[0] - center), abs(c[0])))


def _slope(axis: np.ndarray, values: np.ndarray, left: int, right: int) -> float:
    lo = max(0, left - SLOPE_HALF_SPAN + 1)
    hi = min(values.size, right + SLOPE_HALF_SPAN)
    return float(np.polyfit(axis[lo:hi], values[lo:hi], 1)[0])


def _lobe_extremum(values: np.ndarray, index: int, step: int) -> int:
    """Index of largest |value| in the same-sign run starting at index and moving by step."""
    sign = np.sign(values[index])
    best = index
    i = index
    while 0 <= i < values.size and np.sign(values[i]) == sign:
        if abs(values[i]) > abs(values[best]):
            best = i
        i += step
    return best


def lock_metrics(signal: ErrorSignal) -> LockMetrics:
    """Zero crossing nearest the scan centre, slope over +-3 samples and lobe-to-lobe capture range."""
    axis, values = np.asarray(signal.scan_axis), np.asarray(signal.values)
    found = _central_crossing(axis, values)
    if found is None:
        logger.log_operation("lockin.lock_metrics", "no_lock_point", {"points": int(values.size)})
        return LockMetrics(has_lock_point=False)

    position, left, right = found
    low = _lobe_extremum(values, left, -1)
    high = _lobe_extremum(values, right, +1)
    lower, upper = sorted((float(axis[low]), float(axis[high])))
    return LockMetrics(
        has_lock_point=True,
        zero_crossing=position,
        slope=_slope(axis, values, left, right),
        capture_range=upper - lower,
        lower_extremum=lower,
        upper_extremum=upper,
        edge_limited=low in (0, values.size - 1) or high in (0, values.size - 1),
    )
