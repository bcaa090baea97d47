"""
Beer-Lambert transmission spectra of both legs, feature metrics and the n-scan benchmark.
"""

import math
import time
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import find_peaks

from src.core.errors import CalibrationError, DomainError
from src.core.parallel import ordered_map
from src.physics.atomic_data import RB87, scale_ladder_to_n
from src.physics.doppler import GridLike, averaged_coherence
from src.physics.noisefit import snr, synth_atom_noise
from src.physics.types import (AtomSpec, DopplerEnvironment, FeatureMetrics, GridPolicy, LadderSystem,
                               OpticalDepthCalibration, ScanNRow, ScanSpec, TransmissionSpectrum,
                               VelocityGrid)
from util.logging import logger

SCAN_N_RANGE = (10, 120)
DEFAULT_NOISE_FLOOR = 1e-9


def transmission_from_od(D):
    """T = exp(-D) for D >= 0 (scalar or array)."""
    values = np.asarray(D, dtype=float)
    if np.any(values < 0) or np.any(np.isnan(values)):
        raise DomainError(f"optical depth must be >= 0, got {D}")
    result = np.exp(-values)
    return float(result) if result.ndim == 0 else result


def _metadata(template: LadderSystem, cal: OpticalDepthCalibration, env: DopplerEnvironment,
              grid: GridLike, scan: ScanSpec, **extra) -> Dict[str, Any]:
    meta = {f"ladder.{k}": v for k, v in vars(template).items()}
    meta.update({
        "calibration.d0_lower": cal.d0_lower,
        "calibration.d_peak_upper": cal.d_peak_upper,
        "environment.temperature_k": env.temperature,
        "environment.sigma_v_mps": env.sigma_v,
        "scan.which": scan.which,
        "scan.points": scan.points,
    })
    if isinstance(grid, GridPolicy):
        meta.update({"grid.method": grid.method, "grid.base_points": grid.base_points,
                     "grid.window_points": grid.window_points})
    else:
        meta["grid.nodes"] = len(grid)
    meta.update(extra)
    return meta


def scan_absorption(template: LadderSystem, env: DopplerEnvironment, scan: ScanSpec,
                    grid: GridLike, leg: str, threads: int = 1, margin: float = 0.0) -> np.ndarray:
    """Im of the averaged normalized coherence at every scan point."""
    def point(delta: float) -> float:
        sys = template.with_detuning(scan.which, delta)
        return averaged_coherence(sys, env, grid, leg, margin).imag

    return np.array(ordered_map(point, scan.axis(), threads), dtype=float)


def _od_from_absorption(absorption: np.ndarray, scale: float, label: str) -> np.ndarray:
    od = absorption * scale
    if np.any(od < 0):
        logger.warning(f"{label}: clipping negative optical depth", {"min_od": float(od.min())})
        od = np.clip(od, 0.0, None)
    return od


def eit_spectrum(template: LadderSystem, cal: OpticalDepthCalibration, scan: ScanSpec,
                 env: DopplerEnvironment, grid: GridLike = GridPolicy(), threads: int = 1,
                 with_reference: bool = True) -> TransmissionSpectrum:
    """Lower-leg transmission exp(-d0 Im A_l / Im A_l^ref) with either detuning scanned.

    The reference is the two-level (Omega_u = 0) Doppler-averaged absorption at delta_l = 0.
    """
    start = time.time()
    ref_sys = template.replace(omega_u=0.0, delta_l=0.0)
    reference = averaged_coherence(ref_sys, env, grid, "lower").imag
    if not (math.isfinite(reference) and reference > 0):
        logger.log_operation("spectra.eit_calibration", "failed", {"reference": reference})
        raise CalibrationError(f"two-level reference absorption is {reference}; cannot calibrate d0_lower")

    absorption = scan_absorption(template, env, scan, grid, "lower", threads)
    transmission = np.exp(-_od_from_absorption(absorption, cal.d0_lower / reference, "eit"))

    single_photon = None
    if with_reference:
        single_photon_abs = scan_absorption(template.replace(omega_u=0.0), env, scan, grid, "lower", threads)
        single_photon = np.exp(-_od_from_absorption(single_photon_abs, cal.d0_lower / reference, "eit.reference"))

    logger.log_scan("eit_spectrum", scan.points, start, time.time(), details={"scanned": scan.which})
    return TransmissionSpectrum(
        scan_axis=scan.axis(), transmission=transmission, leg="lower", scanned=scan.which,
        metadata=_metadata(template, cal, env, grid, scan, reference_absorption=reference),
        absorption=absorption, reference=single_photon,
    )


def tpat_spectrum(template: LadderSystem, cal: OpticalDepthCalibration, scan: ScanSpec,
                  env: DopplerEnvironment, grid: GridLike = GridPolicy(), threads: int = 1,
                  absorption_scale: Optional[float] = None, strength: float = 1.0) -> TransmissionSpectrum:
    """Upper-leg transmission exp(-d_peak * strength * Im A_u / scale) over a delta_u scan.

    scale defaults to the maximum of Im A_u over this scan, so the deepest dip is exp(-d_peak).
    """
    if scan.which != "upper":
        raise DomainError("TPAT spectra scan the upper-leg detuning")
    start = time.time()
    absorption = scan_absorption(template, env, scan, grid, "upper", threads)
    scale = float(absorption.max()) if absorption_scale is None else absorption_scale
    if not (math.isfinite(scale) and scale > 0):
        logger.log_operation("spectra.tpat_calibration", "failed", {"scale": scale})
        raise CalibrationError(f"upper-leg absorption peak is {scale}; nothing is excited")

    od = _od_from_absorption(absorption, cal.d_peak_upper * strength / scale, "tpat")
    logger.log_scan("tpat_spectrum", scan.points, start, time.time())
    return TransmissionSpectrum(
        scan_axis=scan.axis(), transmission=np.exp(-od), leg="upper", scanned="upper",
        metadata=_metadata(template, cal, env, grid, scan, absorption_scale=scale, strength=strength),
        absorption=absorption,
    )


def _baseline_mask(axis: np.ndarray, baseline: Optional[Sequence[Tuple[float, float]]],
                   fraction: float) -> np.ndarray:
    if baseline:
        mask = np.zeros(axis.size, dtype=bool)
        for lo, hi in baseline:
            mask |= (axis >= lo) & (axis <= hi)
    else:
        edge = max(1, int(round(fraction * axis.size)))
        mask = np.zeros(axis.size, dtype=bool)
        mask[:edge] = True
        mask[-edge:] = True
    if not mask.any():
        raise DomainError("baseline window contains no scan points")
    return mask


def _closest_to_zero(axis: np.ndarray, candidates: np.ndarray) -> int:
    """Among candidate indices, the one with smallest |detuning| (lowest index on ties)."""
    return int(candidates[np.argmin(np.abs(axis[candidates]))])


def _half_width_crossing(axis: np.ndarray, profile: np.ndarray, center: int,
                         level: float, step: int) -> Optional[float]:
    i = center
    while 0 <= i + step < axis.size:
        j = i + step
        if profile[j] <= level:
            x0, x1, y0, y1 = axis[i], axis[j], profile[i], profile[j]
            return float(x0 + (level - y0) * (x1 - x0) / (y1 - y0))
        i = j
    return None


def _fwhm(axis: np.ndarray, profile: np.ndarray, center: int) -> Optional[float]:
    """Full width at half maximum of a non-negative peak profile around center."""
    level = profile[center] / 2.0
    left = _half_width_crossing(axis, profile, center, level, -1)
    right = _half_width_crossing(axis, profile, center, level, +1)
    if left is None or right is None:
        return None
    return right - left


def _splitting(axis: np.ndarray, dip: np.ndarray, noise_floor: float) -> Optional[float]:
    peaks, _ = find_peaks(dip, prominence=noise_floor)
    if peaks.size < 2:
        return None
    # deepest first, ties toward smaller |detuning|
    order = sorted(peaks, key=lambda i: (-dip[i], abs(axis[i])))
    a, b = order[0], order[1]
    return float(abs(axis[a] - axis[b]))


def feature_metrics(spec: TransmissionSpectrum, mode: str,
                    baseline: Optional[Sequence[Tuple[float, float]]] = None,
                    baseline_fraction: float = 0.1,
                    noise_floor: float = DEFAULT_NOISE_FLOOR) -> FeatureMetrics:
    """Depth, FWHM, splitting and contrast of the TPAT dip or the EIT feature.

    baseline: off-resonant detuning windows (rad/s); defaults to the outer
    baseline_fraction of the scan on both sides.
    """
    axis, T = spec.scan_axis, spec.transmission

    if mode == "tpat":
        base = float(np.mean(T[_baseline_mask(axis, baseline, baseline_fraction)]))
        dip = base - T
        depth = float(dip.max())
        center = _closest_to_zero(axis, np.flatnonzero(dip == depth))
        if not depth > noise_floor:
            return FeatureMetrics(depth=max(depth, 0.0), contrast=0.0, resolved=False, baseline=base)
        return FeatureMetrics(
            depth=depth,
            contrast=depth / base,
            resolved=True,
            fwhm=_fwhm(axis, np.clip(dip, 0.0, None), center),
            at_splitting=_splitting(axis, dip, noise_floor),
            extremum_detuning=float(axis[center]),
            baseline=base,
        )

    if mode == "eit":
        if spec.reference is not None:
            reference = spec.reference
        else:
            reference = np.full_like(T, np.mean(T[_baseline_mask(axis, baseline, baseline_fraction)]))
        deviation = np.abs(T - reference)
        depth = float(deviation.max())
        center = _closest_to_zero(axis, np.flatnonzero(deviation == depth))
        absorbed = 1.0 - float(reference[center])
        if not (depth > noise_floor and absorbed > noise_floor):
            return FeatureMetrics(depth=depth, contrast=0.0, resolved=False,
                                  baseline=float(reference[center]))
        return FeatureMetrics(
            depth=depth,
            contrast=depth / absorbed,
            resolved=True,
            fwhm=_fwhm(axis, deviation, center),
            extremum_detuning=float(axis[center]),
            baseline=float(reference[center]),
        )

    raise DomainError(f"mode must be eit or tpat, got {mode!r}")


def _check_n_range(n_values: Sequence[int]):
    lo, hi = SCAN_N_RANGE
    if not n_values:
        raise DomainError("n-scan needs at least one principal quantum number")
    for n in n_values:
        if isinstance(n, bool) or int(n) != n or not lo <= n <= hi:
            raise DomainError(f"n-scan values must be integers in [{lo}, {hi}], got {n}")


def scan_n(n_values: Sequence[int], eit_template: LadderSystem, tpat_template: LadderSystem,
           cal: OpticalDepthCalibration, env: DopplerEnvironment, eit_scan: ScanSpec,
           tpat_scan: ScanSpec, grid: GridLike = GridPolicy(), atom: AtomSpec = RB87,
           threads: int = 1, n_atoms: Optional[float] = None, detector_rms: float = 0.0,
           keep_spectra: bool = False, eit_grid: GridLike = GridPolicy(method="weak_probe")) -> List[ScanNRow]:
    """EIT and TPAT feature amplitudes versus principal quantum number.

    Templates are specified at atom.n_ref; Omega_u and Gamma_u are rescaled per n.
    The TPAT optical depth keeps the n_ref scale and grows with Omega_u(n)^2.
    EIT uses eit_grid, by default the weak-probe response, which is linear in Omega_l
    and carries no population shelved in |r>.
    """
    _check_n_range(n_values)
    start = time.time()
    reference = tpat_spectrum(tpat_template, cal, tpat_scan, env, grid, threads)
    scale = reference.metadata["absorption_scale"]

    rows = []
    for n in n_values:
        tpat_sys = scale_ladder_to_n(tpat_template, n, atom)
        eit_sys = scale_ladder_to_n(eit_template, n, atom)
        if n == atom.n_ref:
            tpat = reference
        else:
            strength = (tpat_sys.omega_u / tpat_template.omega_u) ** 2 if tpat_template.omega_u > 0 else 0.0
            tpat = tpat_spectrum(tpat_sys, cal, tpat_scan, env, grid, threads,
                                 absorption_scale=scale, strength=strength)
        eit = eit_spectrum(eit_sys, cal, eit_scan, env, eit_grid, threads)
        row = ScanNRow(
            n=int(n),
            eit_amplitude=feature_metrics(eit, "eit").depth,
            tpat_amplitude=feature_metrics(tpat, "tpat").depth,
            tpat_spectrum=tpat if keep_spectra else None,
            eit_spectrum=eit if keep_spectra else None,
        )
        if n_atoms is not None:
            eit_noise = math.hypot(synth_atom_noise(cal.d0_lower, n_atoms), detector_rms)
            tpat_noise = math.hypot(synth_atom_noise(cal.d_peak_upper, n_atoms), detector_rms)
            row.eit_snr_raw = snr(row.eit_amplitude, eit_noise, detector_rms, "raw").value
            row.eit_snr_ideal = snr(row.eit_amplitude, eit_noise, detector_rms, "ideal").value
            row.tpat_snr_raw = snr(row.tpat_amplitude, tpat_noise, detector_rms, "raw").value
            row.tpat_snr_ideal = snr(row.tpat_amplitude, tpat_noise, detector_rms, "ideal").value
        rows.append(row)

    logger.log_scan("scan_n", len(rows), start, time.time(), details={"n_values": list(map(int, n_values))})
    return rows
