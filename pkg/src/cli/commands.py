"""
Subcommand implementations. Each command first turns the validated RunConfig into
domain objects (input errors surface as ConfigError) and then runs the pipeline.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

import numpy as np

from src.core.errors import ConfigError, DomainError
from src.core.schema import RunConfig
from src.core.units import to_hz
from src.physics.doppler import absorption_map, uniform_grid
from src.physics.lockin import error_signal
from src.physics.noisefit import PARAM_NAMES, fit, read_data_series
from src.physics.spectra import eit_spectrum, feature_metrics, scan_n, tpat_spectrum
from src.physics.types import DataSeries
from src.cli import output
from util.logging import logger

T = TypeVar("T")


@dataclass
class CommandResult:
    """Files written by a command and the report shown on the console."""

    command: str
    files: List[Path] = field(default_factory=list)
    report: Dict[str, Any] = field(default_factory=dict)


def _inputs(build: Callable[[], T], section: str) -> T:
    """Build domain objects; a violated precondition is an input error of that section."""
    try:
        return build()
    except DomainError as e:
        raise ConfigError(str(e), field=section) from e


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _common(config: RunConfig):
    atom = _inputs(config.atom.to_atom, "atom")
    ladder = _inputs(lambda: config.ladder.to_ladder(atom), "ladder")
    env = _inputs(lambda: config.environment.to_environment(atom), "environment")
    cal = _inputs(config.calibration.to_calibration, "calibration")
    policy = _inputs(config.grid.to_policy, "grid")
    return atom, ladder, env, cal, policy


def _require_upper_scan(config: RunConfig, what: str):
    if config.scan.which != "upper":
        raise ConfigError(f"{what} scans the upper-leg detuning; set which = upper", field="scan.which")


def cmd_spectrum(config: RunConfig, mode: str) -> CommandResult:
    """Transmission spectrum CSV plus a metrics report for mode eit or tpat."""
    if mode not in ("eit", "tpat"):
        raise ConfigError(f"mode must be eit or tpat, got {mode!r}", field="--mode")
    if mode == "tpat":
        _require_upper_scan(config, "a TPAT spectrum")
    atom, ladder, env, cal, policy = _common(config)
    scan = _inputs(config.scan.to_scan, "scan")

    start = time.time()
    if mode == "eit":
        spec = eit_spectrum(ladder, cal, scan, env, policy, config.threads)
    else:
        spec = tpat_spectrum(ladder, cal, scan, env, policy, config.threads)
    metrics = feature_metrics(spec, mode)

    out = _out_dir(config)
    result = CommandResult("spectrum")
    result.files.append(output.write_spectrum(out / f"spectrum_{mode}.csv", spec))

    report: Dict[str, Any] = {"mode": mode, "scanned": spec.scanned, "points": scan.points,
                              "grid_method": policy.method, "sigma_v_mps": env.sigma_v}
    report.update(output.metrics_in_hz(metrics.to_dict()))
    result.files.append(output.write_report(out / f"spectrum_{mode}_metrics.txt", report))
    result.report = report

    if config.output.plot:
        series = {"transmission": spec.transmission}
        if spec.reference is not None:
            series["single-photon"] = spec.reference
        result.files.append(output.write_line_plot(
            out / f"spectrum_{mode}.svg", to_hz(spec.scan_axis), series,
            f"delta_{spec.scanned} / 2pi (Hz)", "transmission", f"{mode.upper()} spectrum"))

    logger.log_scan("cli.spectrum", scan.points, start, time.time(),
                    details={"mode": mode, "resolved": metrics.resolved})
    return result


def cmd_map(config: RunConfig) -> CommandResult:
    """Per-velocity absorption of one leg as long-format CSV."""
    atom, ladder, env, _, _ = _common(config)
    scan = _inputs(config.scan.to_scan, "scan")
    section = config.map
    grid = _inputs(lambda: uniform_grid(env, section.velocity_min_mps, section.velocity_max_mps,
                                        section.velocity_points), "map")

    start = time.time()
    amap = absorption_map(ladder, scan, grid, section.leg, config.threads)

    out = _out_dir(config)
    result = CommandResult("map")
    result.files.append(output.write_map(out / f"map_{section.leg}.csv", amap))
    result.files.append(output.write_map_sums(out / f"map_{section.leg}_sums.csv", amap))
    result.report = {"leg": section.leg, "scanned": scan.which, "scan_points": scan.points,
                     "velocity_points": len(grid), "rows": scan.points * len(grid)}

    logger.log_scan("cli.map", scan.points * len(grid), start, time.time(), details={"leg": section.leg})
    return result


def cmd_errorsig(config: RunConfig) -> CommandResult:
    """Modulation-transfer error signal CSV plus lock-point report."""
    _require_upper_scan(config, "the error signal")
    atom, ladder, env, cal, policy = _common(config)
    scan = _inputs(config.scan.to_scan, "scan")
    mod = _inputs(config.modulation.to_modulation, "modulation")

    signal = error_signal(ladder, cal, env, scan, mod, policy, config.threads)

    out = _out_dir(config)
    result = CommandResult("errorsig")
    result.files.append(output.write_error_signal(out / "errorsig.csv", signal))
    report: Dict[str, Any] = {"points": scan.points, "depth_hz": to_hz(mod.depth), "f_mod_hz": mod.f_mod,
                              "demod_phase_rad": signal.demod_phase,
                              "absorption_scale": signal.absorption_scale}
    report.update(output.metrics_in_hz(signal.metrics.to_dict()))
    result.files.append(output.write_report(out / "errorsig_metrics.txt", report))
    result.report = report

    if config.output.plot:
        result.files.append(output.write_line_plot(
            out / "errorsig.svg", to_hz(signal.scan_axis), {"error signal": signal.values},
            "delta_u / 2pi (Hz)", "demodulated transmission", "Error signal"))
    return result


def parse_p0(text: Optional[str], model: str) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise ConfigError(f"initial parameters must be numbers, got '{text}'", field="--p0") from e
    expected = len(PARAM_NAMES[model])
    if len(values) != expected:
        raise ConfigError(f"{model} model needs {expected} initial parameters, got {len(values)}", field="--p0")
    return values


def default_p0(model: str, data: DataSeries) -> List[float]:
    """Starting point read off the data: noise peak, curvature and floor."""
    y = np.abs(np.asarray(data.y, dtype=float))
    floor = float(y.min())
    if model == "od":
        peak = int(np.argmax(y))
        d_peak = float(data.x[peak]) if data.x[peak] > 0 else 1.0
        b = 1.0 / (2.0 * d_peak)
        a = float(y.max()) / (np.sqrt(d_peak) * np.exp(-b * d_peak))
        return [a, b, floor]
    smallest = int(np.argmin(data.x))
    return [float(y[smallest] * data.x[smallest]), floor]


def cmd_fit_noise(data_path: Path, model: str, out_dir: Path, p0: Optional[str] = None) -> CommandResult:
    """Fit a noise model to a two-column CSV and write fit_<model>.txt."""
    if model not in PARAM_NAMES:
        raise ConfigError(f"model must be one of {sorted(PARAM_NAMES)}, got {model!r}", field="--model")
    initial = parse_p0(p0, model)
    data = read_data_series(Path(data_path))
    if initial is None:
        initial = default_p0(model, data)
    result_fit = _inputs(lambda: fit(model, data, initial), "--p0")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = output.fit_report(result_fit, Path(data_path), int(np.asarray(data.x).size))
    if data.bandwidth_hz is not None:
        report["bandwidth_hz"] = data.bandwidth_hz
    result = CommandResult("fit-noise", report=report)
    result.files.append(output.write_report(out_dir / f"fit_{model}.txt", report))
    return result


def cmd_scan_n(config: RunConfig) -> CommandResult:
    """EIT and TPAT amplitudes (and optional SNR) versus principal quantum number."""
    _require_upper_scan(config, "the n-scan TPAT spectrum")
    section = config.scan_n
    atom, _, env, cal, policy = _common(config)
    # Templates are specified at n_ref and rescaled per n
    tpat_template = _inputs(lambda: config.ladder.model_copy(update={"n": None}).to_ladder(atom), "ladder")
    eit_template = _inputs(lambda: section.eit_template(atom, config.ladder), "scan_n")
    tpat_scan = _inputs(config.scan.to_scan, "scan")
    eit_scan = _inputs(section.eit_scan, "scan_n")

    rows = scan_n(section.n_values, eit_template, tpat_template, cal, env, eit_scan, tpat_scan,
                  grid=policy, atom=atom, threads=config.threads, n_atoms=section.n_atoms,
                  detector_rms=section.detector_rms, keep_spectra=section.per_n_spectra,
                  eit_grid=section.eit_policy(config.grid))

    out = _out_dir(config)
    result = CommandResult("scan-n")
    result.files.append(output.write_scan_n(out / "scan_n.csv", rows))
    if section.per_n_spectra:
        for row in rows:
            result.files.append(output.write_spectrum(out / f"scan_n_tpat_n{row.n}.csv", row.tpat_spectrum))
    result.report = {f"n{row.n}.tpat_amplitude": row.tpat_amplitude for row in rows}
    result.report.update({f"n{row.n}.eit_amplitude": row.eit_amplitude for row in rows})

    if config.output.plot:
        n_axis = [row.n for row in rows]
        result.files.append(output.write_line_plot(
            out / "scan_n.svg", n_axis,
            {"TPAT": [row.tpat_amplitude for row in rows], "EIT": [row.eit_amplitude for row in rows]},
            "principal quantum number n", "feature amplitude", "Amplitude versus n"))
    return result


def summary_lines(result: CommandResult) -> Sequence[str]:
    return [f"wrote {path}" for path in result.files]
