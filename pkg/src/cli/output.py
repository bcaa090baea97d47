"""
Result files: CSV tables, key = value reports and optional SVG line plots.

Numbers are written with repr() (shortest round-trip decimal) so identical
results give byte-identical files. Angular frequencies are converted to Hz here.
"""

import csv
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from rich.console import Console
from rich.table import Table

from src.core.units import to_hz
from src.physics.types import AbsorptionMap, ErrorSignal, FitResult, ScanNRow, TransmissionSpectrum
from util.logging import logger

console = Console()

SCAN_N_HEADER = ["n", "eit_amplitude", "tpat_amplitude", "eit_snr_raw", "eit_snr_ideal",
                 "tpat_snr_raw", "tpat_snr_ideal"]

# Frequency-valued metric keys (rad/s in the physics layer)
ANGULAR_KEYS = ("fwhm", "at_splitting", "extremum_detuning", "zero_crossing",
                "capture_range", "lower_extremum", "upper_extremum")


def format_number(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])
    return path


def write_report(path: Path, entries: Dict[str, Any]) -> Path:
    """Flat key = value report, one entry per line in insertion order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{key} = {format_number(value)}" for key, value in entries.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_report(path: Path) -> Dict[str, str]:
    entries = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries


def metrics_in_hz(metrics: Dict[str, Any]) -> Dict[str, Any]:
    """Rename frequency-valued metrics to <key>_hz and convert them from rad/s."""
    converted = {}
    for key, value in metrics.items():
        if key in ANGULAR_KEYS:
            converted[f"{key}_hz"] = None if value is None else to_hz(value)
        elif key == "slope":
            # d(signal)/d(delta/2pi)
            converted["slope_per_hz"] = None if value is None else value * 2.0 * math.pi
        else:
            converted[key] = value
    return converted


def spectrum_rows(spec: TransmissionSpectrum) -> List[List[float]]:
    return [[to_hz(float(d)), float(t)] for d, t in zip(spec.scan_axis, spec.transmission)]


def write_spectrum(path: Path, spec: TransmissionSpectrum) -> Path:
    return write_csv(path, ["detuning_hz", "transmission"], spectrum_rows(spec))


def write_map(path: Path, amap: AbsorptionMap) -> Path:
    """Long format, scan point outer and velocity inner."""
    rows = (
        [float(v), to_hz(float(d)), float(a)]
        for i, d in enumerate(amap.scan_axis)
        for v, a in zip(amap.velocity_axis, amap.values[i])
    )
    return write_csv(path, ["velocity_mps", "detuning_hz", "absorption"], rows)


def write_map_sums(path: Path, amap: AbsorptionMap) -> Path:
    sums = amap.column_sums()
    return write_csv(path, ["detuning_hz", "weighted_absorption"],
                     ([to_hz(float(d)), float(s)] for d, s in zip(amap.scan_axis, sums)))


def write_error_signal(path: Path, signal: ErrorSignal) -> Path:
    return write_csv(path, ["detuning_hz", "value"],
                     ([to_hz(float(d)), float(e)] for d, e in zip(signal.scan_axis, signal.values)))


def write_scan_n(path: Path, rows: Sequence[ScanNRow]) -> Path:
    return write_csv(path, SCAN_N_HEADER, (row.csv_fields() for row in rows))


def fit_report(result: FitResult, data_path: Path, points: int) -> Dict[str, Any]:
    entries: Dict[str, Any] = {"model": result.model_kind, "data": str(data_path), "points": points}
    entries.update({f"param.{k}": v for k, v in result.params.items()})
    entries.update({f"stderr.{k}": v for k, v in result.std_errors().items()})
    entries.update({f"covariance.{k}{k}": float(result.covariance[i, i])
                    for i, k in enumerate(result.params)})
    entries.update({
        "residual_norm": result.residual_norm,
        "iterations": result.iterations,
        "converged": result.converged,
        "message": result.message,
    })
    return entries


def print_report(title: str, entries: Dict[str, Any]):
    table = Table(title=title)
    table.add_column("Key", style="cyan")
    table.add_column("Value", style="green")
    for key, value in entries.items():
        table.add_row(key, format_number(value))
    console.print(table)


def write_line_plot(path: Path, x: Sequence[float], series: Dict[str, Sequence[float]],
                    xlabel: str, ylabel: str, title: Optional[str] = None) -> Path:
    """Simple SVG line plot with fixed metadata so reruns give identical files."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": "rydspec", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for label, y in series.items():
            ax.plot(x, y, label=label, linewidth=1.2)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)

    logger.log_operation("output.plot", "written", {"path": str(path)})
    return path
