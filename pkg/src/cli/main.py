"""
rydspec command line: spectra, velocity maps, error signals, noise fits and n-scans.

Exit codes: 0 success, 2 invalid input (config, data file, arguments), 3 computation failure.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from src.cli import commands
from src.cli.output import console, print_report
from src.core.config import VERSION, load_run_config, validate_runtime_config
from src.core.errors import ConfigError, DataError, RydspecError
from util.logging import logger

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3

# Raised while reading inputs; anything else is a computation failure
INPUT_ERRORS = (ConfigError, DataError)
COMPUTE_ERRORS = (RydspecError, ArithmeticError, np.linalg.LinAlgError, ValueError)


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the input-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _add_run_options(sub: argparse.ArgumentParser):
    sub.add_argument("--config", "-c", type=Path, help="Run configuration file ([section] key = value)")
    sub.add_argument("--out", "-o", help="Output directory (overrides [output] out_dir)")
    sub.add_argument("--threads", "-t", type=int, help="Worker threads for scan points")
    sub.add_argument("--set", "-s", action="append", default=[], metavar="SECTION.KEY=VALUE",
                     help="Override one config value; may be repeated")
    sub.add_argument("--plot", action="store_true", help="Also write SVG line plots")
    sub.add_argument("--quiet", "-q", action="store_true", help="Suppress the console report")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rydspec",
        description="Doppler-averaged Rydberg ladder spectroscopy",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s spectrum --mode tpat --config configs/tpat_n30.cfg     # TPAT doublet spectrum
  %(prog)s spectrum --mode eit --config configs/eit_n30.cfg      # EIT on the lower leg
  %(prog)s map --config configs/tpat_n30.cfg --set map.leg=lower  # per-velocity absorption
  %(prog)s errorsig --config configs/errorsig.cfg --plot       # modulation-transfer error signal
  %(prog)s fit-noise data.csv --model od --p0 0.1,0.8,0.02     # noise model fit
  %(prog)s scan-n --config configs/scan_n.cfg --threads 8      # amplitude versus n

Exit codes:
  0  success
  2  invalid configuration, arguments or data file
  3  computation failed (no steady state, calibration reference zero, ...)

Environment variables:
- RYDSPEC_THREADS=1 (default worker threads)
- RYDSPEC_OUT_DIR=./out (default output directory)
- RYDSPEC_GRID_METHOD=quadrature (quadrature|analytic|weak_probe)
- RYDSPEC_LOG_LEVEL=INFO
        """
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    subs = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs.required = True

    spectrum = subs.add_parser("spectrum", help="Transmission spectrum and feature metrics")
    spectrum.add_argument("--mode", "-m", choices=["eit", "tpat"], required=True,
                          help="eit: lower-leg transmission; tpat: upper-leg transmission")
    _add_run_options(spectrum)

    _add_run_options(subs.add_parser("map", help="Absorption per velocity class (long-format CSV)"))
    _add_run_options(subs.add_parser("errorsig", help="Demodulated error signal and lock metrics"))
    _add_run_options(subs.add_parser("scan-n", help="EIT/TPAT amplitudes versus principal quantum number"))

    fit_noise = subs.add_parser("fit-noise", help="Fit a transmission noise model to measured data")
    fit_noise.add_argument("data", type=Path, help="Two-column CSV with a header row")
    fit_noise.add_argument("--model", choices=["od", "waist"], required=True, help="Noise model")
    fit_noise.add_argument("--p0", help="Comma-separated initial parameters (a,b,c for od; a,b for waist)")
    fit_noise.add_argument("--out", "-o", help="Output directory")
    fit_noise.add_argument("--quiet", "-q", action="store_true", help="Suppress the console report")

    return parser


def _flags(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """Explicit command-line flags as the top config layer."""
    flags: Dict[str, Dict[str, Any]] = {}
    if args.threads is not None:
        flags.setdefault("run", {})["threads"] = args.threads
    if args.out is not None:
        flags.setdefault("output", {})["out_dir"] = args.out
    if args.plot:
        flags.setdefault("output", {})["plot"] = True
    return flags


def _run(args: argparse.Namespace) -> commands.CommandResult:
    if args.command == "fit-noise":
        out_dir = args.out if args.out is not None else load_run_config().output.out_dir
        return commands.cmd_fit_noise(args.data, args.model, Path(out_dir), args.p0)

    config = load_run_config(args.config, args.set, _flags(args))
    if args.command == "spectrum":
        return commands.cmd_spectrum(config, args.mode)
    if args.command == "map":
        return commands.cmd_map(config)
    if args.command == "errorsig":
        return commands.cmd_errorsig(config)
    return commands.cmd_scan_n(config)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    for issue in validate_runtime_config():
        logger.warning(f"runtime configuration: {issue}")

    try:
        result = _run(args)
    except INPUT_ERRORS as e:
        logger.log_operation(f"cli.{args.command}", "invalid_input", {"error": str(e)})
        print(f"ERROR: invalid input: {e}", file=sys.stderr)
        return EXIT_INPUT
    except COMPUTE_ERRORS as e:
        logger.log_operation(f"cli.{args.command}", "failed", {"error": str(e), "type": type(e).__name__})
        print(f"ERROR: computation failed: {e}", file=sys.stderr)
        return EXIT_COMPUTE

    if not args.quiet:
        print_report(f"rydspec {result.command}", result.report)
        for line in commands.summary_lines(result):
            console.print(line)
    logger.log_operation(f"cli.{args.command}", "success", {"files": len(result.files)})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
