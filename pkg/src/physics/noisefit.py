"""
Transmission noise models, Levenberg-Marquardt fits and signal-to-noise ratios.
"""

import math
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from src.core.errors import DataError, DomainError
from src.physics.types import (DataSeries, FitResult, NoiseModelOD, NoiseModelWaist,
                               SignalToNoise)
from util.logging import logger

PARAM_NAMES = {"od": ("a", "b", "c"), "waist": ("a", "b")}
MAX_ITERATIONS = 200


def predict_od_noise(D, model: NoiseModelOD):
    """sqrt((a sqrt(D) e^{-bD})^2 + c^2) for D >= 0."""
    D = np.asarray(D, dtype=float)
    if np.any(D < 0) or np.any(np.isnan(D)):
        raise DomainError("optical depth must be >= 0")
    atom_noise = model.a * np.sqrt(D) * np.exp(-model.b * D)
    result = np.hypot(atom_noise, model.c)
    return float(result) if result.ndim == 0 else result


def predict_waist_noise(w, model: NoiseModelWaist):
    """sqrt(a^2 / w^2 + b^2) for w > 0."""
    w = np.asarray(w, dtype=float)
    if np.any(~(w > 0)):
        raise DomainError("beam waist must be > 0")
    result = np.hypot(model.a / w, model.b)
    return float(result) if result.ndim == 0 else result


def _od_model(p: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Model values and Jacobian with respect to (a, b, c)."""
    a, b, c = p
    shape = np.sqrt(x) * np.exp(-b * x)
    g = a * shape
    f = np.hypot(g, c)
    safe = np.where(f > 0, f, 1.0)
    jac = np.column_stack([g * shape / safe, -g * a * x * shape / safe, c / safe])
    jac[f == 0] = 0.0
    return f, jac


def _waist_model(p: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a, b = p
    f = np.hypot(a / x, b)
    safe = np.where(f > 0, f, 1.0)
    jac = np.column_stack([a / (x ** 2 * safe), b / safe])
    jac[f == 0] = 0.0
    return f, jac


MODELS = {"od": _od_model, "waist": _waist_model}


def fit(model_kind: str, data: DataSeries, initial_params: Sequence[float],
        max_iterations: int = MAX_ITERATIONS) -> FitResult:
    """Damped least-squares fit of a noise model; parameters are fitted as |p|.

    Non-convergence is reported through FitResult.converged, never raised.
    """
    if model_kind not in MODELS:
        raise DomainError(f"model must be one of {sorted(MODELS)}, got {model_kind!r}")
    names = PARAM_NAMES[model_kind]
    p0 = np.asarray(initial_params, dtype=float)
    if p0.shape != (len(names),):
        raise DomainError(f"{model_kind} model needs {len(names)} initial parameters, got {p0.size}")
    if not np.all(np.isfinite(p0)) or np.any(p0 < 0):
        raise DomainError("initial parameters must be finite and >= 0")

    x = np.asarray(data.x, dtype=float)
    y = np.asarray(data.y, dtype=float)
    if x.size < 2 * len(names):
        raise DataError(f"{model_kind} fit needs >= {2 * len(names)} points, got {x.size}")
    if model_kind == "od" and np.any(x < 0):
        raise DataError("optical depths in the data must be >= 0")
    if model_kind == "waist" and np.any(x <= 0):
        raise DataError("beam waists in the data must be > 0")

    model = MODELS[model_kind]

    def residuals(p):
        return model(np.abs(p), x)[0] - y

    def jacobian(p):
        sign = np.where(p < 0, -1.0, 1.0)
        return model(np.abs(p), x)[1] * sign

    result = least_squares(residuals, p0, jac=jacobian, method="lm",
                           xtol=1e-12, ftol=1e-12, gtol=1e-10, max_nfev=max_iterations)

    params = np.abs(result.x)
    J = model(params, x)[1]
    dof = max(x.size - params.size, 1)
    s2 = 2.0 * result.cost / dof
    covariance = np.linalg.pinv(J.T @ J) * s2
    covariance = 0.5 * (covariance + covariance.T)

    converged = bool(result.status > 0)
    residual_norm = float(np.linalg.norm(result.fun))
    iterations = int(result.njev) if result.njev is not None else int(result.nfev)
    logger.log_fit(model_kind, converged, iterations, residual_norm, {"message": result.message})

    return FitResult(
        model_kind=model_kind,
        params=dict(zip(names, params.tolist())),
        covariance=covariance,
        residual_norm=residual_norm,
        iterations=iterations,
        converged=converged,
        message=str(result.message),
    )


def synth_atom_noise(D: float, n_atoms: float) -> float:
    """Poisson atom-number noise through Beer-Lambert: e^{-D} D / sqrt(N)."""
    if not n_atoms >= 1:
        raise DomainError(f"atom number must be >= 1, got {n_atoms}")
    if not D >= 0:
        raise DomainError(f"optical depth must be >= 0, got {D}")
    return math.exp(-D) * D / math.sqrt(n_atoms)


def snr(signal_amplitude: float, background_rms: float, detector_rms: float, mode: str) -> SignalToNoise:
    """Raw (A / background) or ideal (A / sqrt(background^2 - detector^2)) signal-to-noise ratio."""
    if mode not in ("raw", "ideal"):
        raise DomainError(f"SNR mode must be raw or ideal, got {mode!r}")
    if background_rms < 0 or detector_rms < 0:
        raise DomainError("rms noise values must be >= 0")

    if mode == "raw":
        denominator = background_rms
    else:
        denominator = math.sqrt(max(background_rms ** 2 - detector_rms ** 2, 0.0))

    if signal_amplitude == 0:
        return SignalToNoise(0.0, mode, noise_floor_limited=denominator == 0)
    if denominator == 0:
        logger.log_operation("noisefit.snr", "noise_floor_limited",
                             {"mode": mode, "background_rms": background_rms, "detector_rms": detector_rms})
        return SignalToNoise(math.inf, mode, noise_floor_limited=True)
    return SignalToNoise(signal_amplitude / denominator, mode)


def _parse_metadata(comment: str, meta: Dict[str, str]):
    body = comment.lstrip("#").strip()
    if "=" in body:
        key, value = body.split("=", 1)
        meta[key.strip().lower()] = value.strip()


def read_data_series(path: Path) -> DataSeries:
    """Two-column CSV (x, y) with a one-line header; '# key = value' comments carry units and bandwidth."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")

    meta: Dict[str, str] = {}
    rows = []
    header_seen = False
    for line in path.read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            _parse_metadata(stripped, meta)
        elif not header_seen:
            header_seen = True
        else:
            rows.append(stripped)

    if not rows:
        raise DataError(f"{path}: no data rows after the header")
    try:
        table = np.loadtxt(rows, delimiter=",", ndmin=2)
    except ValueError as e:
        raise DataError(f"{path}: malformed data ({e})") from e
    if table.shape[1] != 2:
        raise DataError(f"{path}: expected 2 columns, got {table.shape[1]}")
    if not np.all(np.isfinite(table)):
        raise DataError(f"{path}: non-finite values")

    try:
        bandwidth = float(meta["bandwidth_hz"]) if "bandwidth_hz" in meta else None
    except ValueError as e:
        raise DataError(f"{path}: bandwidth_hz is not a number") from e

    return DataSeries(x=table[:, 0], y=table[:, 1], bandwidth_hz=bandwidth,
                      x_unit=meta.get("x_unit", ""), y_unit=meta.get("y_unit", ""))
