"""
Structured logging for scans, solves, fits and configuration checks.
Every record renders as "Operation: <name>, Status: <status>, Details: {...}".
"""

import logging
import os
from typing import Any, Dict, Optional

import numpy as np


def _compact(value: Any) -> Any:
    """Shorten values so a log line stays one line."""
    if isinstance(value, np.ndarray):
        return f"<array shape={value.shape}>"
    if isinstance(value, (float, np.floating)):
        return float(f"{float(value):.6g}")
    if isinstance(value, str) and len(value) > 120:
        return value[:120] + "..."
    return value


class StructuredLogger:
    """Structured logger for rydspec operations."""

    def __init__(self, name: str = "rydspec", level: Optional[str] = None):
        self.logger = logging.getLogger(name)
        level_name = (level or os.getenv("RYDSPEC_LOG_LEVEL", "INFO")).upper()
        self.logger.setLevel(getattr(logging, level_name, logging.INFO))

        if not self.logger.handlers:
            handler = logging.StreamHandler()
            formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            )
            handler.setFormatter(formatter)
            self.logger.addHandler(handler)

    def log_operation(self, operation: str, status: str, details: Dict[str, Any] = None,
                      level: int = logging.INFO):
        """Log a structured operation."""
        message = f"Operation: {operation}, Status: {status}"
        if details:
            message += f", Details: { {k: _compact(v) for k, v in details.items()} }"

        self.logger.log(level, message)

    def log_scan(self, operation: str, points: int, start_time: float, end_time: float,
                 status: str = "success", details: Dict[str, Any] = None):
        """Log completion of a detuning scan."""
        duration_ms = round((end_time - start_time) * 1000, 2)
        log_details = {"points": points, "duration_ms": duration_ms}
        if details:
            log_details.update(details)

        self.log_operation(f"scan.{operation}", status, log_details)

    def log_solver_failure(self, node: Optional[int], velocity: Optional[float], reason: str):
        """Log a steady-state solve that had no unique solution."""
        log_details = {"node": node, "velocity_mps": velocity, "reason": reason}
        self.log_operation("steady_state.solve", "failed", log_details, level=logging.ERROR)

    def log_fit(self, model: str, converged: bool, iterations: int, residual_norm: float,
                details: Dict[str, Any] = None):
        """Log the outcome of a least-squares fit."""
        log_details = {
            "model": model,
            "iterations": iterations,
            "residual_norm": residual_norm,
        }
        if details:
            log_details.update(details)

        status = "converged" if converged else "not_converged"
        level = logging.INFO if converged else logging.WARNING
        self.log_operation("noisefit.fit", status, log_details, level=level)

    def log_config_issue(self, field: str, message: str):
        """Log a rejected configuration field."""
        self.log_operation("config.validate", "rejected", {"field": field, "message": message},
                           level=logging.ERROR)

    def info(self, message: str, extra: Dict[str, Any] = None):
        """Log info message."""
        if extra:
            message += f" - {extra}"
        self.logger.info(message)

    def warning(self, message: str, extra: Dict[str, Any] = None):
        """Log warning message."""
        if extra:
            message += f" - {extra}"
        self.logger.warning(message)

    def error(self, message: str, extra: Dict[str, Any] = None):
        """Log error message."""
        if extra:
            message += f" - {extra}"
        self.logger.error(message)

    def debug(self, message: str, extra: Dict[str, Any] = None):
        """Log debug message."""
        if extra:
            message += f" - {extra}"
        self.logger.debug(message)


# Global logger instance
logger = StructuredLogger()


def log_scan(operation: str, points: int, start_time: float, end_time: float,
             status: str = "success", details: Dict[str, Any] = None):
    """Module-level wrapper for scan logging."""
    logger.log_scan(operation, points, start_time, end_time, status, details)


def log_config_issue(field: str, message: str):
    """Module-level wrapper for configuration rejections."""
    logger.log_config_issue(field, message)
