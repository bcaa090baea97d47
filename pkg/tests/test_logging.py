"""
Structured log records: "Operation: <name>, Status: <status>, Details: {...}".
"""

import logging

import numpy as np
import pytest

from util.logging import StructuredLogger, log_config_issue, log_scan, logger


@pytest.fixture
def records(caplog):
    caplog.set_level(logging.DEBUG, logger="rydspec")
    return caplog


class TestStructuredLogger:

    def test_operation_format(self, records):
        logger.log_operation("spectra.tpat", "success", {"points": 3})
        assert "Operation: spectra.tpat, Status: success, Details: {'points': 3}" in records.text

    def test_operation_without_details(self, records):
        logger.log_operation("cli.map", "started")
        assert records.records[-1].getMessage() == "Operation: cli.map, Status: started"

    def test_values_are_compacted(self, records):
        logger.log_operation("doppler.grid", "built", {"nodes": np.zeros((5, 2)), "span": 1234.56789012})
        message = records.records[-1].getMessage()
        assert "<array shape=(5, 2)>" in message
        assert "1234.57" in message

    def test_scan_duration(self, records):
        log_scan("tpat_spectrum", 21, 10.0, 10.5, details={"threads": 2})
        message = records.records[-1].getMessage()
        assert message.startswith("Operation: scan.tpat_spectrum, Status: success")
        assert "'duration_ms': 500.0" in message
        assert "'threads': 2" in message

    def test_fit_levels(self, records):
        logger.log_fit("od", True, 12, 1e-9)
        assert records.records[-1].levelno == logging.INFO
        logger.log_fit("od", False, 1, 0.3)
        assert records.records[-1].levelno == logging.WARNING
        assert "Status: not_converged" in records.records[-1].getMessage()

    def test_solver_failure_is_error(self, records):
        logger.log_solver_failure(7, -3.5, "singular")
        record = records.records[-1]
        assert record.levelno == logging.ERROR
        assert "'node': 7" in record.getMessage()

    def test_config_issue(self, records):
        log_config_issue("ladder.n", "must be >= 5")
        assert "Operation: config.validate, Status: rejected" in records.text

    def test_level_from_argument(self):
        quiet = StructuredLogger("rydspec.test_quiet", level="error")
        assert quiet.logger.level == logging.ERROR
