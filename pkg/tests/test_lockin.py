"""
Tests for the modulation-transfer error signal and its lock metrics.
"""

import math

import numpy as np
import pytest

from src.core.errors import DomainError
from src.core.units import to_angular
from src.physics.atomic_data import reference_environment, reference_system
from src.physics.lockin import error_signal, lock_metrics, modulation_phases, transmission_at
from src.physics.types import (ErrorSignal, GridPolicy, ModulationSpec, OpticalDepthCalibration,
                               ScanSpec)

ANALYTIC = GridPolicy(method="analytic")


@pytest.fixture
def hot():
    return reference_environment()


@pytest.fixture
def calibration():
    return OpticalDepthCalibration(d0_lower=1.0, d_peak_upper=1e-2)


def modulation(depth_hz, phase=None):
    return ModulationSpec(depth=to_angular(depth_hz), demod_phase=phase, samples_per_period=16)


def upper_scan(half_width_hz=10e6, points=41):
    return ScanSpec.symmetric("upper", to_angular(half_width_hz), points)


class TestModulationPhases:

    def test_one_period_without_endpoint(self):
        theta = modulation_phases(8)
        assert theta.size == 8
        assert theta[0] == 0.0
        assert theta[-1] == pytest.approx(2 * math.pi * 7 / 8)


class TestErrorSignal:
    """Demodulated upper-leg transmission of the TPAT ladder at 89 C."""

    def test_zero_depth_gives_zero_signal(self, hot, calibration):
        signal = error_signal(reference_system("tpat"), calibration, hot, upper_scan(), modulation(0.0), ANALYTIC)
        assert np.all(signal.values == 0.0)
        assert not signal.metrics.has_lock_point
        assert signal.zero_crossing is None

    def test_odd_in_upper_detuning(self, hot, calibration):
        signal = error_signal(reference_system("tpat"), calibration, hot, upper_scan(), modulation(1e6), ANALYTIC)
        scale = np.abs(signal.values).max()
        assert scale > 0
        np.testing.assert_allclose(signal.values, -signal.values[::-1], rtol=0, atol=1e-6 * scale)

    def test_auto_phase_is_in_phase_component(self, hot, calibration):
        signal = error_signal(reference_system("tpat"), calibration, hot, upper_scan(), modulation(1e6), ANALYTIC)
        assert abs(math.sin(signal.demod_phase)) <= 1e-6

    def test_lock_point_at_two_photon_resonance(self, hot, calibration):
        scan = upper_scan()
        signal = error_signal(reference_system("tpat"), calibration, hot, scan, modulation(1e6), ANALYTIC)
        step = scan.axis()[1] - scan.axis()[0]
        assert signal.metrics.has_lock_point
        assert abs(signal.zero_crossing) <= step
        assert signal.slope > 0

    def test_small_depth_is_derivative(self, hot, calibration):
        """For a shallow modulation the signal is depth times dT/d(delta_l)."""
        sys = reference_system("tpat")
        scan = upper_scan()
        depth = to_angular(50e3)
        signal = error_signal(sys, calibration, hot, scan, modulation(50e3), ANALYTIC)
        h = to_angular(5e3)
        scale = signal.absorption_scale
        peak = np.abs(signal.values).max()
        checked = 0
        for delta_u, value in zip(scan.axis(), signal.values):
            if abs(value) < 0.2 * peak:
                continue
            point = sys.with_detuning("upper", delta_u)
            t_plus = transmission_at(point.replace(delta_l=h), calibration, hot, ANALYTIC, scale)
            t_minus = transmission_at(point.replace(delta_l=-h), calibration, hot, ANALYTIC, scale)
            expected = math.cos(signal.demod_phase) * depth * (t_plus - t_minus) / (2 * h)
            assert value == pytest.approx(expected, rel=0.01)
            checked += 1
        assert checked > 0

    def test_linear_in_small_depth(self, hot, calibration):
        sys = reference_system("tpat")
        scan = upper_scan()
        one = error_signal(sys, calibration, hot, scan, modulation(50e3, phase=0.0), ANALYTIC)
        two = error_signal(sys, calibration, hot, scan, modulation(100e3, phase=0.0), ANALYTIC)
        strong = np.abs(one.values) >= 0.2 * np.abs(one.values).max()
        np.testing.assert_allclose(two.values[strong], 2 * one.values[strong], rtol=0.02)

    def test_fixed_phase_is_respected(self, hot, calibration):
        sys = reference_system("tpat")
        scan = upper_scan(points=21)
        in_phase = error_signal(sys, calibration, hot, scan, modulation(1e6, phase=0.0), ANALYTIC)
        flipped = error_signal(sys, calibration, hot, scan, modulation(1e6, phase=math.pi), ANALYTIC)
        assert flipped.demod_phase == math.pi
        np.testing.assert_allclose(flipped.values, -in_phase.values, rtol=1e-12, atol=1e-15)

    def test_capture_range_grows_and_slope_falls_with_drive(self, hot, calibration):
        """The central crossing sits between dressed dips at about +-0.49 Omega_l: wider capture, shallower slope."""
        scan = upper_scan(20e6, 81)
        ranges, slopes = [], []
        for omega_hz in (2.4e6, 4.8e6, 7.2e6, 9.6e6):
            sys = reference_system("tpat").replace(omega_l=to_angular(omega_hz))
            signal = error_signal(sys, calibration, hot, scan, modulation(1e6), ANALYTIC)
            assert signal.metrics.has_lock_point
            ranges.append(signal.capture_range)
            slopes.append(signal.metrics.slope)
        assert all(a <= b for a, b in zip(ranges, ranges[1:]))
        assert ranges[-1] > ranges[0]
        assert all(math.isfinite(s) and s > 0 for s in slopes)
        assert all(a > b for a, b in zip(slopes, slopes[1:]))

    def test_requires_upper_scan(self, hot, calibration):
        scan = ScanSpec.symmetric("lower", to_angular(5e6), 11)
        with pytest.raises(DomainError):
            error_signal(reference_system("tpat"), calibration, hot, scan, modulation(1e6), ANALYTIC)

    def test_odd_sample_count_rejected(self):
        with pytest.raises(DomainError):
            ModulationSpec(samples_per_period=15)


class TestLockMetrics:
    """Zero crossing, slope and capture range of synthetic discriminators."""

    def test_dispersive_shape(self):
        axis = np.linspace(-5, 5, 101)
        metrics = lock_metrics(ErrorSignal(axis, axis * np.exp(-axis ** 2 / 2), 0.0))
        assert metrics.has_lock_point
        assert metrics.zero_crossing == pytest.approx(0.0, abs=1e-12)
        assert metrics.slope == pytest.approx(1.0, rel=0.1)
        assert metrics.lower_extremum == pytest.approx(-1.0, abs=1e-9)
        assert metrics.upper_extremum == pytest.approx(1.0, abs=1e-9)
        assert metrics.capture_range == pytest.approx(2.0, abs=1e-9)
        assert not metrics.edge_limited

    def test_interpolated_crossing(self):
        axis = np.linspace(-1, 1, 10)
        metrics = lock_metrics(ErrorSignal(axis, axis - 0.05, 0.0))
        assert metrics.zero_crossing == pytest.approx(0.05, abs=1e-12)
        assert metrics.slope == pytest.approx(1.0)

    def test_monotone_signal_is_edge_limited(self):
        axis = np.linspace(-1, 1, 11)
        metrics = lock_metrics(ErrorSignal(axis, axis.copy(), 0.0))
        assert metrics.has_lock_point
        assert metrics.edge_limited
        assert metrics.capture_range == pytest.approx(2.0)

    def test_central_crossing_is_chosen(self):
        axis = np.linspace(-10, 10, 201)
        metrics = lock_metrics(ErrorSignal(axis, np.sin(axis), 0.0))
        assert metrics.zero_crossing == pytest.approx(0.0, abs=1e-12)
        assert metrics.capture_range == pytest.approx(math.pi, abs=0.1)

    def test_no_sign_change(self):
        axis = np.linspace(-1, 1, 11)
        metrics = lock_metrics(ErrorSignal(axis, 1.0 + axis ** 2, 0.0))
        assert not metrics.has_lock_point
        assert metrics.slope is None
        assert metrics.capture_range is None
