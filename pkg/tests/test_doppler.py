"""
Tests for velocity grids, the quadrature, analytic and weak-probe Doppler averages, and absorption maps.
"""

import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.special import voigt_profile

from src.core.errors import DomainError
from src.core.units import to_angular
from src.physics.atomic_data import RB87, reference_environment, reference_system
from src.physics.doppler import (MAX_NEST_LEVELS, NARROW_WIDTHS, NEST_FACTOR, TRUNCATION_SIGMAS,
                                 absorption_map, analytic_average_state, average_coherence,
                                 average_coherences, averaged_coherence, branch_locus, build_grid,
                                 column_argmax, gaussian_resolvent, node_coherences,
                                 resonant_velocities, turning_point, two_photon_half_widths,
                                 uniform_grid, weak_probe_average)
from src.physics.lindblad import steady_states, weak_probe_chi_lower
from src.physics.types import DopplerEnvironment, GridPolicy, ScanSpec


@pytest.fixture
def hot():
    return reference_environment()


@pytest.fixture
def tpat_system():
    return reference_system("tpat")


@pytest.fixture
def eit_system():
    return reference_system("eit")


class TestResonantVelocities:
    """One- and two-photon resonance conditions of the generator."""

    def test_formulas(self, tpat_system):
        sys = tpat_system.replace(delta_l=to_angular(3e6), delta_u=to_angular(-5e6))
        v_l, v_u, v_12 = resonant_velocities(sys)
        assert v_l == pytest.approx(sys.delta_l / sys.k_l)
        assert v_u == pytest.approx(-sys.delta_u / sys.k_u)
        assert v_12 == pytest.approx((sys.delta_l + sys.delta_u) / (sys.k_l - sys.k_u))

    def test_detunings_vanish_at_resonance(self, tpat_system):
        sys = tpat_system.replace(delta_l=to_angular(3e6), delta_u=to_angular(-5e6))
        v_l, v_u, v_12 = resonant_velocities(sys)
        assert sys.doppler_detunings(v_l)[0] == pytest.approx(0, abs=1e-3)
        assert sys.doppler_detunings(v_u)[1] == pytest.approx(0, abs=1e-3)
        assert sum(sys.doppler_detunings(v_12)) == pytest.approx(0, abs=1e-3)

    def test_equal_wavevectors(self, tpat_system):
        sys = tpat_system.replace(k_u=tpat_system.k_l, delta_u=1.0)
        assert math.isnan(resonant_velocities(sys)[2])


class TestVelocityGrid:
    """Resonance-aware trapezoid grids."""

    def test_weights_normalized(self, hot, tpat_system):
        grid = build_grid(hot, tpat_system)
        assert math.fsum(grid.weights) == pytest.approx(1.0, abs=1e-12)
        assert np.all(grid.weights >= 0)

    def test_nodes_strictly_increasing_within_span(self, hot, tpat_system):
        grid = build_grid(hot, tpat_system.replace(delta_u=to_angular(4e6)))
        span = TRUNCATION_SIGMAS * hot.sigma_v
        assert np.all(np.diff(grid.nodes) > 0)
        assert grid.nodes[0] == pytest.approx(-span)
        assert grid.nodes[-1] == pytest.approx(span)

    def test_refinement_windows_at_resonances(self, hot, tpat_system):
        sys = tpat_system.replace(delta_u=to_angular(4e6))
        grid = build_grid(hot, sys)
        resonances = resonant_velocities(sys)
        np.testing.assert_allclose([c for c, _ in grid.refinement_windows[:3]], resonances, rtol=1e-12)
        half = grid.refinement_windows[0][1]
        wings = grid.refinement_windows[3:6]
        np.testing.assert_allclose([c for c, _ in wings], resonances, rtol=1e-12)
        assert all(w == pytest.approx(NEST_FACTOR * half) for _, w in wings)
        nested = grid.refinement_windows[6:]
        assert nested
        assert all(c == pytest.approx(resonances[2], rel=1e-12) for c, _ in nested)
        widths = [w for _, w in nested]
        assert widths == sorted(widths, reverse=True)
        assert widths[-1] == pytest.approx(NARROW_WIDTHS * sys.gamma_gr / abs(sys.k_l - sys.k_u))
        near = grid.nodes[np.abs(grid.nodes - resonances[2]) < widths[-1]]
        assert near.size > 100

    def test_nested_widths_are_bounded(self, tpat_system):
        half = 20.0
        widths = two_photon_half_widths(tpat_system.replace(gamma_u=0.0), half)
        assert len(widths) == MAX_NEST_LEVELS
        assert widths[-1] == pytest.approx(half / NEST_FACTOR ** MAX_NEST_LEVELS)
        assert two_photon_half_widths(tpat_system.replace(k_u=tpat_system.k_l), half) == ()
        assert two_photon_half_widths(tpat_system.replace(extra_dephasing_gr=1e9), half) == ()

    def test_margin_widens_windows(self, hot, tpat_system):
        plain = build_grid(hot, tpat_system)
        wide = build_grid(hot, tpat_system, margin=2.0)
        assert wide.refinement_windows[0][1] == pytest.approx(plain.refinement_windows[0][1] + 2.0)
        assert wide.refinement_windows[3][1] == pytest.approx(NEST_FACTOR * plain.refinement_windows[0][1] + 2.0)
        assert wide.refinement_windows[-1][1] == pytest.approx(plain.refinement_windows[-1][1] + 2.0)

    def test_too_few_points(self, hot, tpat_system):
        with pytest.raises(DomainError):
            build_grid(hot, tpat_system, base_points=10)

    def test_uniform_grid(self, hot):
        grid = uniform_grid(hot, -20, 20, 401)
        assert len(grid) == 401
        assert abs(grid.nodes[200]) < 1e-12
        assert math.fsum(grid.weights) == pytest.approx(1.0, abs=1e-12)

    def test_uniform_grid_empty_range(self, hot):
        with pytest.raises(DomainError):
            uniform_grid(hot, 1.0, 1.0, 10)


class TestGaussianResolvent:
    """Average of 1/(v - p) over a normal distribution."""

    @pytest.mark.parametrize("pole", [3 + 2j, -1.5 + 0.4j, 2 - 1j, -0.3 - 3j])
    def test_against_quadrature(self, pole):
        sigma = 1.3
        v = np.linspace(-14 * sigma, 14 * sigma, 400001)
        density = np.exp(-v ** 2 / (2 * sigma ** 2)) / (sigma * math.sqrt(2 * math.pi))
        expected = trapezoid(density / (v - pole), v)
        value = gaussian_resolvent(np.array([pole]), sigma)[0]
        assert abs(value - expected) <= 1e-8 * abs(expected)

    def test_far_pole_limit(self):
        """Far from the distribution the average tends to 1/(0 - p)."""
        pole = 1e4 + 1e3j
        value = gaussian_resolvent(np.array([pole]), 1.0)[0]
        assert value == pytest.approx(-1 / pole, rel=1e-6)


class TestDopplerAverage:
    """Quadrature and analytic evaluators agree."""

    def test_analytic_matches_quadrature(self, hot, tpat_system):
        for du in (0.0, to_angular(2.4e6), to_angular(-2.4e6)):
            sys = tpat_system.replace(delta_u=du)
            analytic = averaged_coherence(sys, hot, GridPolicy(method="analytic"), "upper")
            quadrature = averaged_coherence(sys, hot, GridPolicy(base_points=4001, window_points=801), "upper")
            assert abs(analytic - quadrature) <= 1e-3 * abs(analytic)

    def test_analytic_state_is_density_matrix(self, hot, tpat_system):
        rho = analytic_average_state(tpat_system, hot)
        assert np.abs(rho - rho.conj().T).max() <= 1e-14
        assert np.real(np.trace(rho)) == pytest.approx(1.0, abs=1e-10)

    def test_cold_limit_matches_single_class(self, tpat_system):
        cold = DopplerEnvironment.with_sigma(RB87, 1e-4)
        rho = analytic_average_state(tpat_system, cold)
        at_rest = steady_states(tpat_system, [0.0])[0]
        np.testing.assert_allclose(rho, at_rest, atol=1e-6)

    def test_quadrature_cold_limit_matches_single_class(self, tpat_system):
        cold = DopplerEnvironment.with_sigma(RB87, 1e-6)
        for leg in ("lower", "upper"):
            averaged = averaged_coherence(tpat_system, cold, GridPolicy(), leg)
            at_rest = node_coherences(tpat_system, np.array([0.0]), leg)[0]
            assert abs(averaged - at_rest) <= 1e-6 * abs(at_rest)

    def test_quadrature_converges_under_halved_spacing(self, hot, eit_system):
        for du in (0.0, to_angular(1.5e6)):
            sys = eit_system.replace(delta_u=du)
            default = averaged_coherence(sys, hot, GridPolicy(), "lower")
            fine = averaged_coherence(sys, hot, GridPolicy(base_points=4001, window_points=801), "lower")
            assert abs(default - fine) <= 1e-3 * abs(fine)

    @pytest.mark.parametrize("method, tolerance", [("analytic", 1e-6), ("quadrature", 1e-3), ("weak_probe", 1e-8)])
    @pytest.mark.parametrize("delta_hz", [0.0, 200e6, -500e6])
    def test_two_level_limit_is_voigt(self, hot, eit_system, method, tolerance, delta_hz):
        """Omega_u = 0 and a weak drive: Im A_l is pi times the Voigt profile."""
        sys = eit_system.replace(omega_u=0.0, omega_l=1e-4 * eit_system.gamma_l, delta_l=to_angular(delta_hz))
        value = averaged_coherence(sys, hot, GridPolicy(method=method), "lower").imag
        expected = math.pi * voigt_profile(sys.delta_l, sys.k_l * hot.sigma_v, sys.gamma_ge)
        assert value == pytest.approx(expected, rel=tolerance)

    def test_analytic_requires_decay(self, hot, tpat_system):
        with pytest.raises(DomainError):
            analytic_average_state(tpat_system.replace(gamma_u=0.0), hot)

    def test_analytic_requires_distinct_wavevectors(self, hot, tpat_system):
        with pytest.raises(DomainError):
            analytic_average_state(tpat_system.replace(k_u=tpat_system.k_l), hot)

    def test_explicit_grid_is_used_as_is(self, hot, tpat_system):
        grid = uniform_grid(hot, -500, 500, 257)
        assert averaged_coherence(tpat_system, hot, grid, "upper") == \
            average_coherence(tpat_system, grid, "upper")

    def test_both_legs_at_once(self, hot, tpat_system):
        grid = build_grid(hot, tpat_system)
        a_l, a_u = average_coherences(tpat_system, grid)
        assert a_l == pytest.approx(average_coherence(tpat_system, grid, "lower"), rel=1e-13)
        assert a_u == pytest.approx(average_coherence(tpat_system, grid, "upper"), rel=1e-13)

    def test_zero_probe_rabi_rejected(self, hot, tpat_system):
        grid = build_grid(hot, tpat_system)
        with pytest.raises(DomainError):
            average_coherence(tpat_system.replace(omega_u=0.0), grid, "upper")


class TestWeakProbeAverage:
    """Closed-form average of the linear lower-leg response."""

    def test_matches_full_model_for_weak_drive(self, hot, eit_system):
        sys = eit_system.replace(omega_l=to_angular(1e3), gamma_u=to_angular(1e6))
        for du in (0.0, to_angular(1e6), to_angular(-3e6)):
            detuned = sys.replace(delta_u=du)
            weak = weak_probe_average(detuned, hot)
            full = averaged_coherence(detuned, hot, GridPolicy(method="analytic"), "lower")
            assert abs(weak - full) <= 1e-3 * abs(full)

    def test_equal_wavevectors_against_quadrature(self, hot, eit_system):
        sys = eit_system.replace(k_u=eit_system.k_l, delta_u=to_angular(0.8e6))
        grid = uniform_grid(hot, -TRUNCATION_SIGMAS * hot.sigma_v, TRUNCATION_SIGMAS * hot.sigma_v, 20001)
        expected = complex(np.sum(grid.weights * weak_probe_chi_lower(sys, grid.nodes)))
        assert abs(weak_probe_average(sys, hot) - expected) <= 1e-4 * abs(expected)

    def test_transparency_grows_with_coupling(self, hot, eit_system):
        bare = weak_probe_average(eit_system.replace(omega_u=0.0), hot).imag
        dips = [bare - weak_probe_average(eit_system.replace(omega_u=to_angular(f)), hot).imag
                for f in (0.3e6, 0.6e6, 1.2e6)]
        assert 0 < dips[0] < dips[1] < dips[2]

    def test_upper_leg_rejected(self, hot, tpat_system):
        with pytest.raises(DomainError):
            averaged_coherence(tpat_system, hot, GridPolicy(method="weak_probe"), "upper")

    def test_requires_damping(self, hot, eit_system):
        with pytest.raises(DomainError):
            weak_probe_average(eit_system.replace(gamma_u=0.0), hot)


class TestAbsorptionMap:
    """Per-velocity absorption, its column sums and branch post-processing."""

    def test_shape_and_column_sums(self, hot, tpat_system):
        grid = uniform_grid(hot, -20, 20, 41)
        scan = ScanSpec("upper", -to_angular(10e6), to_angular(10e6), 11)
        amap = absorption_map(tpat_system, scan, grid, "upper")
        assert amap.values.shape == (11, 41)
        for delta, total in zip(scan.axis(), amap.column_sums()):
            expected = average_coherence(tpat_system.replace(delta_u=delta), grid, "upper").imag
            assert abs(total - expected) <= 1e-12 * np.abs(amap.values).max()

    def test_threads_do_not_change_values(self, hot, tpat_system):
        grid = uniform_grid(hot, -5, 5, 21)
        scan = ScanSpec("upper", -to_angular(5e6), to_angular(5e6), 9)
        serial = absorption_map(tpat_system, scan, grid, "upper", threads=1)
        threaded = absorption_map(tpat_system, scan, grid, "upper", threads=4)
        assert np.array_equal(serial.values, threaded.values)

    def test_lower_map_tracks_one_photon_line(self, hot, eit_system):
        """Away from the dressed region the column maximum sits on delta_l' = 0 (v = 0)."""
        grid = uniform_grid(hot, -20, 20, 401)
        scan = ScanSpec("upper", -to_angular(30e6), to_angular(30e6), 121)
        amap = absorption_map(eit_system, scan, grid, "lower")
        cell = grid.nodes[1] - grid.nodes[0]
        far = np.abs(scan.axis()) >= 4 * eit_system.omega_u
        v_line = resonant_velocities(eit_system)[0]
        assert np.all(np.abs(column_argmax(amap)[far] - v_line) <= cell)

    def test_lower_map_tracks_two_photon_line(self, hot, eit_system):
        """Off one-photon resonance the two-photon peak sits at v_12, light-shifted by Omega_u^2/(4 delta_u')."""
        sys = eit_system.replace(extra_dephasing_gr=to_angular(0.1e6))
        grid = uniform_grid(hot, -25, 25, 2501)
        scan = ScanSpec.symmetric("upper", to_angular(14e6), 57)
        amap = absorption_map(sys, scan, grid, "lower")
        cell = grid.nodes[1] - grid.nodes[0]
        dk = sys.k_l - sys.k_u
        checked = 0
        for row, delta_u in zip(amap.values, scan.axis()):
            if abs(delta_u) < to_angular(10e6) - 1.0:
                continue
            v_12 = resonant_velocities(sys.replace(delta_u=delta_u))[2]
            window = np.abs(grid.nodes - v_12) <= 1.0
            peak = grid.nodes[window][np.argmax(row[window])]
            light_shift = sys.omega_u ** 2 / (4 * abs(delta_u * sys.k_l / dk)) / abs(dk)
            assert abs(peak - v_12) <= cell + 2 * light_shift
            checked += 1
        assert checked == 18

    def test_tpat_turning_point_grows_with_drive(self, hot, tpat_system):
        """The dressed branch turns near 0.49 Omega_l and moves out as Omega_l grows."""
        grid = uniform_grid(hot, -20, 20, 401)
        scan = ScanSpec("upper", -to_angular(30e6), to_angular(30e6), 401)
        step = scan.axis()[1] - scan.axis()[0]
        c = 0.5 - tpat_system.k_u / tpat_system.k_l
        offsets = []
        for omega_hz in (2e6, 4.8e6, 10e6):
            sys = tpat_system.replace(omega_l=to_angular(omega_hz))
            amap = absorption_map(sys, scan, grid, "upper")
            found = turning_point(amap.velocity_axis, branch_locus(amap, +1), +1)
            assert found is not None
            _, delta_turn = found
            if sys.omega_l >= 2 * sys.gamma_l:
                # Dressing dominates the linewidth only for Omega_l well above Gamma_l
                expected = sys.omega_l * math.sqrt(1 - 4 * c ** 2) / 2
                assert abs(delta_turn - expected) <= step + 0.03 * sys.omega_l
            offsets.append(delta_turn)
        assert offsets[0] < offsets[1] < offsets[2]

    def test_turning_point_at_edge_is_none(self):
        velocities = np.linspace(-1, 1, 5)
        assert turning_point(velocities, np.array([1.0, 2, 3, 4, 5])) is None
        assert turning_point(velocities, np.array([3.0, 1, 2, 4, 5])) == (-0.5, 1.0)
