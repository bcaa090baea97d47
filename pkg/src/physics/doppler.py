"""
Velocity-class averaging over the 1D Maxwell-Boltzmann distribution.

Three evaluators:
- trapezoid quadrature on a resonance-aware grid (build_grid, average_coherence)
- analytic average of the full steady state (analytic_average_state)
- analytic average of the weak-probe lower-leg response (weak_probe_average)

The analytic path uses that the steady state is a rational function of v.
Eliminating populations leaves the six coherences x_C with (S + v D) x_C = g,
D diagonal, so x_C(v) = sum_k V_k beta_k / (v - p_k). Each pole term averages to
the plasma dispersion function, evaluated with scipy.special.wofz.
"""

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import wofz
from scipy.stats import norm

from src.core.errors import DomainError, SteadyStateError
from src.core.parallel import ordered_map
from src.physics.lindblad import (COHERENCE_INDEX, DIM, E, G, POPULATION_INDEX, R, TRACE_ROW,
                                  build_generator, steady_states, vec_index, velocity_derivative)
from src.physics.types import (AbsorptionMap, DopplerEnvironment, GridPolicy, LadderSystem,
                               ScanSpec, VelocityGrid)
from util.logging import logger

TRUNCATION_SIGMAS = 4.5
WINDOW_WIDTHS = 5.0
PROBE_TOLERANCE = 1e-8
NEST_FACTOR = 8.0
NARROW_WIDTHS = 10.0
MAX_NEST_LEVELS = 4

GridLike = Union[VelocityGrid, GridPolicy]


def resonant_velocities(sys: LadderSystem) -> Tuple[float, float, float]:
    """(lower one-photon, upper one-photon, two-photon) resonant velocities in m/s.

    The two-photon velocity solves delta_l' + delta_u' = 0; it is nan when k_l == k_u.
    """
    v_lower = sys.delta_l / sys.k_l
    v_upper = -sys.delta_u / sys.k_u
    dk = sys.k_l - sys.k_u
    v_two_photon = (sys.delta_l + sys.delta_u) / dk if dk != 0 else math.nan
    return v_lower, v_upper, v_two_photon


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    weights = np.zeros_like(nodes)
    if nodes.size > 1:
        dx = np.diff(nodes)
        weights[:-1] += dx / 2.0
        weights[1:] += dx / 2.0
    else:
        weights[:] = 1.0
    return weights


def _maxwell_weights(nodes: np.ndarray, sigma: float) -> np.ndarray:
    weights = _trapezoid_weights(nodes) * norm.pdf(nodes, scale=sigma)
    total = weights.sum()
    if not total > 0:
        raise DomainError("velocity grid carries no Maxwell-Boltzmann weight")
    return weights / total


def window_half_width(sys: LadderSystem, base_spacing: float, margin: float = 0.0) -> float:
    return max(WINDOW_WIDTHS * (sys.gamma_l + sys.omega_l + sys.omega_u) / sys.k_l, base_spacing) + margin


def two_photon_half_widths(sys: LadderSystem, half: float) -> Tuple[float, ...]:
    """Half-widths of the nested windows around the two-photon velocity, widest first.

    Each shrinks by NEST_FACTOR until NARROW_WIDTHS two-photon linewidths
    gamma_gr/|k_l - k_u| are reached (at most MAX_NEST_LEVELS steps).
    """
    dk = abs(sys.k_l - sys.k_u)
    if dk == 0:
        return ()
    target = max(NARROW_WIDTHS * sys.gamma_gr / dk, half / NEST_FACTOR ** MAX_NEST_LEVELS)
    widths = []
    width = half / NEST_FACTOR
    while width > target:
        widths.append(width)
        width /= NEST_FACTOR
    if target < half:
        widths.append(target)
    return tuple(widths)


def build_grid(env: DopplerEnvironment, sys: LadderSystem, base_points: int = 2001,
               window_points: int = 401, margin: float = 0.0) -> VelocityGrid:
    """Uniform base grid over +-4.5 sigma_v plus refinement windows at the resonant velocities.

    Each resonance also gets a wing window NEST_FACTOR times wider. The
    two-photon velocity also gets nested windows down to its own linewidth.
    margin widens every window (m/s), e.g. to cover a modulated detuning.
    """
    sigma = env.sigma_v
    if not sigma > 0:
        raise DomainError(f"sigma_v must be > 0, got {sigma}")
    if base_points < 64 or window_points < 16:
        raise DomainError("base_points must be >= 64 and window_points >= 16")

    span = TRUNCATION_SIGMAS * sigma
    base = np.linspace(-span, span, base_points)
    half = window_half_width(sys, base[1] - base[0], margin)

    v_two_photon = resonant_velocities(sys)[2]
    candidates = [(center, half) for center in resonant_velocities(sys)]
    candidates += [(center, NEST_FACTOR * (half - margin) + margin) for center in resonant_velocities(sys)]
    candidates += [(v_two_photon, width + margin) for width in two_photon_half_widths(sys, half - margin)]

    pieces = [base]
    windows = []
    for center, width in candidates:
        if not math.isfinite(center):
            continue
        lo, hi = max(center - width, -span), min(center + width, span)
        if lo >= hi:
            continue
        windows.append((float(center), float(width)))
        pieces.append(np.linspace(lo, hi, window_points))

    nodes = np.unique(np.concatenate(pieces))
    keep = np.concatenate(([True], np.diff(nodes) > 1e-12 * span))
    nodes = nodes[keep]
    return VelocityGrid(nodes=nodes, weights=_maxwell_weights(nodes, sigma),
                        refinement_windows=tuple(windows))


def uniform_grid(env: DopplerEnvironment, v_min: float, v_max: float, points: int) -> VelocityGrid:
    """Evenly spaced velocity classes, weights renormalized over [v_min, v_max]."""
    if not (v_max > v_min and points >= 2):
        raise DomainError("uniform grid needs v_max > v_min and >= 2 points")
    nodes = np.linspace(v_min, v_max, points)
    return VelocityGrid(nodes=nodes, weights=_maxwell_weights(nodes, env.sigma_v))


def _probe_rabi(sys: LadderSystem, leg: str) -> float:
    if leg not in ("lower", "upper"):
        raise DomainError(f"leg must be lower or upper, got {leg!r}")
    rabi = sys.omega_l if leg == "lower" else sys.omega_u
    if not rabi > 0:
        raise DomainError(f"{leg}-leg coherence is undefined for a zero {leg}-leg Rabi rate")
    return rabi


def node_coherences(sys: LadderSystem, velocities: np.ndarray, leg: str) -> np.ndarray:
    """Normalized coherence rho_ge/(Omega_l/2) or rho_er/(Omega_u/2) per velocity class."""
    rabi = _probe_rabi(sys, leg)
    rho = steady_states(sys, velocities)
    element = rho[:, G, E] if leg == "lower" else rho[:, E, R]
    return element / (rabi / 2.0)


def _weighted_sum(weights: np.ndarray, values: np.ndarray) -> complex:
    # fsum is exact-rounded, so the result does not depend on summation order
    terms = weights * values
    return complex(math.fsum(terms.real), math.fsum(terms.imag))


def average_coherence(sys: LadderSystem, grid: VelocityGrid, leg: str) -> complex:
    """Grid average of one leg's normalized coherence."""
    return _weighted_sum(grid.weights, node_coherences(sys, grid.nodes, leg))


def average_coherences(sys: LadderSystem, grid: VelocityGrid) -> Tuple[complex, complex]:
    """(A_l, A_u) averaged over the grid; both Rabi rates must be > 0."""
    _probe_rabi(sys, "lower")
    _probe_rabi(sys, "upper")
    rho = steady_states(sys, grid.nodes)
    a_l = _weighted_sum(grid.weights, rho[:, G, E] / (sys.omega_l / 2.0))
    a_u = _weighted_sum(grid.weights, rho[:, E, R] / (sys.omega_u / 2.0))
    return a_l, a_u


def gaussian_resolvent(poles: np.ndarray, sigma: float) -> np.ndarray:
    """Average of 1/(v - p) over a zero-mean normal distribution of width sigma."""
    poles = np.asarray(poles, dtype=complex)
    z = poles / (math.sqrt(2.0) * sigma)
    prefactor = 1j * math.sqrt(math.pi / 2.0) / sigma
    upper = z.imag > 0
    out = np.empty_like(z)
    out[upper] = prefactor * wofz(z[upper])
    out[~upper] = -prefactor * np.conj(wofz(np.conj(z[~upper])))
    return out


def _pencil(sys: LadderSystem):
    A0 = build_generator(sys, 0.0).copy()
    A1 = velocity_derivative(sys).copy()
    A0[0, :] = TRACE_ROW
    A1[0, :] = 0.0
    b = np.zeros(DIM * DIM, dtype=complex)
    b[0] = 1.0
    return A0, A1, b


def _pole_expansion(sys: LadderSystem):
    """Poles p_k, mode vectors and the population back-substitution of the steady state."""
    if not (sys.gamma_l > 0 and sys.gamma_u > 0):
        raise DomainError("analytic Doppler average needs gamma_l > 0 and gamma_u > 0")
    if sys.k_l == sys.k_u:
        raise DomainError("analytic Doppler average needs k_l != k_u")

    A0, A1, b = _pencil(sys)
    P, C = POPULATION_INDEX, COHERENCE_INDEX
    d = np.diag(A1)[C]
    A_pp, A_pc, A_cp, A_cc = A0[np.ix_(P, P)], A0[np.ix_(P, C)], A0[np.ix_(C, P)], A0[np.ix_(C, C)]

    pp_b = np.linalg.solve(A_pp, b[P])
    pp_pc = np.linalg.solve(A_pp, A_pc)
    schur = A_cc - A_cp @ pp_pc
    g = -A_cp @ pp_b

    eigvals, modes = np.linalg.eig(schur / d[:, None])
    beta = np.linalg.solve(modes, g / d)
    return -eigvals, modes, beta, pp_b, pp_pc, (A0, A1, b)


def _assemble(x_c: np.ndarray, pp_b: np.ndarray, pp_pc: np.ndarray) -> np.ndarray:
    x = np.zeros(DIM * DIM, dtype=complex)
    x[COHERENCE_INDEX] = x_c
    x[POPULATION_INDEX] = pp_b - pp_pc @ x_c
    return x


def analytic_average_state(sys: LadderSystem, env: DopplerEnvironment) -> np.ndarray:
    """Density matrix averaged over the full Maxwell-Boltzmann distribution."""
    sigma = env.sigma_v
    poles, modes, beta, pp_b, pp_pc, (A0, A1, b) = _pole_expansion(sys)
    if np.any(poles.imag == 0):
        raise SteadyStateError("undamped velocity resonance: analytic average is undefined")

    for v in (-sigma, 0.37 * sigma, sigma):
        direct = np.linalg.solve(A0 + v * A1, b)
        expanded = _assemble(modes @ (beta / (v - poles)), pp_b, pp_pc)
        error = np.abs(direct - expanded).max() / np.abs(direct).max()
        if not error <= PROBE_TOLERANCE:
            logger.log_solver_failure(None, float(v), f"pole expansion mismatch {error:.3g}")
            raise SteadyStateError(f"pole expansion of the steady state is ill-conditioned "
                                   f"(mismatch {error:.3g}); use quadrature", velocity=float(v))

    x = _assemble(modes @ (beta * gaussian_resolvent(poles, sigma)), pp_b, pp_pc)
    rho = x.reshape(DIM, DIM).T
    return 0.5 * (rho + rho.conj().T)


def analytic_average_coherences(sys: LadderSystem, env: DopplerEnvironment) -> Tuple[complex, complex]:
    """Unnormalized averaged (<g|rho|e>, <e|rho|r>)."""
    rho = analytic_average_state(sys, env)
    return complex(rho[G, E]), complex(rho[E, R])


def _weak_probe_poles(sys: LadderSystem) -> Tuple[np.ndarray, np.ndarray]:
    """Poles and residues of the weak-probe response rho_ge/(Omega_l/2) as a function of v."""
    v_a = (sys.delta_l - 1j * sys.gamma_ge) / sys.k_l
    coupling = sys.omega_u ** 2 / 4.0
    dk = sys.k_l - sys.k_u
    if coupling == 0:
        return np.array([v_a]), np.array([-1.0 / sys.k_l])
    if dk == 0:
        two_photon = sys.gamma_gr + 1j * (sys.delta_l + sys.delta_u)
        return np.array([v_a - 1j * coupling / (sys.k_l * two_photon)]), np.array([-1.0 / sys.k_l])

    v_b = (sys.delta_l + sys.delta_u - 1j * sys.gamma_gr) / dk
    poles = np.roots([1.0, -(v_a + v_b), v_a * v_b - coupling / (sys.k_l * dk)])
    split = poles[0] - poles[1]
    if not abs(split) > 1e-12 * (abs(v_a) + abs(v_b)):
        raise SteadyStateError("degenerate weak-probe poles; use quadrature")
    residues = -(poles - v_b) / (sys.k_l * np.array([split, -split]))
    return poles, residues


def weak_probe_average(sys: LadderSystem, env: DopplerEnvironment) -> complex:
    """Maxwell-Boltzmann average of the weak-probe lower-leg response.

    Linear in Omega_l and so free of Rydberg shelving; valid for omega_l << gamma_l.
    """
    if not (sys.gamma_ge > 0 and sys.gamma_gr > 0):
        raise DomainError("weak-probe average needs gamma_ge > 0 and gamma_gr > 0")
    poles, residues = _weak_probe_poles(sys)
    if np.any(poles.imag == 0):
        raise SteadyStateError("undamped velocity resonance: weak-probe average is undefined")
    return complex(np.sum(residues * gaussian_resolvent(poles, env.sigma_v)))


def averaged_coherence(sys: LadderSystem, env: DopplerEnvironment, grid: GridLike,
                       leg: str, margin: float = 0.0) -> complex:
    """Normalized Doppler-averaged coherence of one leg under a grid or a grid policy."""
    if isinstance(grid, VelocityGrid):
        return average_coherence(sys, grid, leg)
    if grid.method == "weak_probe":
        if leg != "lower":
            raise DomainError("weak_probe averaging covers the lower leg only")
        return weak_probe_average(sys, env)
    if grid.method == "analytic":
        rabi = _probe_rabi(sys, leg)
        rho_ge, rho_er = analytic_average_coherences(sys, env)
        return (rho_ge if leg == "lower" else rho_er) / (rabi / 2.0)
    local = build_grid(env, sys, grid.base_points, grid.window_points, margin)
    return average_coherence(sys, local, leg)


def absorption_map(template: LadderSystem, scan: ScanSpec, grid: VelocityGrid, leg: str,
                   threads: int = 1) -> AbsorptionMap:
    """Im of the normalized coherence for every (scan point, velocity node)."""
    _probe_rabi(template, leg)
    axis = scan.axis()

    def row(delta: float) -> np.ndarray:
        return np.imag(node_coherences(template.with_detuning(scan.which, delta), grid.nodes, leg))

    values = np.vstack(ordered_map(row, axis, threads))
    return AbsorptionMap(scan_axis=axis, velocity_axis=grid.nodes.copy(), values=values,
                         weights=grid.weights.copy(), leg=leg, scanned=scan.which)


def column_argmax(amap: AbsorptionMap) -> np.ndarray:
    """Velocity of maximal absorption for every scan point."""
    return amap.velocity_axis[np.argmax(amap.values, axis=1)]


def branch_locus(amap: AbsorptionMap, sign: int = 1) -> np.ndarray:
    """Detuning of maximal absorption in the sign>0 (or <0) half of the scan, per velocity."""
    half = amap.scan_axis * sign > 0
    if not half.any():
        raise DomainError("scan axis has no points in the requested half")
    sub_axis = amap.scan_axis[half]
    return sub_axis[np.argmax(amap.values[half, :], axis=0)]


def turning_point(velocities: np.ndarray, locus: np.ndarray, sign: int = 1) -> Optional[Tuple[float, float]]:
    """(v, detuning) where the branch is stationary; None when the extremum is at an edge."""
    index = int(np.argmin(locus * sign))
    if index in (0, locus.size - 1):
        return None
    return float(velocities[index]), float(locus[index])
