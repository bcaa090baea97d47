"""
Lindblad generator and steady state of one velocity class of the g-e-r ladder.

States are column-stacked: rho[i, j] sits at index i + 3*j of the 9-vector,
the convention of qutip's superoperators.
"""

from functools import lru_cache
from typing import Tuple

import numpy as np
import qutip

from src.core.errors import SteadyStateError
from src.physics.types import DensityMatrix, LadderSystem
from util.logging import logger

DIM = 3
G, E, R = 0, 1, 2

# Replaces row 0 of the generator: rho_gg + rho_ee + rho_rr = 1
TRACE_ROW = np.zeros(DIM * DIM, dtype=complex)
TRACE_ROW[[0, 4, 8]] = 1.0

POPULATION_INDEX = np.array([0, 4, 8])
COHERENCE_INDEX = np.array([1, 2, 3, 5, 6, 7])

RESIDUAL_TOLERANCE = 1e-10
POPULATION_TOLERANCE = 1e-10
CHUNK_SIZE = 2048


def vec_index(i: int, j: int) -> int:
    """Position of rho[i, j] in the column-stacked state."""
    return i + DIM * j


def _ket(i: int) -> qutip.Qobj:
    return qutip.basis(DIM, i)


def _projector(i: int) -> qutip.Qobj:
    return _ket(i) * _ket(i).dag()


def _transition(i: int, j: int) -> qutip.Qobj:
    return _ket(i) * _ket(j).dag()


@lru_cache(maxsize=None)
def _detuning_parts() -> Tuple[np.ndarray, np.ndarray]:
    """-i[H, .] for H = -(P_e + P_r) and H = -P_r (unit detunings)."""
    lower = qutip.liouvillian(-(_projector(E) + _projector(R))).full()
    upper = qutip.liouvillian(-_projector(R)).full()
    lower.setflags(write=False)
    upper.setflags(write=False)
    return lower, upper


def dephasing_operators(dephasing_ge: float, dephasing_gr: float):
    """Projector collapse operators that add exactly dephasing_ge to rho_ge and dephasing_gr to rho_gr.

    sqrt(2a)(P_e + P_r) dephases both ground coherences at a; sqrt(2|b - a|) on P_r
    (or P_e) adds the remainder. rho_er then dephases at |dephasing_gr - dephasing_ge|,
    which keeps the map completely positive.
    """
    common = min(dephasing_ge, dephasing_gr)
    extra = abs(dephasing_gr - dephasing_ge)
    ops = []
    if common > 0:
        ops.append(np.sqrt(2.0 * common) * (_projector(E) + _projector(R)))
    if extra > 0:
        level = R if dephasing_gr > dephasing_ge else E
        ops.append(np.sqrt(2.0 * extra) * _projector(level))
    return ops


@lru_cache(maxsize=256)
def _static_part(omega_l: float, omega_u: float, gamma_l: float, gamma_u: float,
                 dephasing_ge: float, dephasing_gr: float) -> np.ndarray:
    drive = (omega_l / 2.0) * (_transition(G, E) + _transition(E, G)) \
        + (omega_u / 2.0) * (_transition(E, R) + _transition(R, E))
    c_ops = [np.sqrt(gamma_l) * _transition(G, E), np.sqrt(gamma_u) * _transition(E, R)]
    c_ops += dephasing_operators(dephasing_ge, dephasing_gr)
    L = qutip.liouvillian(drive, c_ops).full()
    L.setflags(write=False)
    return L


def static_generator(sys: LadderSystem) -> np.ndarray:
    return _static_part(sys.omega_l, sys.omega_u, sys.gamma_l, sys.gamma_u,
                        sys.extra_dephasing_ge, sys.extra_dephasing_gr)


def build_generator(sys: LadderSystem, v: float = 0.0) -> np.ndarray:
    """9x9 generator L with d vec(rho)/dt = L vec(rho) for velocity class v."""
    dl, du = sys.doppler_detunings(v)
    lower, upper = _detuning_parts()
    return static_generator(sys) + dl * lower + du * upper


def velocity_derivative(sys: LadderSystem) -> np.ndarray:
    """dL/dv; the generator is affine in the velocity."""
    lower, upper = _detuning_parts()
    return -sys.k_l * lower + sys.k_u * upper


def build_generators(sys: LadderSystem, velocities: np.ndarray) -> np.ndarray:
    """Stack of generators, shape (N, 9, 9)."""
    dl, du = sys.doppler_detunings(np.asarray(velocities, dtype=float))
    lower, upper = _detuning_parts()
    return static_generator(sys)[None] + dl[:, None, None] * lower + du[:, None, None] * upper


def _check_dissipation(sys: LadderSystem):
    if max(sys.gamma_l, sys.gamma_u, sys.extra_dephasing_ge, sys.extra_dephasing_gr) == 0:
        logger.log_solver_failure(None, None, "all decay and dephasing rates are zero")
        raise SteadyStateError("no unique steady state: every decay and dephasing rate is zero")


def _solve_chunk(L: np.ndarray, velocities: np.ndarray, offset: int) -> np.ndarray:
    scale = np.abs(L).max(axis=(1, 2))
    A = L / scale[:, None, None]
    A[:, 0, :] = TRACE_ROW
    b = np.zeros((L.shape[0], DIM * DIM, 1), dtype=complex)
    b[:, 0, 0] = 1.0

    try:
        x = np.linalg.solve(A, b)[..., 0]
    except np.linalg.LinAlgError:
        for i in range(A.shape[0]):
            try:
                np.linalg.solve(A[i], b[i])
            except np.linalg.LinAlgError as e:
                logger.log_solver_failure(offset + i, float(velocities[i]), "singular generator")
                raise SteadyStateError("no unique steady state: singular generator",
                                       node=offset + i, velocity=float(velocities[i])) from e
        raise
    # One refinement step against round-off in the batched solve
    x = x + np.linalg.solve(A, b - A @ x[..., None])[..., 0]

    residual = np.abs(np.einsum("nij,nj->ni", L, x)).max(axis=1) / (scale * np.abs(x).max(axis=1))
    populations = np.real(x[:, POPULATION_INDEX])
    ill_conditioned = (~np.isfinite(residual)) | (residual > RESIDUAL_TOLERANCE)
    unphysical = (populations.min(axis=1) < -POPULATION_TOLERANCE) \
        | (populations.max(axis=1) > 1 + POPULATION_TOLERANCE)
    bad = ill_conditioned | unphysical
    if bad.any():
        i = int(np.argmax(bad))
        if ill_conditioned[i]:
            reason = f"ill-conditioned generator (residual {residual[i]:.3g})"
        else:
            reason = (f"unphysical populations (min {populations[i].min():.3g}, "
                      f"max {populations[i].max():.3g})")
        logger.log_solver_failure(offset + i, float(velocities[i]), reason)
        raise SteadyStateError(f"no unique steady state: {reason}",
                               node=offset + i, velocity=float(velocities[i]))
    return x


def steady_states(sys: LadderSystem, velocities) -> np.ndarray:
    """Steady states of many velocity classes, shape (N, 3, 3)."""
    _check_dissipation(sys)
    velocities = np.atleast_1d(np.asarray(velocities, dtype=float))
    out = np.empty((velocities.size, DIM * DIM), dtype=complex)
    for start in range(0, velocities.size, CHUNK_SIZE):
        chunk = velocities[start:start + CHUNK_SIZE]
        out[start:start + chunk.size] = _solve_chunk(build_generators(sys, chunk), chunk, start)

    rho = out.reshape(-1, DIM, DIM).transpose(0, 2, 1)
    rho = 0.5 * (rho + rho.conj().transpose(0, 2, 1))
    trace = np.real(np.trace(rho, axis1=1, axis2=2))
    return rho / trace[:, None, None]


def steady_state(sys: LadderSystem, v: float = 0.0) -> DensityMatrix:
    """Unique stationary density matrix of velocity class v."""
    return DensityMatrix(steady_states(sys, [v])[0])


def weak_probe_chi_lower(sys: LadderSystem, v=0.0):
    """Linear-response rho_ge / (Omega_l / 2) for a weak lower-leg probe.

    Valid for omega_l <= 1e-2 * gamma_l. Accepts scalar or array velocities.
    """
    dl, du = sys.doppler_detunings(np.asarray(v, dtype=float))
    one_photon = sys.gamma_ge + 1j * dl
    if sys.omega_u == 0:
        return 1j / one_photon
    # Multiplied through by the two-photon denominator so a perfect dark state gives 0, not nan
    two_photon = sys.gamma_gr + 1j * (dl + du)
    return 1j * two_photon / (one_photon * two_photon + sys.omega_u ** 2 / 4.0)


def coherences(rho: DensityMatrix) -> Tuple[complex, complex]:
    """(<g|rho|e>, <e|rho|r>); Im of each is proportional to that leg's absorption."""
    return complex(rho.data[G, E]), complex(rho.data[E, R])
