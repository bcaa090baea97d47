"""
Rb-87 ladder constants and principal-quantum-number scaling laws.
Rydberg rates are anchored at n_ref and scaled with the effective quantum number n* = n - defect.
"""

import math
from typing import Optional

from scipy import constants

from src.core.errors import DomainError
from src.core.units import CELSIUS_OFFSET, to_angular
from src.physics.types import AtomSpec, DopplerEnvironment, LadderSystem

MIN_N = 5

RB87 = AtomSpec(
    mass=86.909180527 * constants.atomic_mass,
    lower_wavelength=420e-9,
    upper_wavelength=1020e-9,
    gamma_lower=to_angular(1.4e6),
    gamma_upper_ref=to_angular(11e3),
    n_ref=30,
    quantum_defect=3.131,
    name="Rb87",
)

# Working vapor temperature (89 C)
REFERENCE_TEMPERATURE_K = 89.0 + CELSIUS_OFFSET

# Rabi rates (Hz) of the weak-probe EIT and strong-dressing TPAT configurations
REFERENCE_RABI_HZ = {
    "eit": {"omega_l": 40e3, "omega_u": 1.2e6},
    "tpat": {"omega_l": 4.8e6, "omega_u": 36e3},
}


def _check_n(n: int):
    if isinstance(n, bool) or int(n) != n:
        raise DomainError(f"principal quantum number must be an integer, got {n!r}")
    if n < MIN_N:
        raise DomainError(f"principal quantum number must be >= {MIN_N}, got {n}")


def effective_principal(n: int, atom: AtomSpec = RB87) -> float:
    """n* = n - quantum_defect."""
    _check_n(n)
    return n - atom.quantum_defect


def _ratio(n: int, atom: AtomSpec) -> float:
    return effective_principal(atom.n_ref, atom) / effective_principal(n, atom)


def scale_gamma_upper(n: int, atom: AtomSpec = RB87) -> float:
    """Rydberg decay rate at n, cubic in n*_ref / n*."""
    return atom.gamma_upper_ref * _ratio(n, atom) ** 3


def scale_omega_upper(n: int, omega_ref: float, atom: AtomSpec = RB87) -> float:
    """Upper-leg Rabi rate at n for fixed intensity, (n*_ref / n*)^{3/2}."""
    if omega_ref < 0:
        raise DomainError(f"omega_ref must be >= 0, got {omega_ref}")
    return omega_ref * _ratio(n, atom) ** 1.5


def doppler_sigma(env: DopplerEnvironment, atom: AtomSpec = RB87) -> float:
    """1D Maxwell-Boltzmann rms speed sqrt(k_B T / m) in m/s."""
    if not env.temperature > 0:
        raise DomainError(f"temperature must be > 0 K, got {env.temperature}")
    return math.sqrt(constants.k * env.temperature / atom.mass)


def ladder_for_atom(atom: AtomSpec, omega_l: float, omega_u: float, delta_l: float = 0.0,
                    delta_u: float = 0.0, n: Optional[int] = None,
                    extra_dephasing_ge: float = 0.0, extra_dephasing_gr: float = 0.0) -> LadderSystem:
    """Ladder system using the atom's wavevectors and decay rates (Gamma_u scaled to n if given)."""
    gamma_u = atom.gamma_upper_ref if n is None else scale_gamma_upper(n, atom)
    return LadderSystem(
        delta_l=delta_l,
        delta_u=delta_u,
        omega_l=omega_l,
        omega_u=omega_u,
        gamma_l=atom.gamma_lower,
        gamma_u=gamma_u,
        k_l=atom.k_lower,
        k_u=atom.k_upper,
        extra_dephasing_ge=extra_dephasing_ge,
        extra_dephasing_gr=extra_dephasing_gr,
    )


def scale_ladder_to_n(sys: LadderSystem, n: int, atom: AtomSpec = RB87) -> LadderSystem:
    """Rescale Omega_u and Gamma_u of a system specified at atom.n_ref to level n."""
    ratio = _ratio(n, atom)
    return sys.replace(omega_u=sys.omega_u * ratio ** 1.5, gamma_u=sys.gamma_u * ratio ** 3)


def reference_system(mode: str, atom: AtomSpec = RB87, delta_l: float = 0.0, delta_u: float = 0.0) -> LadderSystem:
    """Rb-87 ladder at n_ref with the working Rabi rates of mode eit or tpat."""
    if mode not in REFERENCE_RABI_HZ:
        raise DomainError(f"mode must be one of {sorted(REFERENCE_RABI_HZ)}, got {mode!r}")
    rabi = REFERENCE_RABI_HZ[mode]
    return ladder_for_atom(atom, to_angular(rabi["omega_l"]), to_angular(rabi["omega_u"]),
                           delta_l=delta_l, delta_u=delta_u)


def reference_environment(atom: AtomSpec = RB87) -> DopplerEnvironment:
    return DopplerEnvironment.for_atom(atom, REFERENCE_TEMPERATURE_K)
