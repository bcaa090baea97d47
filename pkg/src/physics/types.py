"""
Domain types for ladder spectroscopy: atoms, ladder systems, density matrices,
velocity grids, spectra, lock signals and noise fits.
Rates and detunings are angular frequencies (rad/s); temperatures are kelvin.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import constants

from src.core.errors import DomainError
from src.core.units import to_angular

LEGS = ("lower", "upper")
GRID_METHODS = ("quadrature", "analytic", "weak_probe")


def _require(condition: bool, message: str):
    if not condition:
        raise DomainError(message)


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class AtomSpec:
    """Species constants for a two-photon ladder."""

    mass: float
    """Atomic mass in kg"""

    lower_wavelength: float
    """Ground to intermediate transition wavelength in m"""

    upper_wavelength: float
    """Intermediate to Rydberg transition wavelength in m"""

    gamma_lower: float
    """Intermediate-state decay rate Gamma_l in rad/s"""

    gamma_upper_ref: float
    """Rydberg-state decay rate Gamma_u at n_ref in rad/s"""

    n_ref: int
    """Principal quantum number the reference rates belong to"""

    quantum_defect: float
    """Quantum defect of the Rydberg series"""

    name: str = "custom"

    def __post_init__(self):
        _require(self.mass > 0, f"mass must be > 0, got {self.mass}")
        _require(self.lower_wavelength > 0 and self.upper_wavelength > 0, "wavelengths must be > 0")
        _require(self.gamma_lower >= 0 and self.gamma_upper_ref >= 0, "decay rates must be >= 0")
        _require(self.n_ref >= 5, f"n_ref must be >= 5, got {self.n_ref}")

    @property
    def is_inverted(self) -> bool:
        """True when the lower leg has the shorter wavelength (Doppler shifts add)."""
        return self.lower_wavelength < self.upper_wavelength

    @property
    def k_lower(self) -> float:
        return 2.0 * math.pi / self.lower_wavelength

    @property
    def k_upper(self) -> float:
        return 2.0 * math.pi / self.upper_wavelength

    def replace(self, **changes) -> "AtomSpec":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DopplerEnvironment:
    """Vapor temperature; the thermal velocity spread is derived, never stored."""

    temperature: float
    """Temperature in K"""

    mass: float
    """Mass of the probed species in kg"""

    def __post_init__(self):
        _require(math.isfinite(self.temperature) and self.temperature > 0,
                 f"temperature must be > 0 K, got {self.temperature}")
        _require(self.mass > 0, f"mass must be > 0, got {self.mass}")

    @property
    def sigma_v(self) -> float:
        """1D rms thermal speed sqrt(k_B T / m) in m/s."""
        return math.sqrt(constants.k * self.temperature / self.mass)

    @classmethod
    def for_atom(cls, atom: AtomSpec, temperature: float) -> "DopplerEnvironment":
        return cls(temperature=temperature, mass=atom.mass)

    @classmethod
    def with_sigma(cls, atom: AtomSpec, sigma_v: float) -> "DopplerEnvironment":
        """Environment whose thermal spread equals sigma_v (cold-limit studies)."""
        _require(sigma_v > 0, f"sigma_v must be > 0, got {sigma_v}")
        return cls(temperature=atom.mass * sigma_v ** 2 / constants.k, mass=atom.mass)


@dataclass(frozen=True)
class LadderSystem:
    """All parameters of one g-e-r ladder in the rotating frame."""

    delta_l: float
    delta_u: float
    omega_l: float
    omega_u: float
    gamma_l: float
    gamma_u: float
    k_l: float
    k_u: float
    extra_dephasing_ge: float = 0.0
    extra_dephasing_gr: float = 0.0

    def __post_init__(self):
        _require(_finite(*dataclasses.astuple(self)), "ladder parameters must be finite")
        for name in ("omega_l", "omega_u", "gamma_l", "gamma_u",
                     "extra_dephasing_ge", "extra_dephasing_gr"):
            _require(getattr(self, name) >= 0, f"{name} must be >= 0, got {getattr(self, name)}")
        _require(self.k_l > 0 and self.k_u > 0, "wavevectors must be > 0")

    @property
    def gamma_ge(self) -> float:
        """Total decay rate of the g-e coherence."""
        return self.gamma_l / 2.0 + self.extra_dephasing_ge

    @property
    def gamma_gr(self) -> float:
        """Total decay rate of the g-r coherence."""
        return self.gamma_u / 2.0 + self.extra_dephasing_gr

    def doppler_detunings(self, v):
        """(delta_l', delta_u') seen by atoms moving at v (counter-propagating beams)."""
        return self.delta_l - self.k_l * v, self.delta_u + self.k_u * v

    def at_velocity(self, v: float) -> "LadderSystem":
        """Equivalent stationary-atom system for velocity class v."""
        dl, du = self.doppler_detunings(v)
        return dataclasses.replace(self, delta_l=dl, delta_u=du)

    def with_detuning(self, which: str, value: float) -> "LadderSystem":
        _require(which in LEGS, f"scan leg must be lower or upper, got {which!r}")
        if which == "lower":
            return dataclasses.replace(self, delta_l=value)
        return dataclasses.replace(self, delta_u=value)

    def replace(self, **changes) -> "LadderSystem":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """3x3 density matrix over (|g>, |e>, |r>)."""

    data: np.ndarray

    def __post_init__(self):
        _require(np.shape(self.data) == (3, 3), f"density matrix must be 3x3, got {np.shape(self.data)}")

    @classmethod
    def ground(cls) -> "DensityMatrix":
        data = np.zeros((3, 3), dtype=complex)
        data[0, 0] = 1.0
        return cls(data)

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.data))

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))


@dataclass(frozen=True, eq=False)
class VelocityGrid:
    """Quadrature nodes with Maxwell-Boltzmann mass folded into the weights."""

    nodes: np.ndarray
    """Strictly increasing velocities in m/s"""

    weights: np.ndarray
    """Quadrature weight times normal density; sums to one"""

    refinement_windows: Tuple[Tuple[float, float], ...] = ()
    """(center, half-width) of every refinement window in m/s"""

    def __post_init__(self):
        _require(self.nodes.ndim == 1 and self.nodes.shape == self.weights.shape,
                 "nodes and weights must be 1-D arrays of equal length")
        _require(self.nodes.size >= 1, "velocity grid is empty")
        _require(bool(np.all(np.diff(self.nodes) > 0)), "grid nodes must be strictly increasing")

    def __len__(self) -> int:
        return int(self.nodes.size)


@dataclass(frozen=True)
class GridPolicy:
    """How a Doppler average is evaluated at every scan point."""

    method: str = "quadrature"
    """quadrature (resonance-aware trapezoid grid), analytic (pole expansion) or
    weak_probe (closed-form linear response of the lower leg)"""

    base_points: int = 2001
    window_points: int = 401

    def __post_init__(self):
        _require(self.method in GRID_METHODS,
                 f"grid method must be one of {', '.join(GRID_METHODS)}, got {self.method!r}")
        _require(self.base_points >= 64, f"base_points must be >= 64, got {self.base_points}")
        _require(self.window_points >= 16, f"window_points must be >= 16, got {self.window_points}")


@dataclass(frozen=True)
class ScanSpec:
    """A linear detuning scan of one leg."""

    which: str
    start: float
    stop: float
    points: int

    def __post_init__(self):
        _require(self.which in LEGS, f"scan leg must be lower or upper, got {self.which!r}")
        _require(_finite(self.start, self.stop), "scan range must be finite")
        _require(self.stop > self.start, f"empty scan range [{self.start}, {self.stop}]")
        _require(self.points >= 2, f"scan needs >= 2 points, got {self.points}")

    def axis(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)

    @classmethod
    def symmetric(cls, which: str, half_width: float, points: int) -> "ScanSpec":
        return cls(which, -half_width, half_width, points)


@dataclass(frozen=True, eq=False)
class AbsorptionMap:
    """Per-velocity normalized absorption before the Doppler sum."""

    scan_axis: np.ndarray
    velocity_axis: np.ndarray
    values: np.ndarray
    """values[i_scan, j_velocity]"""

    weights: np.ndarray
    leg: str
    scanned: str

    def __post_init__(self):
        _require(self.values.shape == (self.scan_axis.size, self.velocity_axis.size),
                 "map values must match (scan, velocity) axes")

    def column_sums(self) -> np.ndarray:
        """Weighted velocity sum at every scan point."""
        return self.values @ self.weights


@dataclass(frozen=True)
class OpticalDepthCalibration:
    """Reference optical depths fixing the Beer-Lambert scale of each leg."""

    d0_lower: float = 1.0
    """Resonant two-level Doppler-averaged OD of the lower leg"""

    d_peak_upper: float = 1e-2
    """Peak upper-leg OD at the two-photon Autler-Townes resonance"""

    def __post_init__(self):
        _require(self.d0_lower >= 0 and self.d_peak_upper >= 0, "optical depths must be >= 0")


@dataclass(eq=False)
class TransmissionSpectrum:
    """Transmission of one leg versus the scanned detuning."""

    scan_axis: np.ndarray
    transmission: np.ndarray
    leg: str
    scanned: str
    metadata: Dict[str, Any] = field(default_factory=dict)
    absorption: Optional[np.ndarray] = None
    """Doppler-averaged Im coherence (normalized) behind the transmission"""

    reference: Optional[np.ndarray] = None
    """Single-photon-only transmission on the same axis (EIT background)"""

    def __post_init__(self):
        _require(bool(np.all(np.diff(self.scan_axis) > 0)), "scan axis must be strictly increasing")
        _require(bool(np.all((self.transmission > 0) & (self.transmission <= 1))),
                 "transmission must lie in (0, 1]")


@dataclass
class FeatureMetrics:
    """Depth, width, splitting and contrast of a spectral feature."""

    depth: float
    contrast: float
    resolved: bool
    fwhm: Optional[float] = None
    at_splitting: Optional[float] = None
    extremum_detuning: Optional[float] = None
    baseline: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ModulationSpec:
    """Frequency modulation applied to the lower-leg detuning."""

    f_mod: float = 3e5
    """Modulation frequency in Hz"""

    depth: float = to_angular(1e6)
    """Peak deviation of delta_l in rad/s"""

    demod_phase: Optional[float] = None
    """Demodulation phase in rad; None selects the phase of maximal central slope"""

    samples_per_period: int = 64

    def __post_init__(self):
        _require(self.f_mod > 0, f"f_mod must be > 0, got {self.f_mod}")
        _require(self.depth >= 0, f"modulation depth must be >= 0, got {self.depth}")
        _require(self.samples_per_period >= 8 and self.samples_per_period % 2 == 0,
                 f"samples_per_period must be even and >= 8, got {self.samples_per_period}")


@dataclass
class LockMetrics:
    """Lock point of a discriminator signal."""

    has_lock_point: bool
    zero_crossing: Optional[float] = None
    slope: Optional[float] = None
    capture_range: Optional[float] = None
    lower_extremum: Optional[float] = None
    upper_extremum: Optional[float] = None
    edge_limited: bool = False
    """An extremum of the central lobe sits at a scan endpoint"""

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(eq=False)
class ErrorSignal:
    """Demodulated upper-leg transmission versus delta_u."""

    scan_axis: np.ndarray
    values: np.ndarray
    demod_phase: float
    absorption_scale: Optional[float] = None
    metrics: Optional[LockMetrics] = None

    @property
    def zero_crossing(self) -> Optional[float]:
        return self.metrics.zero_crossing if self.metrics else None

    @property
    def slope(self) -> Optional[float]:
        return self.metrics.slope if self.metrics else None

    @property
    def capture_range(self) -> Optional[float]:
        return self.metrics.capture_range if self.metrics else None


@dataclass(frozen=True)
class NoiseModelOD:
    """Transmission noise versus optical depth: sqrt((a sqrt(D) e^{-bD})^2 + c^2)."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        _require(min(self.a, self.b, self.c) >= 0, "NoiseModelOD parameters must be >= 0")


@dataclass(frozen=True)
class NoiseModelWaist:
    """Transmission noise versus beam waist: sqrt(a^2 / w^2 + b^2)."""

    a: float
    b: float

    def __post_init__(self):
        _require(min(self.a, self.b) >= 0, "NoiseModelWaist parameters must be >= 0")


@dataclass(eq=False)
class DataSeries:
    """Measured (x, y) pairs with optional metadata from header comments."""

    x: np.ndarray
    y: np.ndarray
    bandwidth_hz: Optional[float] = None
    x_unit: str = ""
    y_unit: str = ""


@dataclass(eq=False)
class FitResult:
    """Least-squares fit outcome."""

    model_kind: str
    params: Dict[str, float]
    covariance: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    message: str = ""

    def model(self):
        if self.model_kind == "od":
            return NoiseModelOD(**self.params)
        return NoiseModelWaist(**self.params)

    def std_errors(self) -> Dict[str, float]:
        diag = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        return dict(zip(self.params, diag.tolist()))


@dataclass(frozen=True)
class SignalToNoise:
    """SNR value; inf with noise_floor_limited=True when the ideal denominator vanishes."""

    value: float
    mode: str
    noise_floor_limited: bool = False


@dataclass(eq=False)
class ScanNRow:
    """One principal quantum number of the n-scan benchmark."""

    n: int
    eit_amplitude: float
    tpat_amplitude: float
    eit_snr_raw: float = math.nan
    eit_snr_ideal: float = math.nan
    tpat_snr_raw: float = math.nan
    tpat_snr_ideal: float = math.nan
    tpat_spectrum: Optional[TransmissionSpectrum] = None
    eit_spectrum: Optional[TransmissionSpectrum] = None

    def csv_fields(self) -> List[float]:
        return [self.n, self.eit_amplitude, self.tpat_amplitude, self.eit_snr_raw,
                self.eit_snr_ideal, self.tpat_snr_raw, self.tpat_snr_ideal]
