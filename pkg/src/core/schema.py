"""
Run-configuration schema: one pydantic model per [section] of a config file.
Files carry ordinary frequencies in Hz; the to_* methods hand rad/s domain objects to the physics layer.
"""

from typing import Annotated, List, Literal, Optional

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, field_validator, model_validator
from scipy import constants

from src.core.units import parse_temperature, to_angular
from src.physics.atomic_data import RB87, ladder_for_atom
from src.physics.types import (AtomSpec, DopplerEnvironment, GridPolicy, LadderSystem, ModulationSpec,
                               OpticalDepthCalibration, ScanSpec)


def _blank_to_none(v):
    if isinstance(v, str) and v.strip().lower() in ("", "none", "auto"):
        return None
    return v


BlankInt = Annotated[Optional[int], BeforeValidator(_blank_to_none)]
BlankFloat = Annotated[Optional[float], BeforeValidator(_blank_to_none)]


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RunSection(Section):
    threads: int = Field(1, ge=1)


class AtomSection(Section):
    mass_u: float = Field(86.909180527, gt=0)
    lower_wavelength_nm: float = Field(420.0, gt=0)
    upper_wavelength_nm: float = Field(1020.0, gt=0)
    gamma_lower_hz: float = Field(1.4e6, ge=0)
    gamma_upper_ref_hz: float = Field(11e3, ge=0)
    n_ref: int = Field(RB87.n_ref, ge=5)
    quantum_defect: float = RB87.quantum_defect

    def to_atom(self) -> AtomSpec:
        return AtomSpec(
            mass=self.mass_u * constants.atomic_mass,
            lower_wavelength=self.lower_wavelength_nm * 1e-9,
            upper_wavelength=self.upper_wavelength_nm * 1e-9,
            gamma_lower=to_angular(self.gamma_lower_hz),
            gamma_upper_ref=to_angular(self.gamma_upper_ref_hz),
            n_ref=self.n_ref,
            quantum_defect=self.quantum_defect,
            name="configured",
        )


class LadderSection(Section):
    delta_lower_hz: float = 0.0
    delta_upper_hz: float = 0.0
    omega_lower_hz: float = Field(4.8e6, ge=0)
    omega_upper_hz: float = Field(36e3, ge=0)
    n: BlankInt = Field(None, ge=5)
    dephasing_ge_hz: float = Field(0.0, ge=0)
    dephasing_gr_hz: float = Field(0.0, ge=0)

    def to_ladder(self, atom: AtomSpec) -> LadderSystem:
        return ladder_for_atom(
            atom,
            omega_l=to_angular(self.omega_lower_hz),
            omega_u=to_angular(self.omega_upper_hz),
            delta_l=to_angular(self.delta_lower_hz),
            delta_u=to_angular(self.delta_upper_hz),
            n=self.n,
            extra_dephasing_ge=to_angular(self.dephasing_ge_hz),
            extra_dephasing_gr=to_angular(self.dephasing_gr_hz),
        )


class EnvironmentSection(Section):
    temperature: float = 362.15
    """Kelvin after parsing; accepts 89C, 89 °C, 362.15K or a bare kelvin number"""

    sigma_v_mps: BlankFloat = Field(None, gt=0)
    """Overrides the temperature with an explicit thermal spread (cold-limit runs)"""

    @field_validator("temperature", mode="before")
    @classmethod
    def temperature_to_kelvin(cls, v):
        return parse_temperature(v)

    def to_environment(self, atom: AtomSpec) -> DopplerEnvironment:
        if self.sigma_v_mps is not None:
            return DopplerEnvironment.with_sigma(atom, self.sigma_v_mps)
        return DopplerEnvironment.for_atom(atom, self.temperature)


class CalibrationSection(Section):
    d0_lower: float = Field(1.0, ge=0)
    d_peak_upper: float = Field(1e-2, ge=0)

    def to_calibration(self) -> OpticalDepthCalibration:
        return OpticalDepthCalibration(self.d0_lower, self.d_peak_upper)


class GridSection(Section):
    method: Literal["quadrature", "analytic", "weak_probe"] = "quadrature"
    base_points: int = Field(2001, ge=64)
    window_points: int = Field(401, ge=16)

    def to_policy(self) -> GridPolicy:
        return GridPolicy(self.method, self.base_points, self.window_points)


class ScanSection(Section):
    which: Literal["lower", "upper"] = "upper"
    start_hz: float = -15e6
    stop_hz: float = 15e6
    points: int = Field(301, ge=2)

    @model_validator(mode="after")
    def range_not_empty(self):
        if not self.stop_hz > self.start_hz:
            raise ValueError(f"stop_hz must exceed start_hz (empty scan range "
                             f"[{self.start_hz}, {self.stop_hz}])")
        return self

    def to_scan(self) -> ScanSpec:
        return ScanSpec(self.which, to_angular(self.start_hz), to_angular(self.stop_hz), self.points)


class MapSection(Section):
    leg: Literal["lower", "upper"] = "upper"
    velocity_min_mps: float = -20.0
    velocity_max_mps: float = 20.0
    velocity_points: int = Field(400, ge=2)

    @model_validator(mode="after")
    def range_not_empty(self):
        if not self.velocity_max_mps > self.velocity_min_mps:
            raise ValueError("velocity_max_mps must exceed velocity_min_mps")
        return self


class ModulationSection(Section):
    f_mod_hz: float = Field(3e5, gt=0)
    depth_hz: float = Field(1e6, ge=0)
    demod_phase_rad: BlankFloat = None
    samples_per_period: int = Field(64, ge=8)

    @field_validator("samples_per_period")
    @classmethod
    def samples_even(cls, v):
        if v % 2:
            raise ValueError(f"samples_per_period must be even, got {v}")
        return v

    def to_modulation(self) -> ModulationSpec:
        return ModulationSpec(f_mod=self.f_mod_hz, depth=to_angular(self.depth_hz),
                              demod_phase=self.demod_phase_rad,
                              samples_per_period=self.samples_per_period)


class ScanNSection(Section):
    n_values: List[int] = [30, 40, 54, 60, 80]
    eit_omega_lower_hz: float = Field(40e3, ge=0)
    eit_omega_upper_hz: float = Field(1.2e6, ge=0)
    eit_half_width_hz: float = Field(5e6, gt=0)
    eit_points: int = Field(201, ge=2)
    eit_method: Literal["quadrature", "analytic", "weak_probe"] = "weak_probe"
    n_atoms: BlankFloat = Field(None, ge=1)
    detector_rms: float = Field(0.0, ge=0)
    per_n_spectra: bool = False

    @field_validator("n_values", mode="before")
    @classmethod
    def split_list(cls, v):
        if isinstance(v, str):
            return [item for item in v.replace(",", " ").split() if item]
        return v

    @field_validator("n_values")
    @classmethod
    def n_in_range(cls, v):
        if not v:
            raise ValueError("n_values must not be empty")
        for n in v:
            if not 10 <= n <= 120:
                raise ValueError(f"every n must lie in [10, 120], got {n}")
        return v

    def eit_template(self, atom: AtomSpec, ladder: LadderSection) -> LadderSystem:
        return ladder_for_atom(atom, omega_l=to_angular(self.eit_omega_lower_hz),
                               omega_u=to_angular(self.eit_omega_upper_hz),
                               delta_l=to_angular(ladder.delta_lower_hz),
                               extra_dephasing_ge=to_angular(ladder.dephasing_ge_hz),
                               extra_dephasing_gr=to_angular(ladder.dephasing_gr_hz))

    def eit_scan(self) -> ScanSpec:
        half = to_angular(self.eit_half_width_hz)
        return ScanSpec("upper", -half, half, self.eit_points)

    def eit_policy(self, grid: GridSection) -> GridPolicy:
        return GridPolicy(self.eit_method, grid.base_points, grid.window_points)


class OutputSection(Section):
    out_dir: str = "./out"
    plot: bool = False


class RunConfig(Section):
    """Complete, validated run configuration."""

    run: RunSection = RunSection()
    atom: AtomSection = AtomSection()
    ladder: LadderSection = LadderSection()
    environment: EnvironmentSection = EnvironmentSection()
    calibration: CalibrationSection = CalibrationSection()
    grid: GridSection = GridSection()
    scan: ScanSection = ScanSection()
    map: MapSection = MapSection()
    modulation: ModulationSection = ModulationSection()
    scan_n: ScanNSection = ScanNSection()
    output: OutputSection = OutputSection()

    @property
    def threads(self) -> int:
        return self.run.threads
