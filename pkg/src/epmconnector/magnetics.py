"""
Lumped magnetic-circuit model of a two-magnet electro-permanent magnet (EPM).

The circuit is an AlNiCo rod and an NdFeB rod between two steel end caps, closed through two
air gaps of equal thickness. A coil wound either around the AlNiCo rod alone or around both rods
re-polarizes the AlNiCo segment when pulsed.

Hysteresis is idealized as rectangular: a segment whose magnetization opposes the coil drive
consumes ``coercivity * length`` ampere-turns, an aligned segment consumes nothing. The idealization
can be overridden per segment with an explicit operating intensity.

All quantities are SI.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Sequence

import numpy as np
import numpy.typing as npt

MU0 = 4e-7 * math.pi  # Vacuum permeability [henry/meter]


class MagneticsError(ValueError):
    pass


class InvalidCoilError(MagneticsError):
    pass


class SingularGapError(MagneticsError):
    """Zero air gap with nonzero net MMF; the gap field is unbounded."""


class Polarization(enum.Enum):
    ALIGNED = "aligned"
    OPPOSED = "opposed"

    def flipped(self) -> Polarization:
        return Polarization.OPPOSED if self is Polarization.ALIGNED else Polarization.ALIGNED


class Winding(enum.Enum):
    ALNICO_ONLY = "alnico_only"
    BOTH = "both"


class PulsePolarity(enum.Enum):
    MAGNETIZE = "magnetize"
    DEMAGNETIZE = "demagnetize"


def sign_factor_for(polarization: Polarization) -> int:
    """+1 for a segment opposing the drive (MMF-consuming), -1 for an aligned one (MMF-contributing)."""
    return +1 if polarization is Polarization.OPPOSED else -1


@dataclasses.dataclass(frozen=True)
class MaterialProps:
    """
    ``recoil_permeability`` is the relative slope of the straight-line demagnetization curve, so that
    ``remanence = MU0 * recoil_permeability * coercivity`` for an ideal straight-line magnet.
    """

    name: str
    coercivity: float  # [A/m]
    remanence: float  # [T]
    recoil_permeability: float = 1.0

    def __post_init__(self) -> None:
        if not self.coercivity > 0:
            raise ValueError(f"coercivity invalid: {self.coercivity}")
        if not self.remanence > 0:
            raise ValueError(f"remanence invalid: {self.remanence}")
        if not self.recoil_permeability >= 1:
            raise ValueError(f"recoil_permeability invalid: {self.recoil_permeability}")

    @classmethod
    def straight_line(cls, name: str, coercivity: float, remanence: float) -> MaterialProps:
        return cls(name, coercivity, remanence, max(1.0, remanence / (MU0 * coercivity)))


ALNICO_5 = MaterialProps.straight_line("AlNiCo 5", coercivity=48e3, remanence=1.26)
NDFEB_N35 = MaterialProps.straight_line("NdFeB N35", coercivity=868e3, remanence=1.18)
NDFEB_N40 = MaterialProps.straight_line("NdFeB N40", coercivity=900e3, remanence=1.26)


@dataclasses.dataclass(frozen=True)
class MagnetSegment:
    material: MaterialProps
    length: float  # [m]
    cross_section: float  # [m^2]
    polarization: Polarization = Polarization.OPPOSED
    sign_factor: int | None = None
    operating_intensity: float | None = None
    """Overrides the rectangular-hysteresis operating intensity [A/m] when set."""

    def __post_init__(self) -> None:
        if not self.length > 0:
            raise ValueError(f"length invalid: {self.length}")
        if not self.cross_section > 0:
            raise ValueError(f"cross_section invalid: {self.cross_section}")
        expected = sign_factor_for(self.polarization)
        if self.sign_factor is None:
            object.__setattr__(self, "sign_factor", expected)
        elif self.sign_factor != expected:
            raise ValueError(f"sign_factor {self.sign_factor} inconsistent with {self.polarization}")
        if self.operating_intensity is not None and self.operating_intensity < 0:
            raise ValueError(f"operating_intensity invalid: {self.operating_intensity}")

    @property
    def intensity(self) -> float:
        """Operating field intensity magnitude H_i [A/m]."""
        if self.operating_intensity is not None:
            return self.operating_intensity
        return self.material.coercivity if self.polarization is Polarization.OPPOSED else 0.0

    @property
    def mmf_drop(self) -> float:
        """Signed MMF consumed by the segment, sigma_i * H_i * L_i [A-turns]."""
        assert self.sign_factor is not None
        return self.sign_factor * self.intensity * self.length

    def with_polarization(self, polarization: Polarization) -> MagnetSegment:
        return dataclasses.replace(self, polarization=polarization, sign_factor=None)

    @property
    def source_mmf(self) -> float:
        """Open-circuit MMF of the magnet as a Thevenin source [A-turns]."""
        return self.material.coercivity * self.length

    def internal_gap(self, area: float) -> float:
        """
        Length of an air gap of cross-section ``area`` whose reluctance equals the magnet's internal
        reluctance, halved because the circuit has two gaps in series.
        """
        return self.length * area / (2.0 * self.material.recoil_permeability * self.cross_section)


@dataclasses.dataclass(frozen=True)
class CoilSpec:
    turns: int
    wire_diameter: float  # [m]
    resistance: float  # [ohm]
    winding: Winding = Winding.ALNICO_ONLY

    def __post_init__(self) -> None:
        if self.turns < 1:
            raise ValueError(f"turns invalid: {self.turns}")


@dataclasses.dataclass(frozen=True)
class AirGapSpec:
    thickness: float  # [m]
    area: float  # [m^2]

    def __post_init__(self) -> None:
        if self.thickness < 0:
            raise ValueError(f"thickness invalid: {self.thickness}")
        if not self.area > 0:
            raise ValueError(f"area invalid: {self.area}")


END_CAP_AREA = 48.85e-6  # Circular-segment end cap pole area [m^2]
ROD_LENGTH = 7e-3
ROD_SECTION = math.pi * (2.5e-3) ** 2  # 5 mm diameter rod


@dataclasses.dataclass(frozen=True)
class EPMAssembly:
    alnico: MagnetSegment
    ndfeb: MagnetSegment
    coil: CoilSpec
    gaps: tuple[AirGapSpec, AirGapSpec]
    saturation_flux: float | None = None
    """Defaults to the AlNiCo remanence."""

    mu0 = MU0

    def __post_init__(self) -> None:
        if len(self.gaps) != 2:
            raise ValueError(f"exactly two gaps required, got {len(self.gaps)}")
        object.__setattr__(self, "gaps", tuple(self.gaps))
        if self.saturation_flux is None:
            object.__setattr__(self, "saturation_flux", self.alnico.material.remanence)
        assert self.saturation_flux is not None
        if not self.saturation_flux > 0:
            raise ValueError(f"saturation_flux invalid: {self.saturation_flux}")

    @property
    def b_sat(self) -> float:
        assert self.saturation_flux is not None
        return self.saturation_flux

    @property
    def state(self) -> Polarization:
        """ALIGNED (holding) when the AlNiCo magnetization is parallel to the NdFeB one."""
        if self.alnico.polarization is self.ndfeb.polarization:
            return Polarization.ALIGNED
        return Polarization.OPPOSED

    @property
    def gap(self) -> AirGapSpec:
        return self.gaps[0]

    def with_gap(self, thickness: float) -> EPMAssembly:
        gaps = tuple(dataclasses.replace(g, thickness=thickness) for g in self.gaps)
        return dataclasses.replace(self, gaps=gaps)  # type: ignore[arg-type]

    def with_state(self, state: Polarization) -> EPMAssembly:
        target = self.ndfeb.polarization if state is Polarization.ALIGNED else self.ndfeb.polarization.flipped()
        return dataclasses.replace(self, alnico=self.alnico.with_polarization(target))


def default_assembly(gap: float = 0.5e-3) -> EPMAssembly:
    """
    The connector EPM: AlNiCo 5 rod and N35 disk, both 7 mm x 5 mm, 120-turn coil of 3.0 ohm on the AlNiCo
    only. Both segments start opposing the drive, which is the holding (ON) state.
    """
    return EPMAssembly(
        alnico=MagnetSegment(ALNICO_5, ROD_LENGTH, ROD_SECTION),
        ndfeb=MagnetSegment(NDFEB_N35, ROD_LENGTH, ROD_SECTION),
        coil=CoilSpec(turns=120, wire_diameter=0.15e-3, resistance=3.0, winding=Winding.ALNICO_ONLY),
        gaps=(AirGapSpec(gap, END_CAP_AREA), AirGapSpec(gap, END_CAP_AREA)),
    )


def experimental_assembly(gap: float = 0.5e-3) -> EPMAssembly:
    """Winding-comparison prototype: 130 turns, coil resistance matched to 2.0 ohm, N40 disk."""
    base = default_assembly(gap)
    return dataclasses.replace(
        base,
        ndfeb=MagnetSegment(NDFEB_N40, ROD_LENGTH, ROD_SECTION),
        coil=CoilSpec(turns=130, wire_diameter=0.20e-3, resistance=2.0, winding=Winding.ALNICO_ONLY),
    )


@dataclasses.dataclass(frozen=True)
class PulseSpec:
    voltage: float  # [V]
    current: float  # [A]
    duration: float  # [s]
    polarity: PulsePolarity = PulsePolarity.MAGNETIZE

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError(f"duration invalid: {self.duration}")
        if self.voltage < 0 or self.current < 0:
            raise ValueError(f"voltage/current must be nonnegative: {self.voltage}, {self.current}")


def coil_current(voltage: float, coil: CoilSpec) -> float:
    if voltage < 0:
        raise ValueError(f"voltage invalid: {voltage}")
    if not coil.resistance > 0:
        raise InvalidCoilError(f"coil resistance must be positive, got {coil.resistance}")
    return voltage / coil.resistance


def effective_mmf(assembly: EPMAssembly, drive: float, winding: Winding | None = None) -> float:
    """
    MMF left for the air gaps after the wound segments take their share.

    With the coil on the AlNiCo alone only the AlNiCo drop is subtracted; with the coil around both rods the
    NdFeB drop is subtracted as well. The result may be negative, meaning the drive cannot switch the AlNiCo.
    """
    if drive < 0:
        raise ValueError(f"drive invalid: {drive}")
    winding = winding or assembly.coil.winding
    f = drive - assembly.alnico.mmf_drop
    if winding is Winding.BOTH:
        f -= assembly.ndfeb.mmf_drop
    return f


def mmf_balance(assembly: EPMAssembly, drive: float) -> float:
    """Gap field intensity H_g [A/m] from NI = 2 H_g g + sum(sigma_i H_i L_i)."""
    g0, g1 = (gap.thickness for gap in assembly.gaps)
    if not math.isclose(g0, g1, rel_tol=1e-12, abs_tol=0.0):
        raise MagneticsError(f"asymmetric gaps are not modeled: {g0} != {g1}")
    net = drive - assembly.alnico.mmf_drop - assembly.ndfeb.mmf_drop
    if g0 == 0:
        if net != 0:
            raise SingularGapError("zero gap with nonzero net MMF; use the zero-gap force path")
        return 0.0
    return net / (2.0 * g0)


def gap_flux_density(
    f_eff: float | npt.ArrayLike, gap: AirGapSpec | float | npt.ArrayLike, saturation: float
) -> float | npt.NDArray[np.float64]:
    """B_g = MU0 * f_eff / (2 g), clipped to +-saturation. Broadcasts over ``f_eff`` and ``gap``."""
    g = gap.thickness if isinstance(gap, AirGapSpec) else np.asarray(gap, dtype=float)
    if not np.all(np.asarray(g) > 0):
        raise SingularGapError(f"gap thickness must be positive, got {g}")
    b = np.clip(MU0 * np.asarray(f_eff, dtype=float) / (2.0 * g), -saturation, saturation)
    return float(b) if b.ndim == 0 else b


def coil_field(assembly: EPMAssembly, current: float) -> float:
    """Solenoid approximation of the coil field over the wound AlNiCo segment [A/m]."""
    return assembly.coil.turns * current / assembly.alnico.length


def apply_pulse(assembly: EPMAssembly, pulse: PulseSpec) -> EPMAssembly:
    """
    Returns the assembly after the pulse. The AlNiCo switches only if the coil field strictly exceeds its
    coercivity; the NdFeB never switches.
    """
    if coil_field(assembly, pulse.current) <= assembly.alnico.material.coercivity:
        return assembly
    target = Polarization.ALIGNED if pulse.polarity is PulsePolarity.MAGNETIZE else Polarization.OPPOSED
    if assembly.state is target:
        return assembly
    return assembly.with_state(target)


def pulse_energy(pulse: PulseSpec) -> float:
    return pulse.voltage * pulse.current * pulse.duration


@dataclasses.dataclass(frozen=True)
class WindingCurves:
    voltage: npt.NDArray[np.float64]
    b_alnico_only: npt.NDArray[np.float64]
    b_both: npt.NDArray[np.float64]

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.voltage.tolist(), self.b_alnico_only.tolist(), self.b_both.tolist()))


def compare_windings(assembly: EPMAssembly, voltages: Sequence[float]) -> WindingCurves:
    """
    Gap flux density against drive voltage for both winding configurations. The same coil (turns and
    resistance) is used for both, so NI is identical at every voltage.
    """
    v = np.asarray(list(voltages), dtype=float)
    a = np.empty_like(v)
    b = np.empty_like(v)
    for k, volts in enumerate(v):
        ni = assembly.coil.turns * coil_current(float(volts), assembly.coil)
        a[k] = gap_flux_density(effective_mmf(assembly, ni, Winding.ALNICO_ONLY), assembly.gap, assembly.b_sat)
        b[k] = gap_flux_density(effective_mmf(assembly, ni, Winding.BOTH), assembly.gap, assembly.b_sat)
    return WindingCurves(v, a, b)
