"""
Flexibility envelope of a coupled connector pair.

The mated EPM faces hold the pair together while the spring behind each face stretches, bends or shears.
Each limit is the largest deformation at which the holding force still balances the spring's restoring
force or torque, found by bisection. The face gap that a deformation opens is ``gap_ratio`` times the
deformation; the default of zero keeps the faces closed, so the full contact force is available.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Callable

ForceCurve = Callable[[float], float]
"""Holding force [N] as a function of face gap [m]."""

SMALL_ANGLE_LIMIT = 10.0  # [deg]
LENGTH_TOL = 1e-5  # [m], 0.01 mm
ANGLE_TOL = 0.01  # [deg]
MAX_BISECTIONS = 60


class OutOfTravelError(ValueError):
    pass


class SpringKind(enum.Enum):
    CONICAL = "Conical"
    COMPRESSION = "Compression"


@dataclasses.dataclass(frozen=True)
class SpringSpec:
    kind: SpringKind
    axial_stiffness: float  # [N/m]
    bending_stiffness: float  # [N m/rad]
    lateral_stiffness: float  # [N/m]
    free_length: float = 30e-3  # [m]
    max_travel: float = 25e-3  # [m]

    def __post_init__(self) -> None:
        for name in ("axial_stiffness", "bending_stiffness", "lateral_stiffness"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.max_travel <= self.free_length:
            raise ValueError(f"need 0 < max_travel <= free_length, got {self.max_travel}, {self.free_length}")

    def scaled(self, factor: float) -> SpringSpec:
        """All three stiffnesses multiplied by ``factor``."""
        return dataclasses.replace(
            self,
            axial_stiffness=self.axial_stiffness * factor,
            bending_stiffness=self.bending_stiffness * factor,
            lateral_stiffness=self.lateral_stiffness * factor,
        )


@dataclasses.dataclass(frozen=True)
class ConnectorGeometry:
    body_length: float = 46e-3  # [m] per connector half
    face_area: float = 48.85e-6  # [m^2]
    lever_arm: float = 10e-3
    """Distance from the bending pivot to the line of the holding force [m]."""
    gap_ratio: float = 0.0
    """Face gap opened per unit deformation."""
    max_lateral: float = 50e-3  # [m], bracket for the offset search

    def __post_init__(self) -> None:
        if not self.body_length > 0:
            raise ValueError(f"body_length invalid: {self.body_length}")
        if not (self.face_area > 0 and self.lever_arm > 0 and self.max_lateral > 0):
            raise ValueError("face_area, lever_arm and max_lateral must be positive")
        if self.gap_ratio < 0:
            raise ValueError(f"gap_ratio invalid: {self.gap_ratio}")


@dataclasses.dataclass(frozen=True)
class FlexLimits:
    axial_extension: float  # [m]
    bend_angle: float  # [deg]
    lateral_offset: float  # [m]
    connection_distance: float  # [m]

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")

    def as_dict(self) -> dict[str, float]:
        return {
            "axial_mm": self.axial_extension * 1e3,
            "bend_deg": self.bend_angle,
            "lateral_mm": self.lateral_offset * 1e3,
            "distance_mm": self.connection_distance * 1e3,
        }


def constant_force(value: float) -> ForceCurve:
    return lambda gap: value


def _restoring(stiffness: float, deformation: float) -> float:
    # an infinitely stiff spring resists any deformation, and none at all at zero
    return 0.0 if deformation == 0 else stiffness * deformation


def _axial_ok(x: float, spring: SpringSpec, force: ForceCurve, geom: ConnectorGeometry) -> bool:
    return force(geom.gap_ratio * x) >= _restoring(spring.axial_stiffness, x)


def _bend_ok(theta_deg: float, k_bend: float, force: ForceCurve, geom: ConnectorGeometry) -> bool:
    theta = math.radians(theta_deg)
    opening = geom.gap_ratio * geom.lever_arm * math.sin(theta)
    moment = force(opening) * geom.lever_arm
    if theta_deg > SMALL_ANGLE_LIMIT:
        moment *= math.cos(theta)
    return moment >= _restoring(k_bend, theta)


def _lateral_ok(d: float, spring: SpringSpec, force: ForceCurve, geom: ConnectorGeometry) -> bool:
    return force(geom.gap_ratio * d) >= _restoring(spring.lateral_stiffness, d)


def coupling_retained(
    extension: float,
    bend: float,
    offset: float,
    spring: SpringSpec,
    force_model: ForceCurve,
    geometry: ConnectorGeometry | None = None,
) -> bool:
    """True iff the holding force balances the spring along each deformed axis (m, deg, m)."""
    geom = geometry or ConnectorGeometry()
    if extension < 0 or offset < 0 or bend < 0:
        raise ValueError("deformations must be nonnegative")
    if extension > spring.max_travel:
        raise OutOfTravelError(f"extension {extension * 1e3:.2f} mm exceeds travel {spring.max_travel * 1e3:.2f} mm")
    if bend >= 90:
        raise OutOfTravelError(f"bend {bend} deg out of range")
    return (
        _axial_ok(extension, spring, force_model, geom)
        and _bend_ok(bend, spring.bending_stiffness, force_model, geom)
        and _lateral_ok(offset, spring, force_model, geom)
    )


def _bisect(ok: Callable[[float], bool], hi: float, tol: float) -> float:
    """Largest x in [0, hi] with ok(x), assuming ok holds on an initial interval; 0 if ok(0) fails."""
    if not ok(0.0):
        return 0.0
    if ok(hi):
        return hi
    lo = 0.0
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def max_axial_extension(spring: SpringSpec, force_model: ForceCurve, geometry: ConnectorGeometry | None = None) -> float:
    geom = geometry or ConnectorGeometry()
    return _bisect(lambda x: _axial_ok(x, spring, force_model, geom), spring.max_travel, LENGTH_TOL)


def max_bend_angle(spring: SpringSpec, force_model: ForceCurve, geometry: ConnectorGeometry | None = None) -> float:
    """Bend limit [deg]; small-angle torque balance up to 10 deg, cosine-reduced lever arm beyond."""
    geom = geometry or ConnectorGeometry()
    return _bisect(lambda t: _bend_ok(t, spring.bending_stiffness, force_model, geom), 89.99, ANGLE_TOL)


def max_lateral_offset(spring: SpringSpec, force_model: ForceCurve, geometry: ConnectorGeometry | None = None) -> float:
    geom = geometry or ConnectorGeometry()
    return _bisect(lambda d: _lateral_ok(d, spring, force_model, geom), geom.max_lateral, LENGTH_TOL)


def max_connection_distance(
    geometries: tuple[ConnectorGeometry, ConnectorGeometry],
    springs: tuple[SpringSpec, SpringSpec],
    force_model: ForceCurve,
) -> float:
    """Both bodies plus the axial extension each half can sustain against the shared holding force."""
    return sum(g.body_length + max_axial_extension(s, force_model, g) for g, s in zip(geometries, springs))


def fluidic_angular_tolerance(
    spring: SpringSpec, force_model: ForceCurve, geometry: ConnectorGeometry | None = None
) -> float:
    """Angular misalignment [deg] the conical spring of a fluidic connector absorbs while coupled."""
    if spring.kind is not SpringKind.CONICAL:
        raise ValueError("the angular tolerance is defined for the conical spring")
    return max_bend_angle(spring, force_model, geometry)


def flex_limits(
    spring: SpringSpec, force_model: ForceCurve, geometry: ConnectorGeometry | None = None
) -> FlexLimits:
    geom = geometry or ConnectorGeometry()
    return FlexLimits(
        max_axial_extension(spring, force_model, geom),
        max_bend_angle(spring, force_model, geom),
        max_lateral_offset(spring, force_model, geom),
        max_connection_distance((geom, geom), (spring, spring), force_model),
    )


@dataclasses.dataclass(frozen=True)
class FlexTargets:
    axial_extension: float = 20e-3  # [m]
    bend_angle: float = 30.0  # [deg]
    lateral_offset: float = 6e-3  # [m]
    fluidic_angle: float = 20.0  # [deg]


def _bend_stiffness_for(theta_deg: float, force: ForceCurve, geom: ConnectorGeometry) -> float:
    theta = math.radians(theta_deg)
    moment = force(geom.gap_ratio * geom.lever_arm * math.sin(theta)) * geom.lever_arm
    if theta_deg > SMALL_ANGLE_LIMIT:
        moment *= math.cos(theta)
    return moment / theta


def calibrate_springs(
    force_model: ForceCurve, geometry: ConnectorGeometry | None = None, targets: FlexTargets = FlexTargets()
) -> tuple[SpringSpec, SpringSpec]:
    """
    Stiffnesses that put each limit exactly on its target: the balance at the target deformation is solved
    for the stiffness. Returns (compression spring, conical spring); the conical one differs only in
    bending stiffness, set by the fluidic angular tolerance.
    """
    geom = geometry or ConnectorGeometry()
    k_axial = force_model(geom.gap_ratio * targets.axial_extension) / targets.axial_extension
    k_lateral = force_model(geom.gap_ratio * targets.lateral_offset) / targets.lateral_offset
    if not (k_axial > 0 and k_lateral > 0):
        raise ValueError("holding force must be positive at the target deformations")
    compression = SpringSpec(
        SpringKind.COMPRESSION, k_axial, _bend_stiffness_for(targets.bend_angle, force_model, geom), k_lateral
    )
    conical = dataclasses.replace(
        compression,
        kind=SpringKind.CONICAL,
        bending_stiffness=_bend_stiffness_for(targets.fluidic_angle, force_model, geom),
    )
    return compression, conical
