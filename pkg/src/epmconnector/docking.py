"""
Quasi-static self-alignment of two mating faces.

Each face carries two arc magnets of opposite pole orientation and the two pole caps of an EPM, all modeled
as point dipoles. The fixed face lies on a platform tilted by ``alpha`` about the y axis. The free face is
lowered vertically; at every height its rotor turns about its own axis until the magnetic torque falls below
the bearing friction. At the capture height the pair connects if the magnetic pull beats gravity plus the
lateral spring, and the rotor ended up close enough to the aligned angle.

Lengths are meters, angles in the public API are degrees.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from typing import Callable, Mapping, Sequence

import numpy as np
import numpy.typing as npt

from .magnetics import MU0

_logger = logging.getLogger(__name__)

_K = MU0 / (4.0 * math.pi)


class SingularSeparationError(ValueError):
    pass


class Outcome(enum.Enum):
    SUCCESS = "S"
    FAIL = "F"


def rot_y(angle: float) -> npt.NDArray[np.float64]:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_axis(axis: npt.ArrayLike, angle: float) -> npt.NDArray[np.float64]:
    """Rodrigues rotation matrix."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


@dataclasses.dataclass(frozen=True)
class Pose:
    rotation: npt.NDArray[np.float64]
    translation: npt.NDArray[np.float64]

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        return points @ self.rotation.T + self.translation

    def rotate(self, vectors: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        return vectors @ self.rotation.T


@dataclasses.dataclass(frozen=True, eq=False)
class ArcMagnetLayout:
    """
    Dipoles in the face frame: the face is the z=0 plane, its outward normal is +z.

    ``arc_sizes`` gives the number of dipoles of each arc magnet in ``dipole_positions`` order. The EPM is a
    pair of opposite pole caps at ``epm_position +- epm_pole_offset``.
    """

    dipole_positions: npt.NDArray[np.float64]
    dipole_moments: npt.NDArray[np.float64]
    arc_sizes: tuple[int, int]
    epm_position: npt.NDArray[np.float64]
    epm_pole_offset: npt.NDArray[np.float64]
    epm_moment: float
    rotor_axis: npt.NDArray[np.float64] = dataclasses.field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self) -> None:
        p = np.asarray(self.dipole_positions, dtype=float)
        m = np.asarray(self.dipole_moments, dtype=float)
        if p.shape != m.shape or p.ndim != 2 or p.shape[1] != 3:
            raise ValueError("dipole positions and moments must be matching (n, 3) arrays")
        if len(self.arc_sizes) != 2 or min(self.arc_sizes) < 2 or sum(self.arc_sizes) != len(p):
            raise ValueError(f"two arcs of at least 2 dipoles each required, got {self.arc_sizes}")
        if np.any(np.linalg.norm(m, axis=1) == 0):
            raise ValueError("dipole moments must be nonzero")
        n0 = self.arc_sizes[0]
        if not np.dot(m[:n0].sum(axis=0), m[n0:].sum(axis=0)) < 0:
            raise ValueError("the two arcs must have opposite pole orientation")
        axis = np.asarray(self.rotor_axis, dtype=float)
        object.__setattr__(self, "rotor_axis", axis / np.linalg.norm(axis))
        object.__setattr__(self, "dipole_positions", p)
        object.__setattr__(self, "dipole_moments", m)

    def dipoles(self) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
        """All dipoles (arcs, then EPM caps) as (positions, moments)."""
        c = np.asarray(self.epm_position, dtype=float)
        d = np.asarray(self.epm_pole_offset, dtype=float)
        if self.epm_moment == 0:
            return self.dipole_positions, self.dipole_moments
        n = np.array([0.0, 0.0, self.epm_moment])
        pos = np.vstack([self.dipole_positions, c + d, c - d])
        mom = np.vstack([self.dipole_moments, n, -n])
        return pos, mom

    def scaled(self, factor: float) -> ArcMagnetLayout:
        return dataclasses.replace(
            self, dipole_moments=self.dipole_moments * factor, epm_moment=self.epm_moment * factor
        )


def arc_layout(
    *,
    dipoles_per_arc: int = 8,
    arc_radius: float = 21e-3,
    arc_span_deg: float = 60.0,
    arc_moment: float = 0.4,
    epm_pole_offset: float = 4e-3,
    epm_moment: float = 0.4,
    recess: float = 5e-3,
) -> ArcMagnetLayout:
    """
    North-up arc centered on +y, south-up arc centered on -y, EPM caps on the y axis. Moments are axial
    vectors, so the layout maps onto itself under the y -> -y reflection. ``arc_moment`` is the total moment
    of one arc [A m^2], spread evenly over its dipoles.
    """
    if dipoles_per_arc < 2:
        raise ValueError("at least 2 dipoles per arc")
    half = math.radians(arc_span_deg) / 2.0
    # midpoints of equal sub-arcs, so refinement converges to the continuous arc
    t = -half + (np.arange(dipoles_per_arc) + 0.5) * (2.0 * half / dipoles_per_arc)
    ring = np.column_stack([arc_radius * np.sin(t), arc_radius * np.cos(t), np.full_like(t, -recess)])
    north = ring
    south = ring * np.array([1.0, -1.0, 1.0])
    up = np.tile([0.0, 0.0, arc_moment / dipoles_per_arc], (dipoles_per_arc, 1))
    return ArcMagnetLayout(
        dipole_positions=np.vstack([north, south]),
        dipole_moments=np.vstack([up, -up]),
        arc_sizes=(dipoles_per_arc, dipoles_per_arc),
        epm_position=np.array([0.0, 0.0, -recess]),
        epm_pole_offset=np.array([0.0, epm_pole_offset, 0.0]),
        epm_moment=epm_moment,
    )


def dipole_forces(
    p1: npt.NDArray[np.float64], m1: npt.NDArray[np.float64], p2: npt.NDArray[np.float64], m2: npt.NDArray[np.float64]
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """
    Net force on each dipole of set 2 from all of set 1, and the field of set 1 at each dipole of set 2.
    Shapes: (n2, 3) each.
    """
    r = p2[:, None, :] - p1[None, :, :]
    dist = np.linalg.norm(r, axis=2)
    if np.any(dist < 1e-12):
        raise SingularSeparationError("coincident dipole positions")
    u = r / dist[..., None]
    m1u = np.einsum("jk,ijk->ij", m1, u)
    m2u = np.einsum("ik,ijk->ij", m2, u)
    m12 = m2 @ m1.T
    inv4 = 3.0 * _K / dist**4
    f = inv4[..., None] * (
        m1u[..., None] * m2[:, None, :]
        + m2u[..., None] * m1[None, :, :]
        + m12[..., None] * u
        - 5.0 * (m1u * m2u)[..., None] * u
    )
    b = (_K / dist**3)[..., None] * (3.0 * m1u[..., None] * u - m1[None, :, :])
    return f.sum(axis=1), b.sum(axis=1)


def magnetic_interaction(
    pose_fixed: Pose, pose_free: Pose, layout: ArcMagnetLayout, free_layout: ArcMagnetLayout | None = None
) -> tuple[npt.NDArray[np.float64], float]:
    """
    Force on the free face [N] and torque on it about its rotor axis through its origin [N m].
    The free face uses ``free_layout`` if given, otherwise the same layout as the fixed one.
    """
    p1l, m1l = layout.dipoles()
    p2l, m2l = (free_layout or layout).dipoles()
    p1, m1 = pose_fixed.apply(p1l), pose_fixed.rotate(m1l)
    p2, m2 = pose_free.apply(p2l), pose_free.rotate(m2l)
    f, b = dipole_forces(p1, m1, p2, m2)
    arm = p2 - pose_free.translation
    torque = np.cross(arm, f).sum(axis=0) + np.cross(m2, b).sum(axis=0)
    axis = pose_free.rotate((free_layout or layout).rotor_axis)
    return f.sum(axis=0), float(torque @ axis)


def interaction_energy(pose_fixed: Pose, pose_free: Pose, layout: ArcMagnetLayout) -> float:
    """U = -sum(m2 . B1); the independent route for the force and torque checks."""
    p1l, m1l = layout.dipoles()
    p1, m1 = pose_fixed.apply(p1l), pose_fixed.rotate(m1l)
    p2, m2 = pose_free.apply(p1l), pose_free.rotate(m1l)
    r = p2[:, None, :] - p1[None, :, :]
    dist = np.linalg.norm(r, axis=2)
    u = r / dist[..., None]
    b = (_K / dist**3)[..., None] * (3.0 * np.einsum("jk,ijk->ij", m1, u)[..., None] * u - m1[None, :, :])
    return float(-np.einsum("ik,ijk->", m2, b))


@dataclasses.dataclass(frozen=True)
class DockingScenario:
    x_offset: float  # [m]
    y_offset: float  # [m]
    tilt_alpha: float = 0.0  # [deg]
    approach_speed: float = 3e-3  # [m/s]
    start_height: float = 30e-3  # [m]

    def __post_init__(self) -> None:
        if not 0 <= self.tilt_alpha < 90:
            raise ValueError(f"tilt_alpha invalid: {self.tilt_alpha}")
        if not self.start_height > 0:
            raise ValueError(f"start_height invalid: {self.start_height}")


@dataclasses.dataclass(frozen=True)
class DockingParams:
    rotor_inertia_proxy: float = 2000.0
    """Rotor mobility of the relaxation iteration [rad/(N m)]."""
    bearing_friction_torque: float = 2e-4  # [N m]
    gravity_load: float = 3.865e-3  # [N]
    spring_restoring: float = 7.4  # [N/m]
    capture_threshold: float = 6e-3  # [m]
    alignment_tolerance: float = 105.0  # [deg]
    initial_rotor_angle: float = 0.0  # [deg]
    height_step: float = 0.5e-3  # [m]
    max_relax_iterations: int = 500
    relax_tolerance: float = 1e-4  # [rad]

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")
        if not self.height_step > 0:
            raise ValueError("height_step must be positive")


@dataclasses.dataclass(frozen=True)
class DockingTrace:
    """Final quantities of one descent; ``outcome`` is derived from them with the params' loads."""

    outcome: Outcome
    pull: float  # magnetic force toward the fixed face center at capture [N]
    lateral: float  # in-plane offset at capture [m]
    misalignment: float  # final rotor angle from aligned [deg]
    angles: tuple[float, ...]  # relaxed rotor angle at each height [deg]
    residual_torques: tuple[float, ...]  # |torque| after relaxation at each height [N m]


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


class _Pair:
    """
    Fixed face on the tilted platform; the free face is the same part turned over about the x axis and, through
    its compliant mount, kept parallel to the platform. Its rotor turns about the platform normal.
    """

    def __init__(self, layout: ArcMagnetLayout, tilt_deg: float) -> None:
        self.layout = layout
        self.fixed = Pose(rot_y(-math.radians(tilt_deg)), np.zeros(3))
        self.normal = self.fixed.rotation @ np.array([0.0, 0.0, 1.0])
        self.flip = rot_axis([1.0, 0.0, 0.0], math.pi)
        self.axis = self.flip @ layout.rotor_axis

    def free_pose(self, center: npt.NDArray[np.float64], angle: float) -> Pose:
        return Pose(self.fixed.rotation @ rot_axis(self.axis, angle) @ self.flip, center)

    def eval(self, center: npt.NDArray[np.float64], angle: float) -> tuple[npt.NDArray[np.float64], float]:
        return magnetic_interaction(self.fixed, self.free_pose(center, angle), self.layout)


def relax_rotor(
    torque_at: Callable[[float], float], angle: float, params: DockingParams
) -> tuple[float, float]:
    """
    Damped fixed-point iteration angle <- angle + mobility * torque, stopping once |torque| drops below the
    bearing friction. The step is halved whenever the torque changes sign. Returns (angle, torque).
    """
    mobility = params.rotor_inertia_proxy
    tau = torque_at(angle)
    for _ in range(params.max_relax_iterations):
        if abs(tau) < params.bearing_friction_torque:
            break
        step = max(-0.2, min(0.2, mobility * tau))
        nxt = angle + step
        tau_next = torque_at(nxt)
        if tau_next * tau < 0 and abs(tau_next) >= params.bearing_friction_torque:
            mobility *= 0.5
        angle, tau = nxt, tau_next
        if abs(step) < params.relax_tolerance and abs(tau) < params.bearing_friction_torque:
            break
    return angle, tau


def trace_docking(scenario: DockingScenario, params: DockingParams, layout: ArcMagnetLayout) -> DockingTrace:
    pair = _Pair(layout, scenario.tilt_alpha)
    xy = np.array([scenario.x_offset, scenario.y_offset])
    n = pair.normal

    # height above the platform is measured along its normal; the faces are parallel
    def z_at(h: float) -> float:
        return (h - n[0] * xy[0] - n[1] * xy[1]) / n[2]

    z_start = scenario.start_height
    z_end = z_at(params.capture_threshold)
    heights = [z_start] if z_start > z_end else []
    z = z_start - params.height_step
    while z > z_end:
        heights.append(z)
        z -= params.height_step
    heights.append(z_end)

    angle = math.radians(params.initial_rotor_angle)
    angles: list[float] = []
    residuals: list[float] = []
    for zk in heights:
        center = np.array([xy[0], xy[1], zk])
        angle, tau = relax_rotor(lambda a: pair.eval(center, a)[1], angle, params)
        angles.append(math.degrees(angle))
        residuals.append(abs(tau))

    center = np.array([xy[0], xy[1], z_end])
    force, _ = pair.eval(center, angle)
    toward = -center / np.linalg.norm(center)
    pull = float(force @ toward)
    lateral = float(np.linalg.norm(center - n * (center @ n)))
    misalignment = abs(math.degrees(_wrap(angle)))
    ok = pull > params.gravity_load + params.spring_restoring * lateral and misalignment < params.alignment_tolerance
    return DockingTrace(
        Outcome.SUCCESS if ok else Outcome.FAIL, pull, lateral, misalignment, tuple(angles), tuple(residuals)
    )


def simulate_docking(scenario: DockingScenario, params: DockingParams, layout: ArcMagnetLayout) -> Outcome:
    return trace_docking(scenario, params, layout).outcome


@dataclasses.dataclass(frozen=True)
class SuccessMap:
    grid: tuple[tuple[Outcome, ...], ...]
    """grid[iy][ix] is the outcome at x = ix * spacing, y = iy * spacing."""
    spacing: float  # [m]
    tilt_alpha: float  # [deg]

    def __post_init__(self) -> None:
        if not self.spacing > 0:
            raise ValueError(f"spacing invalid: {self.spacing}")
        if len({len(row) for row in self.grid}) > 1:
            raise ValueError("ragged grid")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.grid), len(self.grid[0]) if self.grid else 0

    @property
    def success_count(self) -> int:
        return sum(o is Outcome.SUCCESS for row in self.grid for o in row)

    def axis_extent(self, axis: str) -> float:
        """Largest offset along the x or y axis (other offset zero) up to which every point succeeds."""
        line = self.grid[0] if axis == "x" else tuple(row[0] for row in self.grid)
        reach = -1
        for k, o in enumerate(line):
            if o is not Outcome.SUCCESS:
                break
            reach = k
        return reach * self.spacing if reach >= 0 else float("nan")

    def to_csv(self) -> str:
        return "".join(",".join(o.value for o in row) + "\n" for row in self.grid)


def success_rate(success_map: SuccessMap) -> float:
    rows, cols = success_map.shape
    if rows * cols == 0:
        raise ValueError("empty success map")
    return success_map.success_count / (rows * cols)


def grid_scenarios(spacing: float, tilt: float, points: int = 7) -> list[list[DockingScenario]]:
    return [[DockingScenario(ix * spacing, iy * spacing, tilt) for ix in range(points)] for iy in range(points)]


def sweep_traces(
    spacing: float, tilt: float, params: DockingParams, layout: ArcMagnetLayout, points: int = 7
) -> list[list[DockingTrace]]:
    if not spacing > 0:
        raise ValueError(f"spacing invalid: {spacing}")
    return [[trace_docking(s, params, layout) for s in row] for row in grid_scenarios(spacing, tilt, points)]


def sweep_grid(
    spacing: float, tilt: float, params: DockingParams, layout: ArcMagnetLayout, points: int = 7
) -> SuccessMap:
    traces = sweep_traces(spacing, tilt, params, layout, points)
    return SuccessMap(tuple(tuple(t.outcome for t in row) for row in traces), spacing, tilt)


def classify(trace: DockingTrace, params: DockingParams) -> Outcome:
    """Re-derive the outcome of a finished descent under different loads and tolerance."""
    ok = (
        trace.pull > params.gravity_load + params.spring_restoring * trace.lateral
        and trace.misalignment < params.alignment_tolerance
    )
    return Outcome.SUCCESS if ok else Outcome.FAIL


MEASURED_SUCCESS_COUNTS: Mapping[float, int] = {0.0: 29, 10.0: 27, 20.0: 22}

# Outcomes the calibrated map must reproduce, keyed (tilt_deg, ix, iy) on the 5 mm grid: origin capture and
# the reported axis reach at the largest tilt.
PINNED_OUTCOMES: Mapping[tuple[float, int, int], Outcome] = {
    (0.0, 0, 0): Outcome.SUCCESS,
    (10.0, 0, 0): Outcome.SUCCESS,
    (20.0, 0, 0): Outcome.SUCCESS,
    (20.0, 0, 3): Outcome.SUCCESS,
    (20.0, 0, 4): Outcome.FAIL,
}


@dataclasses.dataclass(frozen=True)
class DockingCalibration:
    params: DockingParams
    moment_scale: float
    counts: Mapping[float, int]
    load_window: tuple[float, float]
    """Range of gravity_load [N] that reproduces the same counts; the chosen load is its midpoint."""


def _axis_monotone(ok: npt.NDArray[np.bool_]) -> bool:
    lines = (ok[0], ok[:, 0])
    return all(not np.any(~line[:-1] & line[1:]) for line in lines)


CALIBRATION_SPRINGS = tuple(np.linspace(0.0, 40.0, 201))  # [N/m]
CALIBRATION_TOLERANCES = (10.0, 15.0, 20.0, 30.0, 45.0, 60.0, 75.0, 90.0, 105.0)  # [deg]


def calibrate_docking(
    layout: ArcMagnetLayout,
    base: DockingParams,
    *,
    targets: Mapping[float, int] = MEASURED_SUCCESS_COUNTS,
    pinned: Mapping[tuple[float, int, int], Outcome] = PINNED_OUTCOMES,
    moment_scales: Sequence[float] = (1.0,),
    springs: Sequence[float] = CALIBRATION_SPRINGS,
    tolerances: Sequence[float] = CALIBRATION_TOLERANCES,
    spacing: float = 5e-3,
) -> DockingCalibration:
    """
    Tune gravity_load, spring_restoring, alignment tolerance and the moment scale to exact success counts.

    The descent only depends on the moment scale, so each scale is simulated once per tilt. For fixed spring
    stiffness and tolerance the success count falls stepwise as the gravity load grows, so every tilt admits an
    interval of loads. The intervals are intersected; candidates whose intersection reaches down to zero are
    dropped, since there gravity would not decide any outcome. Among the rest, with monotone axis maps, the
    widest intersection in log scale wins and the load is its geometric midpoint. Grid points in ``pinned``
    must come out as given. The default spring and tolerance grids reproduce the shipped parameters. Raises
    CalibrationError if no candidate matches.
    """
    from .force import CalibrationError

    best: tuple[float, DockingCalibration] | None = None
    for scale in moment_scales:
        lay = layout.scaled(scale)
        traces = {a: sweep_traces(spacing, a, base, lay) for a in targets}
        pull = {a: np.array([[t.pull for t in row] for row in tr]) for a, tr in traces.items()}
        lat = {a: np.array([[t.lateral for t in row] for row in tr]) for a, tr in traces.items()}
        mis = {a: np.array([[t.misalignment for t in row] for row in tr]) for a, tr in traces.items()}
        for k in springs:
            for tol in tolerances:
                lo, hi = 0.0, math.inf
                margins = {}
                for a, n in targets.items():
                    m = np.where(mis[a] < tol, pull[a] - k * lat[a], -np.inf)
                    margins[a] = m
                    ranked = np.sort(m.ravel())[::-1]
                    if not 0 < n < ranked.size:
                        lo, hi = math.inf, -math.inf
                        break
                    lo, hi = max(lo, ranked[n]), min(hi, ranked[n - 1])
                if not (hi > lo > 0 and math.isfinite(hi)):
                    continue
                load = math.sqrt(lo * hi)
                if not all(_axis_monotone(m > load) for m in margins.values()):
                    continue
                if any((margins[a][iy, ix] > load) != (o is Outcome.SUCCESS) for (a, ix, iy), o in pinned.items()):
                    continue
                width = math.log(hi / lo)
                if best is None or width > best[0]:
                    params = dataclasses.replace(
                        base, gravity_load=float(load), spring_restoring=float(k), alignment_tolerance=float(tol)
                    )
                    best = (width, DockingCalibration(params, scale, dict(targets), (float(lo), float(hi))))
    if best is None:
        raise CalibrationError(f"no parameter set reproduces success counts {dict(targets)}")
    _logger.info("docking calibration: %s", best[1])
    return best[1]
