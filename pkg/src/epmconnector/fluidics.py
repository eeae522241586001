"""
Steady-state flow through a mated connector pair, modeled as a linear resistance network.

Each connector contributes one half-path per channel: water tank, rotary joint, silicone tube and mating port
in series. Mating-port interfaces leak to ambient through a shunt conductance; in single-loop mode the fluid
also turns around inside the partner connector, and that junction has its own shunt. Pressures are in Pa,
flows in ml/min, resistances in Pa min/ml and conductances in ml/(min Pa).
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np
import numpy.typing as npt
from scipy.optimize import least_squares

from .force import UnderdeterminedFitError

_logger = logging.getLogger(__name__)

WATER_VISCOSITY = 1.002e-3  # [Pa s] at 20 degC
AMBIENT = "ambient"

# 1 Pa s/m^3 expressed in Pa min/ml
_SI_TO_PA_MIN_PER_ML = 1e-6 / 60.0


class FluidicsError(ValueError):
    pass


class InvalidModeError(FluidicsError):
    pass


class NoPathError(FluidicsError):
    pass


class ElementKind(enum.Enum):
    TANK_PATH = "TankPath"
    ROTARY_JOINT = "RotaryJoint"
    SILICONE_TUBE = "SiliconeTube"
    MATING_PORT = "MatingPort"
    LEAK_SHUNT = "LeakShunt"


class TransferMode(enum.Enum):
    PARALLEL_UNIDIRECTIONAL = "parallel"
    DUAL_CHANNEL_COUNTERFLOW = "dual"
    SINGLE_LOOP = "loop"

    @classmethod
    def parse(cls, text: str | TransferMode) -> TransferMode:
        if isinstance(text, TransferMode):
            return text
        key = text.strip().lower()
        for mode in cls:
            if key in (mode.value, mode.name.lower()):
                return mode
        raise InvalidModeError(f"unknown transfer mode: {text!r}")

    @property
    def is_dual(self) -> bool:
        return self is not TransferMode.SINGLE_LOOP


@dataclasses.dataclass(frozen=True)
class HydraulicElement:
    id: str
    resistance: float  # [Pa min/ml]
    kind: ElementKind

    def __post_init__(self) -> None:
        if not self.resistance > 0:
            raise ValueError(f"{self.id}: resistance must be positive, got {self.resistance}")


def tube_resistance(length: float, inner_diameter: float, viscosity: float = WATER_VISCOSITY) -> float:
    """Hagen-Poiseuille resistance of a round tube [Pa min/ml]."""
    if not (length > 0 and inner_diameter > 0 and viscosity > 0):
        raise ValueError("tube length, diameter and viscosity must be positive")
    r = inner_diameter / 2.0
    return 8.0 * viscosity * length / (math.pi * r**4) * _SI_TO_PA_MIN_PER_ML


@dataclasses.dataclass(frozen=True)
class ConnectorGeometry:
    """Per-connector, per-channel hydraulic path. Only the tube is sized from first principles."""

    tube_length: float = 60e-3  # [m]
    tube_inner_diameter: float = 2e-3  # [m]
    viscosity: float = WATER_VISCOSITY  # [Pa s]
    tank_resistance: float = 1.0  # [Pa min/ml]
    rotary_joint_resistance: float = 2.0  # [Pa min/ml]
    port_resistance: float = 0.5  # [Pa min/ml]

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")

    @property
    def tube(self) -> float:
        return tube_resistance(self.tube_length, self.tube_inner_diameter, self.viscosity)

    @property
    def half_path(self) -> float:
        """Series resistance of one connector's path for one channel."""
        return self.tank_resistance + self.rotary_joint_resistance + self.tube + self.port_resistance


@dataclasses.dataclass(frozen=True)
class LossParams:
    port_conductance: float = 0.0
    """Leak at every mating-port interface [ml/(min Pa)]."""
    turnaround_conductance: float = 0.0
    """Leak at the tank junction where the single loop turns around [ml/(min Pa)]."""

    def __post_init__(self) -> None:
        if self.port_conductance < 0 or self.turnaround_conductance < 0:
            raise ValueError("leak conductances must be nonnegative")


@dataclasses.dataclass(frozen=True)
class Edge:
    u: str
    v: str
    element: HydraulicElement
    channel: int

    @property
    def conductance(self) -> float:
        return 1.0 / self.element.resistance


@dataclasses.dataclass(frozen=True)
class FluidNetwork:
    """
    Directed element graph. Each edge is oriented along the nominal flow; leak shunts point to ``ambient``.
    Inlets are flow sources; outlets and ambient are held at zero gauge pressure.
    """

    edges: tuple[Edge, ...]
    inlets: Mapping[int, str]
    outlets: Mapping[int, str]
    mode: TransferMode

    def __post_init__(self) -> None:
        if len({e.element.id for e in self.edges}) != len(self.edges):
            raise ValueError("element ids must be unique")
        if self.mode.is_dual and set(self.inlets) != {1, 2}:
            raise ValueError("dual-channel networks need inlets for channels 1 and 2")

    @property
    def channel_tags(self) -> dict[str, int]:
        return {e.element.id: e.channel for e in self.edges}

    def channel_edges(self, channel: int) -> frozenset[str]:
        return frozenset(e.element.id for e in self.edges if e.channel == channel)

    def graph(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        for e in self.edges:
            g.add_edge(e.u, e.v, key=e.element.id, element=e.element, channel=e.channel)
        return g

    def with_edge(self, edge: Edge) -> FluidNetwork:
        return dataclasses.replace(self, edges=self.edges + (edge,))


def _half_path(prefix: str, start: str, end: str, geom: ConnectorGeometry, channel: int, reverse: bool) -> list[Edge]:
    parts = [
        (ElementKind.TANK_PATH, geom.tank_resistance),
        (ElementKind.ROTARY_JOINT, geom.rotary_joint_resistance),
        (ElementKind.SILICONE_TUBE, geom.tube),
        (ElementKind.MATING_PORT, geom.port_resistance),
    ]
    if reverse:
        parts.reverse()
    nodes = [start] + [f"{prefix}.{k}" for k in range(len(parts) - 1)] + [end]
    return [
        Edge(nodes[k], nodes[k + 1], HydraulicElement(f"{prefix}.{kind.value}", r, kind), channel)
        for k, (kind, r) in enumerate(parts)
    ]


def _shunt(node: str, conductance: float, channel: int, name: str) -> list[Edge]:
    if conductance <= 0:
        return []
    return [Edge(node, AMBIENT, HydraulicElement(name, 1.0 / conductance, ElementKind.LEAK_SHUNT), channel)]


def build_network(
    mode: TransferMode | str, geometry: ConnectorGeometry | None = None, losses: LossParams | None = None
) -> FluidNetwork:
    """
    Connector A is the one connected to the pump. In the dual modes each channel crosses the interface once;
    counterflow feeds channel 2 from connector B. The single loop goes out on channel 1, turns around in
    B's tank and comes back on channel 2, crossing the interface twice.
    """
    mode = TransferMode.parse(mode)
    geom = geometry or ConnectorGeometry()
    loss = losses or LossParams()
    edges: list[Edge] = []
    if mode.is_dual:
        inlets, outlets = {}, {}
        for ch in (1, 2):
            forward = not (mode is TransferMode.DUAL_CHANNEL_COUNTERFLOW and ch == 2)
            src, dst = ("A", "B") if forward else ("B", "A")
            inlets[ch], outlets[ch] = f"in{ch}", f"out{ch}"
            port = f"port{ch}"
            edges += _half_path(f"{src}{ch}", inlets[ch], port, geom, ch, reverse=False)
            edges += _half_path(f"{dst}{ch}", port, outlets[ch], geom, ch, reverse=True)
            edges += _shunt(port, loss.port_conductance, ch, f"leak.port{ch}")
        return FluidNetwork(tuple(edges), inlets, outlets, mode)

    edges += _half_path("A1", "in1", "port1", geom, 1, reverse=False)
    edges += _half_path("B1", "port1", "turn", geom, 1, reverse=True)
    edges += _half_path("B2", "turn", "port2", geom, 2, reverse=False)
    edges += _half_path("A2", "port2", "out2", geom, 2, reverse=True)
    edges += _shunt("port1", loss.port_conductance, 1, "leak.port1")
    edges += _shunt("port2", loss.port_conductance, 2, "leak.port2")
    edges += _shunt("turn", loss.turnaround_conductance, 1, "leak.turn")
    return FluidNetwork(tuple(edges), {1: "in1"}, {1: "out2"}, mode)


@dataclasses.dataclass(frozen=True)
class FlowResult:
    """Rates for the instrumented channel (channel 1 in the dual modes, the loop otherwise)."""

    inlet_rate: float  # [ml/min]
    outlet_rate: float  # [ml/min]
    efficiency: float
    leak_rate: float  # [ml/min]
    per_edge_flows: Mapping[str, float]
    pressures: Mapping[str, float]

    def __post_init__(self) -> None:
        if not -1e-12 <= self.efficiency <= 1 + 1e-12:
            raise ValueError(f"efficiency out of range: {self.efficiency}")


def _check_paths(network: FluidNetwork) -> None:
    g = network.graph()
    for ch, src in network.inlets.items():
        dst = network.outlets.get(ch, network.outlets.get(1))
        if src not in g or dst not in g or not nx.has_path(g, src, dst):
            raise NoPathError(f"no path from {src} to {dst}")


def solve_flow(network: FluidNetwork, inlet_rate: float) -> FlowResult:
    """
    Nodal analysis: every inlet injects ``inlet_rate``, outlets and ambient sit at zero pressure, and each
    edge carries (p_u - p_v) / R.
    """
    if not inlet_rate >= 0:
        raise ValueError(f"inlet_rate must be nonnegative, got {inlet_rate}")
    _check_paths(network)
    grounded = set(network.outlets.values()) | {AMBIENT}
    nodes = sorted({n for e in network.edges for n in (e.u, e.v)} - grounded)
    index = {n: k for k, n in enumerate(nodes)}
    lap = np.zeros((len(nodes), len(nodes)))
    rhs = np.zeros(len(nodes))
    for e in network.edges:
        c = e.conductance
        for a, b in ((e.u, e.v), (e.v, e.u)):
            if a in index:
                lap[index[a], index[a]] += c
                if b in index:
                    lap[index[a], index[b]] -= c
    for node in network.inlets.values():
        rhs[index[node]] += inlet_rate
    try:
        p = np.linalg.solve(lap, rhs)
    except np.linalg.LinAlgError as exc:
        raise NoPathError("network has a floating subnetwork") from exc
    pressure = {n: float(p[index[n]]) for n in nodes} | {n: 0.0 for n in grounded}
    flows = {e.element.id: (pressure[e.u] - pressure[e.v]) * e.conductance for e in network.edges}

    ch = 1
    out_node = network.outlets[ch]
    outlet = sum(flows[e.element.id] for e in network.edges if e.v == out_node)
    leak = sum(
        flows[e.element.id]
        for e in network.edges
        if e.element.kind is ElementKind.LEAK_SHUNT and (network.mode is TransferMode.SINGLE_LOOP or e.channel == ch)
    )
    efficiency = 1.0 if inlet_rate == 0 else outlet / inlet_rate
    return FlowResult(inlet_rate, outlet, efficiency, leak, flows, pressure)


def isolation_check(network: FluidNetwork, tracer_channel: int) -> bool:
    """
    True iff a tracer injected at the channel's inlet, following the solved flow directions, reaches no
    outlet other than its own. Stagnant edges are passable both ways, since a tracer diffuses through
    standing fluid; otherwise a bridge between two pressure-balanced channels would go unnoticed.
    """
    if not network.mode.is_dual:
        raise InvalidModeError("isolation is defined for the dual-channel modes only")
    if tracer_channel not in network.inlets:
        raise ValueError(f"no channel {tracer_channel}")
    flows = solve_flow(network, 1.0).per_edge_flows
    g = nx.DiGraph()
    for e in network.edges:
        q = flows[e.element.id]
        if q >= -1e-12:
            g.add_edge(e.u, e.v)
        if q <= 1e-12:
            g.add_edge(e.v, e.u)
    start = network.inlets[tracer_channel]
    reached = nx.descendants(g, start) if start in g else set()
    others = {n for ch, n in network.outlets.items() if ch != tracer_channel}
    return not (reached & others)


def channels_disjoint(network: FluidNetwork) -> bool:
    return not (network.channel_edges(1) & network.channel_edges(2))


@dataclasses.dataclass(frozen=True)
class FlowMeasurement:
    mode: TransferMode
    inlet: float  # [ml/min]
    outlet: float  # [ml/min]

    def __post_init__(self) -> None:
        if not (self.inlet > 0 and 0 <= self.outlet <= self.inlet):
            raise ValueError(f"invalid measurement: inlet={self.inlet}, outlet={self.outlet}")

    @property
    def efficiency(self) -> float:
        return self.outlet / self.inlet


@dataclasses.dataclass(frozen=True)
class LossFit:
    losses: LossParams
    rmse: float  # [ml/min]
    fitted: tuple[str, ...]


def calibrate_losses(
    measurements: Iterable[FlowMeasurement], geometry: ConnectorGeometry | None = None
) -> LossFit:
    """
    Least-squares fit of the leak conductances to measured outlet flows.

    The port leak is shared by every interface crossing and is pinned by the dual-channel data; the
    turnaround leak only acts in single-loop mode. Without single-loop data the turnaround leak is not
    identifiable and is left at zero; single-loop data alone cannot separate the two.
    """
    data = list(measurements)
    geom = geometry or ConnectorGeometry()
    if len(data) < 2:
        raise UnderdeterminedFitError(f"need at least 2 measurements, got {len(data)}")
    has_loop = any(m.mode is TransferMode.SINGLE_LOOP for m in data)
    has_dual = any(m.mode.is_dual for m in data)
    if not has_dual:
        raise UnderdeterminedFitError("single-loop data alone cannot separate port and turnaround leaks")
    names = ("port_conductance", "turnaround_conductance") if has_loop else ("port_conductance",)
    # dimensionless conductances g * R_half keep both unknowns near unit scale
    scale = geom.half_path

    def losses_of(x: npt.NDArray[np.float64]) -> LossParams:
        return LossParams(*(float(v) / scale for v in x))

    def residuals(x: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        loss = losses_of(x)
        nets = {mode: build_network(mode, geom, loss) for mode in {m.mode for m in data}}
        return np.array([solve_flow(nets[m.mode], m.inlet).outlet_rate - m.outlet for m in data])

    res = least_squares(
        residuals, x0=np.full(len(names), 0.05), bounds=(0.0, np.inf), method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15
    )
    fit = LossFit(losses_of(res.x), float(np.sqrt(np.mean(res.fun**2))), names)
    _logger.info("loss fit: %s", fit)
    return fit


def efficiency_table(
    losses: LossParams, points: Sequence[tuple[TransferMode, float]], geometry: ConnectorGeometry | None = None
) -> list[tuple[TransferMode, float, float, float]]:
    """(mode, inlet, outlet, efficiency) rows for the given operating points."""
    nets: dict[TransferMode, FluidNetwork] = {}
    rows = []
    for mode, inlet in points:
        net = nets.setdefault(mode, build_network(mode, geometry, losses))
        r = solve_flow(net, inlet)
        rows.append((mode, inlet, r.outlet_rate, r.efficiency))
    return rows
