"""
Connection lifecycle of a connector pair: state machine, pogo-pin mating, framed UART link and status LEDs.

The transition function is total. Pairs outside the table leave the state unchanged and return a rejection
action instead of raising, so the whole state x event space can be enumerated.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
import math
from typing import Iterable, Iterator, Mapping, Sequence

_logger = logging.getLogger(__name__)

DEFAULT_MTU = 64


class ConnectorState(enum.Enum):
    DISCONNECTED = "Disconnected"
    APPROACHING = "Approaching"
    ALIGNED = "Aligned"
    COUPLED = "Coupled"
    LINK_UP = "LinkUp"
    DEMAGNETIZING = "Demagnetizing"

    @property
    def is_coupled(self) -> bool:
        return self in (ConnectorState.COUPLED, ConnectorState.LINK_UP)


class EventKind(enum.Enum):
    PROXIMITY_REACHED = "ProximityReached"
    ALIGNMENT_CONVERGED = "AlignmentConverged"
    MAGNETIZE_PULSE = "MagnetizePulse"
    DEMAGNETIZE_PULSE = "DemagnetizePulse"
    SEND_FRAME = "SendFrame"
    LINK_PROBE_OK = "LinkProbeOk"
    TIMEOUT = "Timeout"


class Pin(enum.Enum):
    VCC = "VCC"
    GND = "GND"
    TX = "TX"
    RX = "RX"


class Green(enum.Enum):
    OFF = "Off"
    SOLID = "Solid"


class Red(enum.Enum):
    OFF = "Off"
    BLINK = "Blink"


@dataclasses.dataclass(frozen=True)
class LedState:
    green: Green = Green.OFF
    red: Red = Red.OFF

    def as_dict(self) -> dict[str, str]:
        return {"green": self.green.value, "red": self.red.value}


LEDS_OFF = LedState()


@dataclasses.dataclass(frozen=True)
class Frame:
    payload: bytes
    source: str
    seq: int
    mtu: int = DEFAULT_MTU

    def __post_init__(self) -> None:
        if self.mtu <= 0:
            raise ValueError(f"mtu invalid: {self.mtu}")
        if len(self.payload) > self.mtu:
            raise ValueError(f"payload of {len(self.payload)} bytes exceeds MTU {self.mtu}")
        if self.seq < 0:
            raise ValueError(f"seq invalid: {self.seq}")


@dataclasses.dataclass(frozen=True)
class Event:
    kind: EventKind
    frame: Frame | None = None

    def __post_init__(self) -> None:
        if (self.kind is EventKind.SEND_FRAME) != (self.frame is not None):
            raise ValueError("a frame is carried by SendFrame events only")


class ActionKind(enum.Enum):
    ENTER = "enter"
    SET_LEDS = "set_leds"
    ENERGIZE_COIL = "energize_coil"
    TRANSMIT = "transmit"
    REJECT = "reject"


@dataclasses.dataclass(frozen=True)
class Action:
    kind: ActionKind
    state: ConnectorState | None = None
    leds: LedState | None = None
    detail: str = ""


def led_status(state: ConnectorState, transmitting: bool = False) -> LedState:
    green = Green.SOLID if state.is_coupled else Green.OFF
    red = Red.BLINK if transmitting and state is ConnectorState.LINK_UP else Red.OFF
    return LedState(green, red)


_S, _E = ConnectorState, EventKind

_TABLE: Mapping[tuple[ConnectorState, EventKind], ConnectorState] = {
    (_S.DISCONNECTED, _E.PROXIMITY_REACHED): _S.APPROACHING,
    (_S.APPROACHING, _E.ALIGNMENT_CONVERGED): _S.ALIGNED,
    (_S.ALIGNED, _E.MAGNETIZE_PULSE): _S.COUPLED,
    (_S.COUPLED, _E.LINK_PROBE_OK): _S.LINK_UP,
    # the partner drifted away before the EPM was switched on
    (_S.APPROACHING, _E.TIMEOUT): _S.DISCONNECTED,
    (_S.ALIGNED, _E.TIMEOUT): _S.DISCONNECTED,
    (_S.DEMAGNETIZING, _E.TIMEOUT): _S.DISCONNECTED,
}


def _enter(state: ConnectorState) -> list[Action]:
    return [Action(ActionKind.ENTER, state=state), Action(ActionKind.SET_LEDS, leds=led_status(state))]


def step(state: ConnectorState, event: Event | EventKind) -> tuple[ConnectorState, tuple[Action, ...]]:
    """
    One transition. A demagnetizing pulse on a coupled connector passes through Demagnetizing and ends in
    Disconnected; both entries appear in the actions.
    """
    if isinstance(event, EventKind):
        event = Event(event)
    kind = event.kind
    if kind is _E.DEMAGNETIZE_PULSE and state.is_coupled:
        actions = [Action(ActionKind.ENERGIZE_COIL, detail="demagnetize")]
        actions += _enter(_S.DEMAGNETIZING) + _enter(_S.DISCONNECTED)
        return _S.DISCONNECTED, tuple(actions)
    if kind is _E.SEND_FRAME and state is _S.LINK_UP:
        return state, (Action(ActionKind.TRANSMIT, leds=led_status(state, True), detail=f"seq={event.frame.seq}"),)
    nxt = _TABLE.get((state, kind))
    if nxt is None:
        reason = f"{kind.value} ignored in {state.value}"
        _logger.info("rejected: %s", reason)
        return state, (Action(ActionKind.REJECT, detail=reason),)
    actions = [Action(ActionKind.ENERGIZE_COIL, detail="magnetize")] if kind is _E.MAGNETIZE_PULSE else []
    return nxt, tuple(actions + _enter(nxt))


LIFECYCLE: tuple[EventKind, ...] = (
    _E.PROXIMITY_REACHED,
    _E.ALIGNMENT_CONVERGED,
    _E.MAGNETIZE_PULSE,
    _E.LINK_PROBE_OK,
)


def run_events(state: ConnectorState, events: Iterable[Event | EventKind]) -> ConnectorState:
    for e in events:
        state, _ = step(state, e)
    return state


# --- pogo pins -------------------------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class PinMap:
    mapping: Mapping[Pin, Pin]
    orientation: float = 0.0  # [deg]

    def __post_init__(self) -> None:
        if set(self.mapping) != set(Pin) or set(self.mapping.values()) != set(Pin):
            raise ValueError(f"pin mapping must be a bijection on {[p.value for p in Pin]}")
        if self.mapping[Pin.VCC] is not Pin.VCC or self.mapping[Pin.GND] is not Pin.GND:
            raise ValueError("power pins must meet their own kind")
        if self.mapping[Pin.TX] is not Pin.RX or self.mapping[Pin.RX] is not Pin.TX:
            raise ValueError("TX must meet RX")


@dataclasses.dataclass(frozen=True)
class PinLayout:
    """Contact pads on the mating face, (x, y) in mm; a pin may have several redundant pads."""

    contacts: tuple[tuple[Pin, float, float], ...]
    pad_radius: float = 0.3  # [mm]

    def __post_init__(self) -> None:
        if {c[0] for c in self.contacts} != set(Pin):
            raise ValueError("every pin needs at least one pad")
        if not self.pad_radius > 0:
            raise ValueError("pad_radius must be positive")


# VCC in the middle, GND on the y axis, TX and RX on the diagonals. Seen through the partner's face the
# layout is mirrored about the x axis, which puts every TX pad onto an RX pad; the pattern is invariant under
# a half turn but not a quarter turn.
DEFAULT_PIN_LAYOUT = PinLayout(
    (
        (Pin.VCC, 0.0, 0.0),
        (Pin.GND, 0.0, 4.0),
        (Pin.GND, 0.0, -4.0),
        (Pin.TX, 3.0, 2.0),
        (Pin.TX, -3.0, -2.0),
        (Pin.RX, -3.0, 2.0),
        (Pin.RX, 3.0, -2.0),
    )
)


def mate_pins(relative_orientation: float, layout: PinLayout = DEFAULT_PIN_LAYOUT) -> PinMap | None:
    """
    Pin map for the partner turned by ``relative_orientation`` degrees, or None if some pad of either face
    lands off the other face's pads or a pin would touch two different partner pins.
    """
    if not 0 <= relative_orientation < 360:
        raise ValueError(f"orientation must be in [0, 360), got {relative_orientation}")
    psi = math.radians(relative_orientation)
    c, s = math.cos(psi), math.sin(psi)
    peer = [(pin, c * x + s * y, s * x - c * y) for pin, x, y in layout.contacts]
    mapping: dict[Pin, Pin] = {}
    matched = set()
    for pin, x, y in layout.contacts:
        hits = [(k, q) for k, (q, px, py) in enumerate(peer) if math.hypot(px - x, py - y) <= layout.pad_radius]
        if len(hits) != 1:
            return None
        k, q = hits[0]
        if mapping.setdefault(pin, q) is not q:
            return None
        matched.add(k)
    if len(matched) != len(peer):
        return None
    try:
        return PinMap(mapping, relative_orientation)
    except ValueError:
        return None


def mating_orientations(layout: PinLayout = DEFAULT_PIN_LAYOUT, step_deg: float = 1.0) -> list[float]:
    n = int(round(360.0 / step_deg))
    return [k * step_deg for k in range(n) if mate_pins(k * step_deg, layout) is not None]


# --- data link -------------------------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class TransferResult:
    delivered: bool
    reason: str
    leds: tuple[LedState, LedState]
    frame: Frame


def transfer(
    frame: Frame,
    link: tuple[ConnectorState, ConnectorState],
    pinmap: PinMap | None,
    last_seq: int | None = None,
) -> TransferResult:
    """
    Deliver ``frame`` from link[0] to link[1]. Both ends blink red while the frame is on the wire; a frame
    whose seq does not exceed ``last_seq`` from the same source is refused.
    """
    if pinmap is None:
        raise ValueError("no valid pin map: the faces are not mated")
    a, b = link
    if not (a is ConnectorState.LINK_UP and b is ConnectorState.LINK_UP):
        down = [s.value for s in link if s is not ConnectorState.LINK_UP]
        return TransferResult(False, f"endpoint not LinkUp: {', '.join(down)}", (led_status(a), led_status(b)), frame)
    if last_seq is not None and frame.seq <= last_seq:
        return TransferResult(False, f"stale seq {frame.seq} <= {last_seq}", (led_status(a), led_status(b)), frame)
    return TransferResult(True, "ok", (led_status(a, True), led_status(b, True)), frame)


class Link:
    """Two endpoints with per-source sequence counters."""

    def __init__(
        self, ids: tuple[str, str] = ("A", "B"), orientation: float = 0.0, mtu: int = DEFAULT_MTU
    ) -> None:
        self.ids = ids
        self.states = {i: ConnectorState.DISCONNECTED for i in ids}
        self.pinmap = mate_pins(orientation)
        self.mtu = mtu
        self._next_seq = {i: 0 for i in ids}
        self._last_delivered: dict[str, int] = {}

    def peer(self, cid: str) -> str:
        if cid not in self.states:
            raise KeyError(f"unknown connector {cid!r}")
        return self.ids[1] if cid == self.ids[0] else self.ids[0]

    def frame(self, source: str, payload: bytes) -> Frame:
        f = Frame(payload, source, self._next_seq[source], self.mtu)
        self._next_seq[source] += 1
        return f

    def send(self, source: str, payload: bytes) -> TransferResult:
        f = self.frame(source, payload)
        dst = self.peer(source)
        if self.pinmap is None:
            leds = (led_status(self.states[source]), led_status(self.states[dst]))
            return TransferResult(False, "pins not mated", leds, f)
        res = transfer(f, (self.states[source], self.states[dst]), self.pinmap, self._last_delivered.get(source))
        if res.delivered:
            self._last_delivered[source] = f.seq
        return res


# --- event scripts ---------------------------------------------------------------------------------------


class ScriptError(ValueError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclasses.dataclass(frozen=True)
class ScriptEvent:
    time_ms: float
    connector: str
    kind: EventKind
    payload: bytes = b""


def parse_script(lines: Iterable[str]) -> list[ScriptEvent]:
    """
    ``<time_ms> <connector_id> <event> [payload]`` per line; ``#`` starts a comment. The payload, only for
    SendFrame, is the rest of the line as UTF-8. Times must not decrease.
    """
    out: list[ScriptEvent] = []
    names = {k.value.lower(): k for k in EventKind}
    last = -math.inf
    for n, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split(maxsplit=3)
        if len(parts) < 3:
            raise ScriptError(n, f"expected '<time_ms> <connector_id> <event>', got {text!r}")
        try:
            t = float(parts[0])
        except ValueError:
            raise ScriptError(n, f"bad time {parts[0]!r}") from None
        if not math.isfinite(t) or t < last:
            raise ScriptError(n, f"time {parts[0]} is out of order")
        kind = names.get(parts[2].lower())
        if kind is None:
            raise ScriptError(n, f"unknown event {parts[2]!r}")
        payload = parts[3].encode() if len(parts) > 3 else b""
        if payload and kind is not EventKind.SEND_FRAME:
            raise ScriptError(n, f"{kind.value} takes no payload")
        last = t
        out.append(ScriptEvent(t, parts[1], kind, payload))
    return out


def simulate_script(events: Sequence[ScriptEvent], link: Link | None = None) -> Iterator[dict]:
    """Advance the pair through the script; yields one trace record per event."""
    link = link or Link()
    for ev in events:
        cid = ev.connector
        try:
            link.peer(cid)
        except KeyError:
            raise ValueError(f"unknown connector {cid!r} at t={ev.time_ms}") from None
        before = link.states[cid]
        record = {"time": ev.time_ms, "connector": cid, "state_before": before.value, "event": ev.kind.value}
        if ev.kind is EventKind.SEND_FRAME:
            res = link.send(cid, ev.payload)
            record.update(
                state_after=before.value,
                leds=res.leds[0].as_dict(),
                delivered=res.delivered,
                seq=res.frame.seq,
                reason=res.reason,
            )
        else:
            after, actions = step(before, ev.kind)
            link.states[cid] = after
            record.update(state_after=after.value, leds=led_status(after).as_dict())
            rejected = [a.detail for a in actions if a.kind is ActionKind.REJECT]
            if rejected:
                record["rejected"] = rejected[0]
        yield record


def trace_to_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
