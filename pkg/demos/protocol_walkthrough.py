"""Walk two connectors through docking, data exchange and release, printing LED and link state."""

from epmconnector.coupling import ConnectorState, EventKind, Link, led_status, step

LIFECYCLE = [
    EventKind.PROXIMITY_REACHED,
    EventKind.ALIGNMENT_CONVERGED,
    EventKind.MAGNETIZE_PULSE,
    EventKind.LINK_PROBE_OK,
]


def show(link: Link) -> None:
    for cid, state in link.states.items():
        leds = led_status(state)
        print(f"  {cid}: {state.value:<13} green={leds.green.value:<5} red={leds.red.value}")


def advance(link: Link, cid: str, kind: EventKind) -> None:
    link.states[cid], _ = step(link.states[cid], kind)


def main() -> None:
    link = Link(orientation=180.0)  # the pin layout mates in both orientations
    print("pin map at 180 deg:", link.pinmap)
    print("early send:", link.send("A", b"ping").reason)
    for kind in LIFECYCLE:
        advance(link, "A", kind)
        advance(link, "B", kind)
        print(kind.value)
        show(link)
    for src in ("A", "B"):
        res = link.send(src, f"hello from {src}".encode())
        print(f"{src} -> {link.peer(src)}: delivered={res.delivered} seq={res.frame.seq}")
    advance(link, "A", EventKind.DEMAGNETIZE_PULSE)
    print("after A demagnetizes:")
    show(link)
    print("B sends:", link.send("B", b"anyone?").reason)
    assert link.states["A"] is ConnectorState.DISCONNECTED


if __name__ == "__main__":
    main()
