"""Print the 7 x 7 self-alignment maps for the three platform tilts with the shipped parameters."""

from epmconnector.docking import success_rate, sweep_grid
from epmconnector.params import load_parameters


def main() -> None:
    p = load_parameters()
    layout = p.layout()
    for tilt in (0.0, 10.0, 20.0):
        m = sweep_grid(5e-3, tilt, p.docking, layout)
        print(f"tilt {tilt:g} deg: {m.success_count}/49 ({100 * success_rate(m):.1f} %)")
        print("  y\\x " + " ".join(f"{5 * k:>2d}" for k in range(7)))
        for k, row in reversed(list(enumerate(m.grid))):
            print(f"  {5 * k:>3d} " + " ".join(f"{o.value:>2}" for o in row))


if __name__ == "__main__":
    main()
