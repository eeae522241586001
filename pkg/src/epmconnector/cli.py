"""
Command-line experiment harness.

Each subcommand runs one experiment with the calibrated parameters, writes CSV/JSON artifacts into the output
directory and a manifest with their SHA-256 digests. Settings resolve in the order command-line flag, config
file section, built-in default. Exit codes: 0 success, 1 model or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import io
import json
import logging
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import compliance, coupling, docking, fluidics, force, magnetics
from .datafiles import (
    DataFormatError,
    data_path,
    read_dock_targets,
    read_fluid_csv,
    read_force_csv,
    read_quantities,
    read_rows,
)
from .params import ModelParameters, ParameterFileError, load_parameters, update_parameter_file

_logger = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2
DEFAULT_OUT = "out"
PARAMS_NAME = "params.json"


class UsageError(Exception):
    pass


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# --- settings --------------------------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class Setting:
    kind: type
    default: Any
    help: str
    many: bool = False

    def parse(self, text: str) -> Any:
        if self.many:
            return [self.kind(t) for t in text.replace(",", " ").split()]
        return self.kind(text)


SETTINGS: dict[str, dict[str, Setting]] = {
    "winding": {
        "v_min": Setting(float, 0.0, "lowest drive voltage [V]"),
        "v_max": Setting(float, 30.0, "highest drive voltage [V]"),
        "points": Setting(int, 20, "number of voltages"),
    },
    "force_gap": {
        "gap_max_mm": Setting(float, 1.0, "largest gap [mm]"),
        "step_mm": Setting(float, 0.1, "gap increment [mm]"),
        "data": Setting(str, "", "measured gap_mm,force_N CSV (default: shipped fixture)"),
    },
    "pulse": {
        "voltage": Setting(float, 30.0, "pulse voltage [V]"),
        "current": Setting(float, 10.0, "pulse current [A]"),
        "duration_ms": Setting(float, 1.0, "pulse duration [ms]"),
    },
    "dock": {
        "alpha": Setting(float, [0.0, 10.0, 20.0], "platform tilt(s) [deg]", many=True),
        "spacing_mm": Setting(float, 5.0, "grid spacing [mm]"),
        "points": Setting(int, 7, "grid points per axis"),
    },
    "fluid": {
        "mode": Setting(str, "all", "parallel, dual, loop or all"),
        "inlet": Setting(float, [], "inlet rate(s) [ml/min] (default: measured operating points)", many=True),
    },
    "flex": {},
    "protocol": {
        "script": Setting(str, "", "event script (default: shipped demo)"),
        "orientation_deg": Setting(float, 0.0, "relative face orientation [deg]"),
    },
}
RUN_SETTINGS = {"out", "params", "seed"}
COMMANDS = {
    "winding-compare": "winding",
    "force-gap": "force_gap",
    "pulse": "pulse",
    "dock": "dock",
    "fluid": "fluid",
    "flex": "flex",
    "protocol": "protocol",
}


def read_config(path: str | Path) -> dict[str, dict[str, str]]:
    """INI file with a ``[run]`` section and one section per experiment."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise UsageError(f"config {path}: {exc}") from None
    sections = {s: dict(parser[s]) for s in parser.sections()}
    if not sections:
        raise UsageError(f"config {path} defines no sections")
    for name, values in sections.items():
        known = RUN_SETTINGS if name == "run" else SETTINGS.get(name)
        if known is None:
            raise UsageError(f"config {path}: unknown experiment [{name}]")
        extra = sorted(set(values) - set(known))
        if extra:
            raise UsageError(f"config {path}: unknown key(s) in [{name}]: {', '.join(extra)}")
    return sections


def resolve(experiment: str, flags: Mapping[str, Any], section: Mapping[str, str] | None) -> dict[str, Any]:
    out = {}
    for key, spec in SETTINGS[experiment].items():
        value = flags.get(key)
        if value is None and section and key in section:
            try:
                value = spec.parse(section[key])
            except ValueError:
                raise UsageError(f"[{experiment}] {key}: cannot parse {section[key]!r}") from None
        out[key] = spec.default if value is None else value
    return out


# --- output helpers --------------------------------------------------------------------------------------


def _num(v: float) -> str:
    return format(float(v), ".12g")


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(c) if isinstance(c, (float, np.floating)) else c for c in row])
    return buf.getvalue()


def _json(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclasses.dataclass
class Context:
    out: Path
    params: ModelParameters
    seed: int = 0


@dataclasses.dataclass(frozen=True)
class Run:
    key: str
    """Manifest key, e.g. ``force_gap`` or ``dock_alpha10``."""
    files: dict[str, str]
    settings: dict[str, Any]


def write_run(ctx: Context, run: Run, started: float) -> Path:
    ctx.out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for name, text in run.files.items():
        p = ctx.out / name
        p.write_text(text, encoding="utf-8", newline="")
        outputs.append({"path": name, "sha256": _sha256(p)})
    identity = {"experiment": run.key, "settings": run.settings, "parameters": ctx.params.to_dict(), "seed": ctx.seed}
    manifest = {
        "experiment": run.key,
        "tool_version": tool_version(),
        "config_hash": hashlib.sha256(json.dumps(identity, sort_keys=True).encode()).hexdigest(),
        "seed": ctx.seed,
        "outputs": outputs,
        "wall_time": time.perf_counter() - started,
    }
    path = ctx.out / f"manifest_{run.key}.json"
    path.write_text(_json(manifest), encoding="utf-8")
    return path


# --- experiments -----------------------------------------------------------------------------------------


def _tag(v: float) -> str:
    return format(v, "g").replace(".", "p").replace("-", "m")


def exp_winding(s: dict[str, Any], ctx: Context) -> list[Run]:
    if s["points"] < 1 or s["v_max"] < s["v_min"]:
        raise ValueError("need points >= 1 and v_max >= v_min")
    curves = magnetics.compare_windings(magnetics.experimental_assembly(), np.linspace(s["v_min"], s["v_max"], s["points"]))
    text = _csv(("voltage_V", "b_alnico_only_T", "b_both_T"), curves.rows())
    return [Run("winding", {"winding.csv": text}, s)]


def _gap_grid(gap_max_mm: float, step_mm: float) -> list[float]:
    if not (step_mm > 0 and gap_max_mm >= 0):
        raise ValueError("need step_mm > 0 and gap_max_mm >= 0")
    n = int(round(gap_max_mm / step_mm))
    return [round(k * step_mm, 9) for k in range(n + 1)]


def exp_force_gap(s: dict[str, Any], ctx: Context) -> list[Run]:
    measured = read_force_csv(s["data"] or data_path("force_gap.csv"))
    lookup = {round(m.gap * 1e3, 6): m.force for m in measured}
    gaps = _gap_grid(s["gap_max_mm"], s["step_mm"])
    curve = force.force_gap_curve(ctx.params.assembly(), [g * 1e-3 for g in gaps], ctx.params.force)
    rows = [(g, f, _num(lookup[round(g, 6)]) if round(g, 6) in lookup else "") for g, (_, f) in zip(gaps, curve)]
    text = _csv(("gap_mm", "force_N_model", "force_N_measured"), rows)
    return [Run("force_gap", {"force_gap.csv": text}, s)]


def exp_pulse(s: dict[str, Any], ctx: Context) -> list[Run]:
    pulse = magnetics.PulseSpec(s["voltage"], s["current"], s["duration_ms"] * 1e-3)
    before = magnetics.default_assembly().with_state(magnetics.Polarization.OPPOSED)
    after = magnetics.apply_pulse(before, pulse)
    doc = {
        "voltage_V": s["voltage"],
        "current_A": s["current"],
        "duration_ms": s["duration_ms"],
        "energy_J": round(magnetics.pulse_energy(pulse), 12),
        "switched": after.state is not before.state,
    }
    return [Run("pulse", {"pulse.json": _json(doc)}, s)]


def exp_dock(s: dict[str, Any], ctx: Context) -> list[Run]:
    runs = []
    layout = ctx.params.layout()
    for alpha in s["alpha"]:
        grid = docking.sweep_grid(s["spacing_mm"] * 1e-3, alpha, ctx.params.docking, layout, s["points"])
        tag = _tag(alpha)
        summary = {
            "tilt_deg": alpha,
            "success_count": grid.success_count,
            "success_rate": docking.success_rate(grid),
            "points": s["points"],
            "spacing_mm": s["spacing_mm"],
        }
        # header names the x offset of each column; row k is y = k * spacing
        header = ",".join(f"x_{_num(k * s['spacing_mm'])}mm" for k in range(s["points"])) + "\n"
        files = {f"dock_alpha{tag}.csv": header + grid.to_csv(), f"dock_alpha{tag}.json": _json(summary)}
        runs.append(Run(f"dock_alpha{tag}", files, {**s, "alpha": [alpha]}))
    return runs


def _fluid_points(s: dict[str, Any]) -> list[tuple[fluidics.TransferMode, float]]:
    shipped = read_fluid_csv(data_path("fluid_points.csv"))
    if s["mode"] == "all":
        if s["inlet"]:
            raise UsageError("--inlet needs an explicit --mode")
        return [(m.mode, m.inlet) for m in shipped]
    try:
        mode = fluidics.TransferMode.parse(s["mode"])
    except fluidics.InvalidModeError as exc:
        raise UsageError(str(exc)) from None
    if s["inlet"]:
        return [(mode, float(q)) for q in s["inlet"]]
    return [(mode, m.inlet) for m in shipped if m.mode.is_dual == mode.is_dual]


def exp_fluid(s: dict[str, Any], ctx: Context) -> list[Run]:
    table = fluidics.efficiency_table(ctx.params.losses, _fluid_points(s))
    rows = [(m.value, q, out, eff) for m, q, out, eff in table]
    text = _csv(("mode", "inlet_ml_min", "outlet_ml_min", "efficiency"), rows)
    return [Run("fluid", {"fluid.csv": text}, s)]


def exp_flex(s: dict[str, Any], ctx: Context) -> list[Run]:
    model = ctx.params.force_model()
    doc = compliance.flex_limits(ctx.params.compression, model).as_dict()
    doc["fluidic_deg"] = compliance.fluidic_angular_tolerance(ctx.params.conical, model)
    doc = {k: round(v, 9) for k, v in doc.items()}
    return [Run("flex", {"flex.json": _json(doc)}, s)]


def exp_protocol(s: dict[str, Any], ctx: Context) -> list[Run]:
    path = Path(s["script"] or data_path("protocol_demo.txt"))
    events = coupling.parse_script(path.read_text(encoding="utf-8").splitlines())
    link = coupling.Link(orientation=s["orientation_deg"])
    text = coupling.trace_to_jsonl(coupling.simulate_script(events, link))
    return [Run("protocol", {"protocol.jsonl": text}, s)]


EXPERIMENTS: dict[str, Callable[[dict[str, Any], Context], list[Run]]] = {
    "winding": exp_winding,
    "force_gap": exp_force_gap,
    "pulse": exp_pulse,
    "dock": exp_dock,
    "fluid": exp_fluid,
    "flex": exp_flex,
    "protocol": exp_protocol,
}


def run_experiment(experiment: str, settings: dict[str, Any], ctx: Context) -> list[Path]:
    """Run one experiment and write its outputs; returns the manifest paths."""
    if experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {experiment!r}")
    started = time.perf_counter()
    manifests = []
    for run in EXPERIMENTS[experiment](settings, ctx):
        manifests.append(write_run(ctx, run, started))
        started = time.perf_counter()
    return manifests


# --- report ----------------------------------------------------------------------------------------------


def load_manifest(path: Path) -> dict[str, Any]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        outputs = {o["path"]: o["sha256"] for o in doc["outputs"]}
        key = doc["experiment"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataFormatError(path, 1, f"invalid manifest: {exc}") from None
    for name, digest in outputs.items():
        p = path.parent / name
        if not p.exists() or _sha256(p) != digest:
            raise DataFormatError(path, 1, f"output {name} is missing or does not match its digest")
    return {"experiment": key, "dir": path.parent, "outputs": outputs}


def collect_manifests(inputs: Sequence[str | Path]) -> dict[str, dict[str, Any]]:
    found: dict[str, dict[str, Any]] = {}
    for item in inputs:
        p = Path(item)
        paths = sorted(p.glob("manifest_*.json")) if p.is_dir() else [p]
        for mp in paths:
            if not mp.exists():
                raise DataFormatError(mp, 0, "manifest not found")
            m = load_manifest(mp)
            found[m["experiment"]] = m
    return found


def _read_table(path: Path) -> list[dict[str, str]]:
    return read_rows(path, (), lambda row, line: row)


def _extract(quantity: str, m: dict[str, Any]) -> float | None:
    d: Path = m["dir"]
    key = m["experiment"]
    if key == "winding":
        rows = _read_table(d / "winding.csv")
        ok = [float(r["b_alnico_only_T"]) >= float(r["b_both_T"]) for r in rows]
        return sum(ok) / len(ok) if ok else None
    if key == "pulse":
        return json.loads((d / "pulse.json").read_text())["energy_J"]
    if key == "force_gap":
        gap = float(quantity.removeprefix("holding_force_").removesuffix("mm"))
        for r in _read_table(d / "force_gap.csv"):
            if abs(float(r["gap_mm"]) - gap) < 1e-9:
                return float(r["force_N_model"])
        return None
    if key.startswith("dock_alpha"):
        return 100.0 * json.loads((d / f"{key}.json").read_text())["success_rate"]
    if key == "fluid":
        mode, _, rest = quantity.partition("_efficiency_")
        inlet = float(rest.removesuffix("ml_min"))
        for r in _read_table(d / "fluid.csv"):
            if r["mode"] == mode and abs(float(r["inlet_ml_min"]) - inlet) < 1e-9:
                return 100.0 * float(r["efficiency"])
        return None
    if key == "flex":
        doc = json.loads((d / "flex.json").read_text())
        name = {
            "axial_extension": "axial_mm",
            "bend_angle": "bend_deg",
            "lateral_offset": "lateral_mm",
            "connection_distance": "distance_mm",
            "fluidic_angle": "fluidic_deg",
        }[quantity]
        return doc[name]
    return None


def build_report(manifests: Mapping[str, dict[str, Any]]) -> tuple[str, int]:
    """Comparison table and the number of absent quantities. No manifests gives a header-only table."""
    rows: list[tuple[str, str, str, str]] = []
    absent = 0
    if manifests:
        targets = read_rows(
            data_path("paper_values.csv"),
            ("quantity", "paper_value", "experiment"),
            lambda r, line: (r["quantity"], float(r["paper_value"]), r["experiment"]),
        )
        for quantity, reference, key in targets:
            value = _extract(quantity, manifests[key]) if key in manifests else None
            if value is None:
                absent += 1
                rows.append((quantity, _num(reference), "absent", ""))
            else:
                rows.append((quantity, _num(reference), _num(value), _num(abs(value - reference) / abs(reference))))
    return _csv(("quantity", "paper_value", "model_value", "rel_error"), rows), absent


# --- calibration -----------------------------------------------------------------------------------------


def calibrate(target: str, data: str | None, ctx: Context, params_file: Path) -> dict[str, Any]:
    """Run the owning module's fit, write the parameter file section and return a residual summary."""
    p = ctx.params
    if target == "force":
        fit = force.calibrate_force_model(read_force_csv(data or data_path("force_gap.csv")), p.assembly())
        cal = fit.calibration
        update_parameter_file(
            params_file, "force", {"leakage_fraction": cal.leakage_fraction, "residual_gap": cal.residual_gap}
        )
        return {"rmse_N": fit.rmse, "rmse_pct_of_peak": 100.0 * fit.rmse / 14.6, **fit.as_dict()}
    if target == "fluid":
        data_pts = read_fluid_csv(data or data_path("fluid_points.csv"))
        fit = fluidics.calibrate_losses(data_pts)
        update_parameter_file(params_file, "fluid", dataclasses.asdict(fit.losses))
        table = fluidics.efficiency_table(fit.losses, [(m.mode, m.inlet) for m in data_pts])
        worst = max(abs(eff - m.efficiency) for m, (*_, eff) in zip(data_pts, table))
        return {"rmse_ml_min": fit.rmse, "max_efficiency_error_pp": 100.0 * worst, **dataclasses.asdict(fit.losses)}
    if target == "flex":
        q = read_quantities(data or data_path("flex_targets.csv"))
        try:
            targets = compliance.FlexTargets(
                q["axial_extension_mm"] * 1e-3, q["bend_angle_deg"], q["lateral_offset_mm"] * 1e-3, q["fluidic_angle_deg"]
            )
        except KeyError as exc:
            raise DataFormatError(data or "flex targets", 1, f"missing quantity {exc}") from None
        comp, con = compliance.calibrate_springs(p.force_model(), targets=targets)
        keys = ("axial_stiffness", "bending_stiffness", "lateral_stiffness")
        update_parameter_file(
            params_file,
            "flex",
            {"compression": {k: getattr(comp, k) for k in keys}, "conical": {k: getattr(con, k) for k in keys}},
        )
        limits = compliance.flex_limits(comp, p.force_model()).as_dict()
        limits["fluidic_deg"] = compliance.fluidic_angular_tolerance(con, p.force_model())
        return limits
    if target == "dock":
        targets = read_dock_targets(data or data_path("dock_targets.csv"))
        pinned = {k: v for k, v in docking.PINNED_OUTCOMES.items() if k[0] in targets}
        cal = docking.calibrate_docking(docking.arc_layout(), p.docking, targets=targets, pinned=pinned)
        values = {
            "gravity_load": cal.params.gravity_load,
            "spring_restoring": cal.params.spring_restoring,
            "alignment_tolerance": cal.params.alignment_tolerance,
            "moment_scale": cal.moment_scale,
        }
        update_parameter_file(params_file, "docking", values)
        return {**values, "load_window_N": list(cal.load_window), "counts": {str(a): n for a, n in cal.counts.items()}}
    raise UsageError(f"unknown calibration target {target!r}")


# --- argument parsing ------------------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="epmconnector", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--config", help="INI file with [run] and per-experiment sections")
    parser.add_argument("--out", help=f"output directory (default {DEFAULT_OUT})")
    parser.add_argument("--params", help=f"parameter file (default <out>/{PARAMS_NAME})")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=tool_version())
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command, experiment in COMMANDS.items():
        p = sub.add_parser(command, help=f"run the {experiment} experiment")
        for key, spec in SETTINGS[experiment].items():
            p.add_argument(
                "--" + key.replace("_", "-"),
                dest=key,
                type=spec.kind,
                nargs="+" if spec.many else None,
                default=None,
                help=f"{spec.help} (default {spec.default})",
            )
    sub.add_parser("run", help="run every experiment in the config, or all of them with defaults")
    cal = sub.add_parser("calibrate", help="fit a module's parameters and update the parameter file")
    cal.add_argument("target", choices=("force", "dock", "fluid", "flex"))
    cal.add_argument("data_path", nargs="?", help="measurement CSV (default: shipped fixture)")
    rep = sub.add_parser("report", help="compare run outputs with the measured values")
    rep.add_argument("manifests", nargs="*", help="manifest files or directories (default: the output directory)")
    return parser


def _context(args: argparse.Namespace, run_section: Mapping[str, str]) -> tuple[Context, Path]:
    out = Path(args.out or run_section.get("out") or DEFAULT_OUT)
    params_file = Path(args.params or run_section.get("params") or out / PARAMS_NAME)
    try:
        seed = int(run_section.get("seed", 0))
    except ValueError:
        raise UsageError(f"[run] seed must be an integer, got {run_section['seed']!r}") from None
    return Context(out, load_parameters(params_file), seed), params_file


def _dispatch(args: argparse.Namespace) -> int:
    config = read_config(args.config) if args.config else {}
    ctx, params_file = _context(args, config.get("run", {}))
    if args.command == "run":
        names = [s for s in config if s != "run"] if args.config else list(EXPERIMENTS)
        if args.config and not names:
            raise UsageError(f"config {args.config} names no experiment")
        for name in names:
            for path in run_experiment(name, resolve(name, {}, config.get(name)), ctx):
                print(path)
        return EXIT_OK
    if args.command == "calibrate":
        summary = calibrate(args.target, args.data_path, ctx, params_file)
        print(json.dumps(summary, indent=2, sort_keys=True))
        print(f"parameters written to {params_file}")
        return EXIT_OK
    if args.command == "report":
        manifests = collect_manifests(args.manifests or ([ctx.out] if ctx.out.is_dir() else []))
        text, absent = build_report(manifests)
        ctx.out.mkdir(parents=True, exist_ok=True)
        (ctx.out / "report.csv").write_text(text, encoding="utf-8", newline="")
        sys.stdout.write(text)
        if absent:
            print(f"{absent} quantities absent", file=sys.stderr)
        return EXIT_ERROR if absent else EXIT_OK
    experiment = COMMANDS[args.command]
    settings = resolve(experiment, vars(args), config.get(experiment))
    for path in run_experiment(experiment, settings, ctx):
        print(path)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError, ParameterFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
