"""
Calibrated model parameters as one JSON document.

The package ships ``data/defaults.json``; a user parameter file (written by ``calibrate``) overrides any
subset of it. Field names follow the dataclasses they populate, in SI units except the fluid leak
conductances, which are in ml/(min Pa).
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any, Mapping

from .compliance import SpringKind, SpringSpec
from .datafiles import data_path
from .docking import ArcMagnetLayout, DockingParams, arc_layout
from .fluidics import LossParams
from .force import ForceCalibration, ForceModel
from .magnetics import EPMAssembly, Polarization, default_assembly

DEFAULTS_FILE = "defaults.json"
_SPRING_FIELDS = ("axial_stiffness", "bending_stiffness", "lateral_stiffness")
_FORCE_FIELDS = ("leakage_fraction", "residual_gap")


class ParameterFileError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class ModelParameters:
    force: ForceCalibration
    docking: DockingParams
    moment_scale: float
    losses: LossParams
    compression: SpringSpec
    conical: SpringSpec

    def __post_init__(self) -> None:
        if not self.moment_scale > 0:
            raise ValueError(f"moment_scale invalid: {self.moment_scale}")
        if self.compression.kind is not SpringKind.COMPRESSION or self.conical.kind is not SpringKind.CONICAL:
            raise ValueError("spring kinds do not match their slots")

    def assembly(self) -> EPMAssembly:
        return default_assembly().with_state(Polarization.ALIGNED)

    def force_model(self) -> ForceModel:
        return ForceModel(self.assembly(), self.force)

    def layout(self) -> ArcMagnetLayout:
        return arc_layout().scaled(self.moment_scale)

    def to_dict(self) -> dict[str, Any]:
        docking = {f.name: getattr(self.docking, f.name) for f in dataclasses.fields(self.docking)}
        docking["moment_scale"] = self.moment_scale
        return {
            "force": {k: getattr(self.force, k) for k in _FORCE_FIELDS},
            "docking": docking,
            "fluid": dataclasses.asdict(self.losses),
            "flex": {
                "compression": {k: getattr(self.compression, k) for k in _SPRING_FIELDS},
                "conical": {k: getattr(self.conical, k) for k in _SPRING_FIELDS},
            },
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> ModelParameters:
        try:
            docking = dict(doc["docking"])
            scale = float(docking.pop("moment_scale"))
            flex = doc["flex"]
            return cls(
                force=ForceCalibration(**{k: float(doc["force"][k]) for k in _FORCE_FIELDS}),
                docking=DockingParams(**docking),
                moment_scale=scale,
                losses=LossParams(**doc["fluid"]),
                compression=SpringSpec(SpringKind.COMPRESSION, **flex["compression"]),
                conical=SpringSpec(SpringKind.CONICAL, **flex["conical"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterFileError(f"invalid parameter document: {exc}") from exc


def _merge(base: dict[str, Any], update: Mapping[str, Any], where: str = "") -> dict[str, Any]:
    out = dict(base)
    for key, value in update.items():
        if key not in base:
            raise ParameterFileError(f"unknown parameter {where}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ParameterFileError(f"{where}{key} must be a section")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def _read_json(path: str | Path) -> dict[str, Any]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParameterFileError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParameterFileError(f"{path}: top level must be an object")
    return doc


def default_document() -> dict[str, Any]:
    return _read_json(data_path(DEFAULTS_FILE))


def load_parameters(path: str | Path | None = None) -> ModelParameters:
    """Shipped defaults, overridden by the file at ``path`` if given and present."""
    doc = default_document()
    if path is not None and Path(path).exists():
        doc = _merge(doc, _read_json(path))
    return ModelParameters.from_dict(doc)


def update_parameter_file(path: str | Path, section: str, values: Mapping[str, Any]) -> dict[str, Any]:
    """Write ``values`` into ``section`` of the file at ``path``, keeping its other content."""
    p = Path(path)
    doc = _read_json(p) if p.exists() else {}
    doc.setdefault(section, {}).update(values)
    # reject anything the loader would refuse before touching the file
    ModelParameters.from_dict(_merge(default_document(), doc))
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc
