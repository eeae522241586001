import json

import pytest

from epmconnector.datafiles import (
    DataFormatError,
    data_path,
    read_dock_targets,
    read_fluid_csv,
    read_force_csv,
    read_quantities,
)
from epmconnector.fluidics import TransferMode
from epmconnector.params import (
    ModelParameters,
    ParameterFileError,
    default_document,
    load_parameters,
    update_parameter_file,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_shipped_fixtures_parse():
    assert len(read_force_csv(data_path("force_gap.csv"))) == 11
    fluid = read_fluid_csv(data_path("fluid_points.csv"))
    assert [m.mode for m in fluid] == [TransferMode.SINGLE_LOOP] * 3 + [TransferMode.DUAL_CHANNEL_COUNTERFLOW] * 3
    assert read_dock_targets(data_path("dock_targets.csv")) == {0.0: 29, 10.0: 27, 20.0: 22}
    assert read_quantities(data_path("flex_targets.csv"))["axial_extension_mm"] == 20.0


def test_force_fixture_marks_quoted_points():
    lines = data_path("force_gap.csv").read_text().splitlines()
    quoted = [line for line in lines if line.endswith(",quoted")]
    assert quoted == ["0.0,14.6,quoted", "0.1,7.7,quoted", "1.0,2.34,quoted"]


def test_extra_columns_and_blank_lines_tolerated(tmp_path):
    p = write(tmp_path, "note,gap_mm,force_N\n\nx,0.5,3.0\n")
    (m,) = read_force_csv(p)
    assert m.gap == pytest.approx(0.5e-3) and m.force == 3.0


@pytest.mark.parametrize(
    "text,line",
    [
        ("gap_mm,force_N\n0,14.6\n0.1,abc\n", 3),
        ("gap_mm,force_N\n0,14.6\n0.1\n", 3),
        ("gap,force\n0,1\n", 1),
        ("", 1),
        ("gap_mm,force_N\n0,nan\n", 2),
        ("gap_mm,force_N\n-1,2\n", 2),
    ],
)
def test_force_csv_errors_name_the_line(tmp_path, text, line):
    with pytest.raises(DataFormatError) as info:
        read_force_csv(write(tmp_path, text))
    assert info.value.line == line
    assert f":{line}:" in str(info.value)


@pytest.mark.parametrize(
    "text,line",
    [
        ("mode,inlet_ml_min,outlet_ml_min\nloop,80,49\ntriple,1,1\n", 3),
        ("mode,inlet_ml_min,outlet_ml_min\ndual,10,11\n", 2),
    ],
)
def test_fluid_csv_errors(tmp_path, text, line):
    with pytest.raises(DataFormatError) as info:
        read_fluid_csv(write(tmp_path, text))
    assert info.value.line == line


def test_dock_target_errors(tmp_path):
    with pytest.raises(DataFormatError):
        read_dock_targets(write(tmp_path, "tilt_deg,success_count\n0,2.5\n"))
    with pytest.raises(DataFormatError):
        read_dock_targets(write(tmp_path, "tilt_deg,success_count\n"))


def test_parameter_round_trip():
    p = load_parameters()
    assert ModelParameters.from_dict(p.to_dict()) == p
    assert p.to_dict() == default_document()


def test_parameter_override(tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps({"docking": {"gravity_load": 0.01}}))
    p = load_parameters(f)
    assert p.docking.gravity_load == 0.01
    assert p.force == load_parameters().force
    assert load_parameters(tmp_path / "missing.json") == load_parameters()


@pytest.mark.parametrize(
    "doc",
    [
        {"docking": {"warp": 1}},
        {"nonsense": {}},
        {"force": 3},
        {"force": {"leakage_fraction": 1.5}},
        [],
    ],
)
def test_bad_parameter_files(tmp_path, doc):
    f = tmp_path / "p.json"
    f.write_text(json.dumps(doc))
    with pytest.raises(ParameterFileError):
        load_parameters(f)


def test_unparseable_parameter_file(tmp_path):
    f = tmp_path / "p.json"
    f.write_text("{\n oops")
    with pytest.raises(ParameterFileError) as info:
        load_parameters(f)
    assert "p.json:2" in str(info.value)


def test_update_parameter_file(tmp_path):
    f = tmp_path / "sub" / "p.json"
    update_parameter_file(f, "fluid", {"port_conductance": 0.01})
    update_parameter_file(f, "force", {"leakage_fraction": 0.5})
    doc = json.loads(f.read_text())
    assert doc == {"fluid": {"port_conductance": 0.01}, "force": {"leakage_fraction": 0.5}}
    with pytest.raises(ParameterFileError):
        update_parameter_file(f, "force", {"leakage_fraction": 2.0})
    assert json.loads(f.read_text()) == doc
