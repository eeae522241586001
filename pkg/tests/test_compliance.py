import dataclasses
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epmconnector.compliance import (
    ANGLE_TOL,
    LENGTH_TOL,
    ConnectorGeometry,
    FlexLimits,
    FlexTargets,
    OutOfTravelError,
    SpringKind,
    SpringSpec,
    calibrate_springs,
    constant_force,
    coupling_retained,
    flex_limits,
    fluidic_angular_tolerance,
    max_axial_extension,
    max_bend_angle,
    max_connection_distance,
    max_lateral_offset,
)

F0 = constant_force(14.6)
INF = math.inf


def spring(k_axial=730.0, k_bend=0.5, k_lat=2000.0, kind=SpringKind.COMPRESSION):
    return SpringSpec(kind, k_axial, k_bend, k_lat)


def test_spring_invariants():
    with pytest.raises(ValueError):
        spring(k_axial=0.0)
    with pytest.raises(ValueError):
        SpringSpec(SpringKind.CONICAL, 1.0, 1.0, 1.0, free_length=10e-3, max_travel=20e-3)
    with pytest.raises(ValueError):
        ConnectorGeometry(body_length=0.0)
    with pytest.raises(ValueError):
        ConnectorGeometry(gap_ratio=-1.0)
    with pytest.raises(ValueError):
        FlexLimits(-1.0, 0.0, 0.0, 0.0)
    assert spring().scaled(2.0).axial_stiffness == 1460.0


def test_undeformed_state_is_retained(params, force_model):
    assert coupling_retained(0.0, 0.0, 0.0, params.compression, force_model)


def test_out_of_travel():
    with pytest.raises(OutOfTravelError):
        coupling_retained(26e-3, 0.0, 0.0, spring(), F0)
    with pytest.raises(OutOfTravelError):
        coupling_retained(0.0, 90.0, 0.0, spring(), F0)
    with pytest.raises(ValueError):
        coupling_retained(-1e-3, 0.0, 0.0, spring(), F0)


# --- oracles -------------------------------------------------------------------------------------------


def test_axial_oracle():
    # x = F / k = 14.6 N / 0.73 N/mm
    assert max_axial_extension(spring(730.0), F0) == pytest.approx(20e-3, abs=LENGTH_TOL)


def test_zero_force_gives_no_travel():
    zero = constant_force(0.0)
    s = spring()
    assert max_axial_extension(s, zero) == 0.0
    assert max_bend_angle(s, zero) == 0.0
    assert max_lateral_offset(s, zero) == 0.0


def test_lateral_oracle():
    assert max_lateral_offset(spring(k_lat=2000.0), F0) == pytest.approx(14.6 / 2000.0, abs=LENGTH_TOL)


def test_bend_small_angle_oracle():
    # below 10 degrees the balance is F * arm = k * theta
    k = 14.6 * 10e-3 / math.radians(4.0)
    assert max_bend_angle(spring(k_bend=k), F0) == pytest.approx(4.0, abs=ANGLE_TOL)


def test_halving_bend_stiffness_doubles_small_angle_limit():
    k = 14.6 * 10e-3 / math.radians(3.0)
    a = max_bend_angle(spring(k_bend=k), F0)
    b = max_bend_angle(spring(k_bend=k / 2), F0)
    assert b == pytest.approx(2 * a, abs=2 * ANGLE_TOL)


def test_large_angle_uses_cosine_reduced_arm():
    k = 0.3
    theta = max_bend_angle(spring(k_bend=k), F0)
    assert theta > 10.0
    # the found angle solves F * arm * cos(theta) = k * theta
    lhs = 14.6 * 10e-3 * math.cos(math.radians(theta))
    assert lhs == pytest.approx(k * math.radians(theta), rel=1e-3)


def test_rigid_springs_allow_nothing():
    rigid = SpringSpec(SpringKind.CONICAL, INF, INF, INF)
    assert max_axial_extension(rigid, F0) == 0.0
    assert max_bend_angle(rigid, F0) == 0.0
    assert max_lateral_offset(rigid, F0) == 0.0
    assert fluidic_angular_tolerance(rigid, F0) == 0.0


def test_connection_distance_composition():
    g = ConnectorGeometry()
    s = spring()
    ext = max_axial_extension(s, F0)
    assert max_connection_distance((g, g), (s, s), F0) == pytest.approx(2 * g.body_length + 2 * ext, abs=1e-15)
    assert max_connection_distance((g, g), (s, s), constant_force(0.0)) == pytest.approx(2 * g.body_length)
    long = dataclasses.replace(g, body_length=2 * g.body_length)
    assert max_connection_distance((long, g), (s, s), F0) - max_connection_distance((g, g), (s, s), F0) == (
        pytest.approx(g.body_length, abs=1e-15)
    )


def test_fluidic_tolerance_requires_conical_spring():
    with pytest.raises(ValueError):
        fluidic_angular_tolerance(spring(), F0)


def test_fluidic_tolerance_halving_doubles():
    k = 14.6 * 10e-3 / math.radians(2.5)
    a = fluidic_angular_tolerance(spring(k_bend=k, kind=SpringKind.CONICAL), F0)
    b = fluidic_angular_tolerance(spring(k_bend=k / 2, kind=SpringKind.CONICAL), F0)
    assert b == pytest.approx(2 * a, abs=2 * ANGLE_TOL)


# --- calibrated defaults -------------------------------------------------------------------------------


def test_shipped_springs_match_calibration(params, force_model):
    comp, con = calibrate_springs(force_model)
    for shipped, fresh in ((params.compression, comp), (params.conical, con)):
        assert shipped.axial_stiffness == pytest.approx(fresh.axial_stiffness, rel=1e-9)
        assert shipped.bending_stiffness == pytest.approx(fresh.bending_stiffness, rel=1e-9)
        assert shipped.lateral_stiffness == pytest.approx(fresh.lateral_stiffness, rel=1e-9)
    # k_axial = F(0) / 20 mm with F(0) = 14.1884 N
    assert comp.axial_stiffness == pytest.approx(709.42, rel=1e-4)


def test_shipped_limits(params, force_model):
    lim = flex_limits(params.compression, force_model)
    assert lim.axial_extension == pytest.approx(20e-3, rel=0.10)
    assert lim.bend_angle == pytest.approx(30.0, abs=3.0)
    assert lim.lateral_offset == pytest.approx(6e-3, rel=0.10)
    assert lim.connection_distance == pytest.approx(132e-3, rel=0.10)
    assert fluidic_angular_tolerance(params.conical, force_model) == pytest.approx(20.0, abs=2.0)
    assert set(lim.as_dict()) == {"axial_mm", "bend_deg", "lateral_mm", "distance_mm"}


def test_boundary_consistency(params, force_model):
    s = params.compression
    lim = flex_limits(s, force_model)
    x, t, d = lim.axial_extension, lim.bend_angle, lim.lateral_offset
    assert coupling_retained(x - LENGTH_TOL, 0.0, 0.0, s, force_model)
    assert not coupling_retained(x + LENGTH_TOL, 0.0, 0.0, s, force_model)
    assert coupling_retained(0.0, t - ANGLE_TOL, 0.0, s, force_model)
    assert not coupling_retained(0.0, t + ANGLE_TOL, 0.0, s, force_model)
    assert coupling_retained(0.0, 0.0, d - LENGTH_TOL, s, force_model)
    assert not coupling_retained(0.0, 0.0, d + LENGTH_TOL, s, force_model)
    g = ConnectorGeometry()
    assert lim.connection_distance == pytest.approx(2 * g.body_length + 2 * x, abs=1e-15)


@settings(max_examples=25)
@given(st.floats(0.0, 1.0), st.floats(5.0, 25.0), st.floats(10.0, 40.0), st.floats(1.0, 10.0))
def test_calibration_hits_targets_for_any_gap_ratio(ratio, axial_mm, bend, lateral_mm):
    from epmconnector.params import load_parameters

    model = load_parameters().force_model()
    geom = ConnectorGeometry(gap_ratio=ratio)
    targets = FlexTargets(axial_mm * 1e-3, bend, lateral_mm * 1e-3, 20.0)
    comp, con = calibrate_springs(model, geom, targets)
    assert max_axial_extension(comp, model, geom) == pytest.approx(targets.axial_extension, abs=2 * LENGTH_TOL)
    assert max_bend_angle(comp, model, geom) == pytest.approx(bend, abs=2 * ANGLE_TOL)
    assert max_lateral_offset(comp, model, geom) == pytest.approx(targets.lateral_offset, abs=2 * LENGTH_TOL)
    assert fluidic_angular_tolerance(con, model, geom) == pytest.approx(20.0, abs=2 * ANGLE_TOL)


@settings(max_examples=20)
@given(st.floats(0.1, 1.0), st.sampled_from(["axial", "bend", "lateral"]))
def test_limits_non_increasing_in_stiffness(base, which):
    from epmconnector.params import load_parameters

    p = load_parameters()
    model = p.force_model()
    fn = {"axial": max_axial_extension, "bend": max_bend_angle, "lateral": max_lateral_offset}[which]
    field = {"axial": "axial_stiffness", "bend": "bending_stiffness", "lateral": "lateral_stiffness"}[which]
    values = []
    for factor in (base, 2 * base, 5 * base, 10 * base):
        s = dataclasses.replace(p.compression, **{field: getattr(p.compression, field) * factor})
        values.append(fn(s, model))
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_unit_gap_ratio_reduces_limits(params, force_model):
    opened = ConnectorGeometry(gap_ratio=1.0)
    closed = flex_limits(params.compression, force_model)
    lim = flex_limits(params.compression, force_model, opened)
    assert lim.axial_extension < closed.axial_extension
    assert lim.lateral_offset < closed.lateral_offset
    assert lim.bend_angle <= closed.bend_angle


def test_calibration_rejects_zero_force():
    with pytest.raises(ValueError):
        calibrate_springs(constant_force(0.0))
