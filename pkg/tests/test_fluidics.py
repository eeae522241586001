import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epmconnector.datafiles import data_path, read_fluid_csv
from epmconnector.fluidics import (
    AMBIENT,
    ConnectorGeometry,
    Edge,
    ElementKind,
    FlowMeasurement,
    HydraulicElement,
    InvalidModeError,
    LossParams,
    NoPathError,
    TransferMode,
    UnderdeterminedFitError,
    build_network,
    calibrate_losses,
    channels_disjoint,
    efficiency_table,
    isolation_check,
    solve_flow,
    tube_resistance,
)

GEOM = ConnectorGeometry()
R = GEOM.half_path
LOOP, DUAL, PAR = TransferMode.SINGLE_LOOP, TransferMode.DUAL_CHANNEL_COUNTERFLOW, TransferMode.PARALLEL_UNIDIRECTIONAL
SHIPPED = LossParams(0.005180637650632407, 0.036074745088369276)
POINTS = read_fluid_csv(data_path("fluid_points.csv"))

conductance = st.floats(0.0, 0.2)


def dual_efficiency(g):
    """Port node between two half paths, shunt g to ambient: outlet/inlet = 1 / (1 + g R)."""
    return 1.0 / (1.0 + g * R)


def loop_efficiency(g, gt):
    """Walk the ladder back from a unit outlet flow, adding each shunt's leak."""
    q = 1.0
    p = q * R  # port2
    q += g * p
    p += q * R  # turnaround
    q += gt * p
    p += q * R  # port1
    q += g * p
    return 1.0 / q


def test_tube_resistance_hagen_poiseuille():
    # 8 mu L / (pi r^4) = 1.5309e8 Pa s/m^3 = 2.5515 Pa min/ml for 60 mm of 2 mm ID water tubing
    assert tube_resistance(60e-3, 2e-3) == pytest.approx(2.5515, rel=1e-4)
    assert GEOM.half_path == pytest.approx(1.0 + 2.0 + 2.5515 + 0.5, rel=1e-4)
    with pytest.raises(ValueError):
        tube_resistance(0.0, 2e-3)


def test_mode_parsing():
    assert TransferMode.parse("loop") is LOOP
    assert TransferMode.parse("DUAL") is DUAL
    assert TransferMode.parse("parallel_unidirectional") is PAR
    assert len(TransferMode) == 3
    with pytest.raises(InvalidModeError):
        TransferMode.parse("triple")
    with pytest.raises(InvalidModeError):
        build_network("triple")


def test_geometry_and_loss_invariants():
    with pytest.raises(ValueError):
        ConnectorGeometry(tube_length=0.0)
    with pytest.raises(ValueError):
        LossParams(-1.0)
    with pytest.raises(ValueError):
        HydraulicElement("x", 0.0, ElementKind.SILICONE_TUBE)


def test_loop_series_resistance_is_twice_dual():
    loop = solve_flow(build_network(LOOP), 10.0)
    dual = solve_flow(build_network(DUAL), 10.0)
    assert loop.pressures["in1"] == pytest.approx(2 * dual.pressures["in1"], rel=1e-12)
    assert loop.pressures["in1"] == pytest.approx(10.0 * 4 * R, rel=1e-12)


def test_dual_modes_have_disjoint_channels():
    for mode in (DUAL, PAR):
        net = build_network(mode, losses=SHIPPED)
        assert channels_disjoint(net)
        assert net.channel_edges(1) and net.channel_edges(2)


def test_flow_directions():
    par = build_network(PAR)
    dual = build_network(DUAL)
    assert par.edges[0].u == "in1" and "A" in par.edges[0].element.id
    assert any(e.u == "in2" and e.element.id.startswith("A2") for e in par.edges)
    assert any(e.u == "in2" and e.element.id.startswith("B2") for e in dual.edges)


def test_zero_inflow():
    r = solve_flow(build_network(LOOP, losses=SHIPPED), 0.0)
    assert r.outlet_rate == 0.0 and r.efficiency == 1.0


def test_negative_inflow_rejected():
    with pytest.raises(ValueError):
        solve_flow(build_network(DUAL), -1.0)


@given(conductance, conductance)
def test_matches_ladder_oracle(g, gt):
    losses = LossParams(g, gt)
    assert solve_flow(build_network(DUAL, losses=losses), 50.0).efficiency == pytest.approx(dual_efficiency(g))
    assert solve_flow(build_network(PAR, losses=losses), 50.0).efficiency == pytest.approx(dual_efficiency(g))
    assert solve_flow(build_network(LOOP, losses=losses), 50.0).efficiency == pytest.approx(loop_efficiency(g, gt))


@given(st.sampled_from(list(TransferMode)), conductance, conductance, st.floats(0.0, 500.0))
def test_conservation_and_bounds(mode, g, gt, q):
    r = solve_flow(build_network(mode, losses=LossParams(g, gt)), q)
    assert abs(r.inlet_rate - r.outlet_rate - r.leak_rate) <= 1e-9 * max(q, 1.0)
    assert 0.0 <= r.efficiency <= 1.0


@given(conductance, conductance, st.floats(1.0, 300.0), st.floats(1.0, 300.0))
def test_efficiency_independent_of_rate(g, gt, q1, q2):
    net = build_network(LOOP, losses=LossParams(g, gt))
    assert solve_flow(net, q1).efficiency == pytest.approx(solve_flow(net, q2).efficiency, rel=1e-9)


@given(st.floats(1e-4, 0.2), conductance, st.floats(1.0, 300.0))
def test_dual_beats_loop(g, gt, q):
    losses = LossParams(g, gt)
    assert solve_flow(build_network(DUAL, losses=losses), q).efficiency > solve_flow(
        build_network(LOOP, losses=losses), q
    ).efficiency


def test_isolation():
    for mode in (DUAL, PAR):
        net = build_network(mode, losses=SHIPPED)
        assert isolation_check(net, 1) and isolation_check(net, 2)
    with pytest.raises(InvalidModeError):
        isolation_check(build_network(LOOP), 1)
    with pytest.raises(ValueError):
        isolation_check(build_network(DUAL), 3)


@pytest.mark.parametrize("mode", [DUAL, PAR])
def test_injected_cross_edge_is_detected(mode):
    net = build_network(mode, losses=SHIPPED)
    bridge = Edge("A1.1", "A2.1", HydraulicElement("bridge", 0.1, ElementKind.MATING_PORT), 1)
    bad = net.with_edge(bridge)
    assert not (isolation_check(bad, 1) and isolation_check(bad, 2))


def test_disconnected_network():
    net = build_network(DUAL)
    cut = dataclasses.replace(net, edges=tuple(e for e in net.edges if e.element.id != "A1.SiliconeTube"))
    with pytest.raises(NoPathError):
        solve_flow(cut, 1.0)


def test_unique_element_ids():
    net = build_network(LOOP)
    with pytest.raises(ValueError):
        net.with_edge(net.edges[0])


def test_shipped_calibration():
    fit = calibrate_losses(POINTS)
    assert fit.fitted == ("port_conductance", "turnaround_conductance")
    assert fit.losses.port_conductance == pytest.approx(SHIPPED.port_conductance, rel=1e-6)
    assert fit.losses.turnaround_conductance == pytest.approx(SHIPPED.turnaround_conductance, rel=1e-6)
    assert fit.rmse == pytest.approx(1.1106, rel=1e-3)
    for m, (_, _, out, eff) in zip(POINTS, efficiency_table(fit.losses, [(m.mode, m.inlet) for m in POINTS])):
        assert abs(out - m.outlet) < 2.5
        assert abs(eff - m.efficiency) < (0.05 if m.mode is LOOP else 0.03)


def test_loop_example_values():
    r = solve_flow(build_network(LOOP, losses=SHIPPED), 80.0)
    assert r.outlet_rate == pytest.approx(50.48, abs=0.01)
    assert abs(r.efficiency - 0.61) < 0.05
    d = solve_flow(build_network(DUAL, losses=SHIPPED), 102.0)
    assert d.outlet_rate == pytest.approx(98.90, abs=0.01)
    assert 0.95 <= d.efficiency <= 0.975


@pytest.mark.parametrize("truth", [LossParams(0.004, 0.03), LossParams(0.02, 0.001), LossParams(0.001, 0.1)])
def test_round_trip(truth):
    data = []
    for mode, q in [(LOOP, 80.0), (LOOP, 100.0), (DUAL, 102.0), (DUAL, 175.0)]:
        data.append(FlowMeasurement(mode, q, solve_flow(build_network(mode, losses=truth), q).outlet_rate))
    fit = calibrate_losses(data)
    assert fit.losses.port_conductance == pytest.approx(truth.port_conductance, rel=1e-4)
    assert fit.losses.turnaround_conductance == pytest.approx(truth.turnaround_conductance, rel=1e-4)


def test_calibration_data_requirements():
    with pytest.raises(UnderdeterminedFitError):
        calibrate_losses(POINTS[:1])
    with pytest.raises(UnderdeterminedFitError):
        calibrate_losses([m for m in POINTS if m.mode is LOOP])
    dual_only = calibrate_losses([m for m in POINTS if m.mode.is_dual])
    assert dual_only.fitted == ("port_conductance",)
    assert dual_only.losses.turnaround_conductance == 0.0


def test_measurement_invariants():
    with pytest.raises(ValueError):
        FlowMeasurement(LOOP, 0.0, 0.0)
    with pytest.raises(ValueError):
        FlowMeasurement(LOOP, 10.0, 11.0)
    assert FlowMeasurement(LOOP, 80.0, 49.0).efficiency == pytest.approx(0.6125)


def test_leaks_point_to_ambient():
    net = build_network(LOOP, losses=SHIPPED)
    shunts = [e for e in net.edges if e.element.kind is ElementKind.LEAK_SHUNT]
    assert len(shunts) == 3 and all(e.v == AMBIENT for e in shunts)
    assert np.isclose(sum(solve_flow(net, 1.0).per_edge_flows[e.element.id] for e in shunts), 1 - 0.631, atol=1e-3)
