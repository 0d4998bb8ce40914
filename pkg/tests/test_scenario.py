"""Mobility traces, scenario files, and the synthetic grid generator."""

import json

import pytest

from olsrtune.errors import ConfigurationError, TraceParseError, TraceValidationError
from olsrtune.scenario import (
    CbrFlow,
    FlowTemplate,
    GridSpec,
    LossModel,
    MobilityTrace,
    Scenario,
    generate_grid_scenario,
    load_scenario,
    load_trace,
    position_at,
    relabel_scenario,
    save_scenario,
    serialize_trace,
)


def trace_of(samples):
    nodes = {s[1] for s in samples}
    duration = max(s[0] for s in samples)
    return MobilityTrace(node_count=len(nodes), samples=tuple(samples), duration=duration)


class TestMobilityTrace:
    def test_valid(self):
        tr = trace_of([(0.0, 0, 0.0, 0.0), (0.0, 1, 5.0, 5.0), (1.0, 0, 1.0, 0.0)])
        assert tr.node_ids == (0, 1)

    def test_unsorted_rejected(self):
        with pytest.raises(TraceValidationError):
            trace_of([(1.0, 0, 0.0, 0.0), (0.0, 0, 0.0, 0.0)])

    def test_duplicate_rejected(self):
        with pytest.raises(TraceValidationError):
            trace_of([(0.0, 0, 0.0, 0.0), (0.0, 0, 1.0, 1.0)])

    def test_missing_t0_rejected(self):
        with pytest.raises(TraceValidationError):
            trace_of([(0.0, 0, 0.0, 0.0), (1.0, 1, 1.0, 1.0)])

    def test_node_count_mismatch(self):
        with pytest.raises(TraceValidationError):
            MobilityTrace(node_count=3, samples=((0.0, 0, 0.0, 0.0),), duration=0.0)


class TestPositionAt:
    def setup_method(self):
        self.tr = trace_of(
            [(0.0, 0, 0.0, 0.0), (0.0, 1, 9.0, 9.0), (2.0, 0, 10.0, 0.0)]
        )

    def test_exact_sample(self):
        assert position_at(self.tr, 0, 0.0) == (0.0, 0.0)
        assert position_at(self.tr, 0, 2.0) == (10.0, 0.0)

    def test_interpolation(self):
        assert position_at(self.tr, 0, 1.0) == (5.0, 0.0)
        x, y = position_at(self.tr, 0, 0.5)
        assert x == pytest.approx(2.5) and y == 0.0

    def test_hold_after_last(self):
        assert position_at(self.tr, 0, 100.0) == (10.0, 0.0)
        assert position_at(self.tr, 1, 50.0) == (9.0, 9.0)

    def test_unknown_node(self):
        with pytest.raises(ConfigurationError):
            position_at(self.tr, 99, 0.0)

    def test_negative_time(self):
        with pytest.raises(ConfigurationError):
            position_at(self.tr, 0, -0.1)


class TestFlowAndScenarioValidation:
    def test_flow_self_loop(self):
        with pytest.raises(ConfigurationError):
            CbrFlow(source=1, destination=1, packet_size=512, rate=1.0, start=0.0, duration=1.0)

    def test_flow_bad_size(self):
        with pytest.raises(ConfigurationError):
            CbrFlow(source=0, destination=1, packet_size=0, rate=1.0, start=0.0, duration=1.0)

    def test_scenario_flow_unknown_node(self):
        tr = trace_of([(0.0, 0, 0.0, 0.0), (0.0, 1, 5.0, 5.0)])
        flow = CbrFlow(source=0, destination=7, packet_size=64, rate=1.0, start=0.0, duration=1.0)
        with pytest.raises(ConfigurationError):
            Scenario(
                area=(10.0, 10.0), trace=tr, flows=(flow,),
                radio_range=100.0, bandwidth=6e6, sim_duration=10.0,
            )

    def test_scenario_flow_past_end(self):
        tr = trace_of([(0.0, 0, 0.0, 0.0), (0.0, 1, 5.0, 5.0)])
        flow = CbrFlow(source=0, destination=1, packet_size=64, rate=1.0, start=8.0, duration=5.0)
        with pytest.raises(ConfigurationError):
            Scenario(
                area=(10.0, 10.0), trace=tr, flows=(flow,),
                radio_range=100.0, bandwidth=6e6, sim_duration=10.0,
            )

    def test_sample_outside_area(self):
        tr = trace_of([(0.0, 0, 50.0, 0.0)])
        with pytest.raises(ConfigurationError):
            Scenario(
                area=(10.0, 10.0), trace=tr, flows=(),
                radio_range=100.0, bandwidth=6e6, sim_duration=10.0,
            )

    def test_loss_model_validation(self):
        with pytest.raises(ConfigurationError):
            LossModel("rayleigh")
        with pytest.raises(ConfigurationError):
            LossModel("bernoulli", p_at_max_range=1.5)


class TestTraceSerialization:
    def test_round_trip(self):
        tr = trace_of([(0.0, 0, 0.25, 1.5), (0.0, 1, 3.0, 4.0), (1.5, 0, 0.5, 1.5)])
        again = load_trace(serialize_trace(tr))
        assert again.samples == tr.samples
        assert again.node_count == tr.node_count

    def test_parse_error_carries_line(self):
        text = "time_s,node_id,x_m,y_m\n0.0,0,0.0,0.0\n0.0,zebra,1.0,1.0\n"
        with pytest.raises(TraceParseError) as err:
            load_trace(text)
        assert err.value.line_no == 3

    def test_wrong_field_count(self):
        with pytest.raises(TraceParseError):
            load_trace("time_s,node_id,x_m,y_m\n0.0,0,0.0\n")

    def test_empty_rejected(self):
        with pytest.raises(TraceValidationError):
            load_trace("time_s,node_id,x_m,y_m\n")


class TestGridGenerator:
    def spec(self, **kw):
        base = dict(area=(400.0, 300.0), streets=(3, 3), vehicle_count=6,
                    speed=(8.0, 14.0), duration=40.0)
        base.update(kw)
        return GridSpec(**base)

    def test_deterministic(self):
        tmpl = FlowTemplate(start=5.0, duration=10.0)
        a = generate_grid_scenario(self.spec(), 4, tmpl, seed=9)
        b = generate_grid_scenario(self.spec(), 4, tmpl, seed=9)
        assert a.trace.samples == b.trace.samples
        assert a.flows == b.flows

    def test_seed_changes_output(self):
        tmpl = FlowTemplate(start=5.0, duration=10.0)
        a = generate_grid_scenario(self.spec(), 4, tmpl, seed=9)
        b = generate_grid_scenario(self.spec(), 4, tmpl, seed=10)
        assert a.trace.samples != b.trace.samples

    def test_shape(self):
        tmpl = FlowTemplate(start=5.0, duration=10.0)
        scn = generate_grid_scenario(self.spec(), 4, tmpl, seed=9)
        assert scn.trace.node_count == 6
        assert len(scn.flows) == 4
        assert scn.sim_duration == 40.0
        # every flow uses the template parameters with distinct endpoints
        for f in scn.flows:
            assert f.source != f.destination
            assert f.packet_size == tmpl.packet_size
        assert len({(f.source, f.destination) for f in scn.flows}) == 4

    def test_positions_stay_in_area(self):
        scn = generate_grid_scenario(self.spec(vehicle_count=10), 2,
                                     FlowTemplate(start=0.0, duration=10.0), seed=3)
        w, h = scn.area
        for _t, _node, x, y in scn.trace.samples:
            assert -1e-6 <= x <= w + 1e-6
            assert -1e-6 <= y <= h + 1e-6

    def test_too_many_flows(self):
        with pytest.raises(ConfigurationError):
            generate_grid_scenario(self.spec(vehicle_count=2), 3,
                                   FlowTemplate(start=0.0, duration=10.0), seed=1)


class TestScenarioFiles:
    def test_round_trip(self, tmp_path):
        scn = generate_grid_scenario(
            GridSpec(area=(200.0, 200.0), vehicle_count=4, duration=20.0),
            2, FlowTemplate(start=2.0, duration=10.0), seed=5, radio_range=150.0,
        )
        written = save_scenario(scn, tmp_path / "s.json")
        assert [p.name for p in written] == ["s.json", "s_trace.csv"]
        again = load_scenario(tmp_path / "s.json")
        assert again == scn

    def test_trace_resolved_relative_to_json(self, tmp_path):
        scn = generate_grid_scenario(
            GridSpec(area=(200.0, 200.0), vehicle_count=4, duration=20.0),
            1, FlowTemplate(start=2.0, duration=10.0), seed=5,
        )
        sub = tmp_path / "deep"
        sub.mkdir()
        save_scenario(scn, sub / "s.json")
        # loading via a different cwd still finds the side-car trace
        assert load_scenario(sub / "s.json") == scn

    def test_non_scenario_json_rejected(self, tmp_path):
        from olsrtune.errors import InputError

        stray = tmp_path / "stray.json"
        stray.write_text('{"command": "gen"}')
        with pytest.raises(InputError):
            load_scenario(stray)
        stray.write_text("{broken")
        with pytest.raises(InputError):
            load_scenario(stray)

    def test_json_fields(self, tmp_path):
        scn = generate_grid_scenario(
            GridSpec(area=(200.0, 200.0), vehicle_count=4, duration=20.0),
            1, FlowTemplate(start=2.0, duration=10.0), seed=5,
        )
        save_scenario(scn, tmp_path / "s.json")
        doc = json.loads((tmp_path / "s.json").read_text())
        for key in ("area", "radio_range_m", "bandwidth_bps", "duration_s", "loss_model",
                    "trace_file", "flows"):
            assert key in doc


def test_relabel_scenario_permutes_everything():
    tr = trace_of([(0.0, 0, 0.0, 0.0), (0.0, 1, 5.0, 5.0), (1.0, 0, 1.0, 0.0)])
    scn = Scenario(
        area=(10.0, 10.0), trace=tr,
        flows=(CbrFlow(source=0, destination=1, packet_size=64, rate=1.0, start=0.0, duration=1.0),),
        radio_range=100.0, bandwidth=6e6, sim_duration=10.0,
    )
    out = relabel_scenario(scn, {0: 5, 1: 3})
    assert out.trace.node_ids == (3, 5)
    assert out.flows[0].source == 5 and out.flows[0].destination == 3
    assert position_at(out.trace, 5, 1.0) == position_at(scn.trace, 0, 1.0)
