from dataclasses import replace

import numpy as np
import pytest

from spiketalk.engine import (GridContext, ScenarioValidationError, TimedEvent, compare_baseline,
                              run, schedule_event)
from spiketalk.export import trace_to_csv
from spiketalk.grid import IntegrationError, build_admittance, make_state, steady_state_solve


@pytest.fixture(scope="module")
def adaptive_trace(short_events):
    return run(short_events)


@pytest.fixture(scope="module")
def static_trace(short_events):
    return run(replace(short_events, adaptation_enabled=False))


def window_index(trace, t):
    return next(m for m, r in enumerate(trace) if r.time > t + 1e-12)


def test_constant_load_never_flags(appendix):
    trace = run(replace(appendix, timeline=(), duration=0.3))
    assert all(not r.omega.any() for r in trace)
    assert all(r.spikes_v.sum() == 0 and np.all(r.delta_w == 0) for r in trace)


def test_outage_silences_der3(static_trace):
    m = window_index(static_trace, 0.4)
    assert static_trace[m].omega.any()
    for r in static_trace[m:]:
        assert r.spikes_v[2] == 0 and np.isnan(r.latency_i[2]) and r.currents[2] == 0.0
        assert r.voltage_spikes[2] == () and r.current_spikes[2] == ()
    assert any(r.spikes_v[2] > 0 for r in static_trace[:m])


def test_static_run_keeps_gains(static_trace):
    assert all(np.all(r.gains == 2.0) for r in static_trace)


def test_zero_adaptation_rate_matches_static_bit_exactly(short_events, static_trace):
    sc = replace(short_events, objectives=replace(short_events.objectives, adaptation_rate=0.0))
    assert trace_to_csv(run(sc)) == trace_to_csv(static_trace)


def test_replay_determinism(short_events, adaptive_trace):
    assert trace_to_csv(run(short_events)) == trace_to_csv(adaptive_trace)


def test_causality_prefix(short_events, adaptive_trace):
    truncated = run(replace(short_events, timeline=short_events.timeline[:1]))
    m = window_index(adaptive_trace, 0.4)
    assert trace_to_csv(truncated[:m]) == trace_to_csv(adaptive_trace[:m])
    assert trace_to_csv(truncated[:m + 1]) != trace_to_csv(adaptive_trace[:m + 1])


def test_load_step_to_same_resistance_is_a_no_op(appendix):
    base = replace(appendix, timeline=(), duration=0.2)
    same = replace(base, timeline=(TimedEvent(0.05, "load_step", 2, 50.0),))
    assert trace_to_csv(run(same)) == trace_to_csv(run(base))


def test_reference_step_raises_every_node(appendix):
    sc = replace(appendix, timeline=(TimedEvent(0.05, "reference_step", value=320.0),),
                 duration=0.2, adaptation_enabled=False)
    trace = run(sc)
    before = steady_state_solve(sc.topology, sc.initial_gains, 315.0).voltages
    after = steady_state_solve(sc.topology, sc.initial_gains, 320.0).voltages
    assert np.all(after > before)
    np.testing.assert_allclose(trace[3].voltages, before, rtol=1e-12)
    np.testing.assert_allclose(trace[-1].voltages, after, rtol=1e-9)
    assert np.all(trace[-1].voltages > trace[3].voltages)
    assert trace[-1].avg_voltage_error == pytest.approx(np.mean(after) - 320.0)


def test_gains_stay_in_bounds(adaptive_trace, short_events):
    lo, hi = short_events.initial_gains.bounds
    g = np.array([r.gains for r in adaptive_trace])
    assert g.min() >= lo and g.max() <= hi


def test_gain_update_follows_delta_w(adaptive_trace, short_events):
    lo, hi = short_events.initial_gains.bounds
    a = short_events.objectives.adaptation_rate
    for prev, nxt in zip(adaptive_trace, adaptive_trace[1:]):
        np.testing.assert_array_equal(nxt.gains, np.clip(prev.gains - a * prev.delta_w, lo, hi))


def test_event_gate_silences_quiet_windows(adaptive_trace):
    for r in adaptive_trace:
        quiet = r.omega == 0
        assert np.all(r.spikes_v[quiet] == 0)
        assert np.all(r.delta_w[quiet] == 0)
        assert np.all(np.isnan(r.cross_entropy[quiet]))


def test_adaptive_gains_move(adaptive_trace):
    g = np.array([r.gains for r in adaptive_trace])
    assert np.ptp(g, axis=0).min() > 0


def test_accumulated_delta_w_variant(short_events):
    sc = replace(short_events, accumulate_dw=True, adaptation_enabled=False, duration=0.3,
                 timeline=short_events.timeline[:1])
    trace = run(sc)
    per_window = run(replace(sc, accumulate_dw=False))
    np.testing.assert_allclose([r.delta_w for r in trace],
                               np.cumsum([r.delta_w for r in per_window], axis=0))


def test_compare_baseline(short_events):
    res = compare_baseline(short_events)
    assert np.all(np.array([r.gains for r in res.static]) == 2.0)
    assert len(set(map(tuple, (r.gains for r in res.adaptive)))) > 1
    assert set(res.summary) == {"static", "adaptive"}
    assert len(res.summary["adaptive"]["gain_trajectories"]) == 4


def test_integration_blowup_is_reported(appendix):
    sc = replace(appendix, dt=5e-4, duration=0.5, timeline=(), initial_voltages=(0.0,) * 4)
    with pytest.raises(IntegrationError) as info, np.errstate(all="ignore"):
        run(sc)
    assert 1 <= info.value.node <= 4 and info.value.time > 0


@pytest.mark.parametrize("changes", [
    {"duration": -1.0},
    {"dt": 3e-6},
    {"timeline": (TimedEvent(9.0, "der_outage", 1),)},
    {"timeline": (TimedEvent(1.0, "der_outage", 7),)},
    {"timeline": (TimedEvent(2.0, "der_outage", 1), TimedEvent(1.0, "der_outage", 2))},
])
def test_invalid_scenarios(appendix, changes):
    with pytest.raises(ScenarioValidationError):
        replace(appendix, **changes)


def test_schedule_event_rejects_unknown_node(appendix):
    gains = appendix.initial_gains
    ctx = GridContext(appendix.topology,
                      make_state(0.0, np.full(4, 315.0), gains, np.ones(4, bool), 315.0),
                      gains, 315.0)
    with pytest.raises(KeyError):
        schedule_event(ctx, replace(TimedEvent(0.0, "der_outage", 1), node=9))
    out = schedule_event(ctx, TimedEvent(0.0, "der_outage", 3))
    assert not out.state.active[2] and out.state.source_currents[2] == 0.0
    out = schedule_event(ctx, TimedEvent(0.0, "load_step", 2, 25.0))
    assert out.topology.nodes[1].load_resistance == 25.0
    assert build_admittance(out.topology).shape == (4, 4)
