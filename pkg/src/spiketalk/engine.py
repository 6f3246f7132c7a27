"""Co-simulation of the droop grid and its per-node spiking controllers.

The grid is integrated at ``dt``.  At every coding-window boundary each
node's event flag is read; flagged, still-active nodes encode their sampled
voltage (rate code) and per-unit current (latency code), push the current
spike through their SRM neuron and score the voltage/neuron-output timing
with STDP.  The resulting weight change is the ``delta_w`` fed into the droop
gain update.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import droop
from .coding import (CodingConfig, EventDetector, EventDetectorConfig, combine_events,
                     cross_entropy, latency_encode, rate_encode)
from .droop import ControlObjectives, DroopGainVector
from .grid import (GridState, IntegrationError, LinearRK4, NetworkTopology, apply_outage,
                   build_admittance, droop_currents, make_state, steady_state_solve)
from .snn import (KernelParams, NeuronParams, SpikeTrain, STDPParams, SynapseMatrix,
                  init_weights_from_admittance, srm_forward, stdp_update)

logger = logging.getLogger(__name__)

EVENT_KINDS = ("load_step", "der_outage", "reference_step")


class ScenarioValidationError(ValueError):
    pass


@dataclass(frozen=True)
class TimedEvent:
    time: float
    kind: str
    node: Optional[int] = None
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ScenarioValidationError(f"unknown event kind {self.kind!r}")
        if self.kind in ("load_step", "der_outage") and self.node is None:
            raise ScenarioValidationError(f"{self.kind} needs a node")
        if self.kind in ("load_step", "reference_step") and not (self.value or 0) > 0:
            raise ScenarioValidationError(f"{self.kind} needs a positive value")


@dataclass(frozen=True)
class Scenario:
    topology: NetworkTopology
    objectives: ControlObjectives
    initial_gains: DroopGainVector
    voltage_coding: CodingConfig
    current_coding: CodingConfig
    detector: EventDetectorConfig = EventDetectorConfig()
    stdp: STDPParams = STDPParams()
    neuron: NeuronParams = NeuronParams()
    kernels: KernelParams = KernelParams()
    w_min: float = 0.05
    w_max: float = 1.0
    timeline: tuple = ()
    duration: float = 1.0
    dt: float = 1e-5
    adaptation_enabled: bool = True
    seed: int = 0  # reserved; the pipeline is deterministic
    initial_voltages: Optional[tuple] = None
    accumulate_dw: bool = False
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "timeline", tuple(self.timeline))
        self.validate()

    @property
    def window(self) -> float:
        return self.voltage_coding.window

    @property
    def steps_per_window(self) -> int:
        return int(round(self.window / self.dt))

    @property
    def n_windows(self) -> int:
        return int(round(self.duration / self.window))

    def validate(self) -> None:
        n = self.topology.n
        if not self.duration > 0:
            raise ScenarioValidationError("duration must be > 0")
        if not self.dt > 0:
            raise ScenarioValidationError("dt must be > 0")
        if self.current_coding.window != self.window:
            raise ScenarioValidationError("voltage and current coding windows differ")
        if abs(self.steps_per_window * self.dt - self.window) > 1e-9 * self.window:
            raise ScenarioValidationError("coding window must be a whole number of dt steps")
        if self.steps_per_window < 1 or self.n_windows < 1:
            raise ScenarioValidationError("duration must span at least one coding window")
        if len(self.initial_gains.gains) != n:
            raise ScenarioValidationError(f"expected {n} droop gains")
        if len(self.objectives.sharing_ratings) != n:
            raise ScenarioValidationError(f"expected {n} sharing ratings")
        if not 0 <= self.w_min <= self.w_max:
            raise ScenarioValidationError("synapse bounds must satisfy 0 <= w_min <= w_max")
        if self.initial_voltages is not None and len(self.initial_voltages) != n:
            raise ScenarioValidationError(f"expected {n} initial voltages")
        times = [ev.time for ev in self.timeline]
        if times != sorted(times):
            raise ScenarioValidationError("events must be sorted by time")
        for ev in self.timeline:
            if not 0 <= ev.time <= self.duration:
                raise ScenarioValidationError(f"event at t={ev.time} outside [0, {self.duration}]")
            if ev.node is not None and not 1 <= ev.node <= n:
                raise ScenarioValidationError(f"event references node {ev.node} of {n}")


@dataclass
class TraceRecord:
    """One coding window.  Per-node arrays are indexed by node position."""

    time: float
    voltages: np.ndarray
    currents: np.ndarray
    gains: np.ndarray
    omega: np.ndarray
    spikes_v: np.ndarray
    latency_i: np.ndarray
    delta_w: np.ndarray
    cross_entropy: np.ndarray
    avg_voltage_error: float
    sharing_error: float
    voltage_spikes: tuple = ()
    current_spikes: tuple = ()

    @property
    def n(self) -> int:
        return self.voltages.size


@dataclass
class GridContext:
    """Mutable electrical setting that timeline events act on."""

    topology: NetworkTopology
    state: GridState
    gains: DroopGainVector
    v_ref: float


def schedule_event(ctx: GridContext, event: TimedEvent) -> GridContext:
    """Apply one timeline event and return the updated context."""
    n = ctx.topology.n
    if event.node is not None and not 1 <= event.node <= n:
        raise KeyError(f"event references unknown node {event.node}")
    if event.kind == "der_outage":
        state = apply_outage(ctx.state, event.node, ctx.gains, ctx.v_ref)
        return replace(ctx, state=state)
    if event.kind == "load_step":
        topo = ctx.topology.with_load(event.node, event.value)
        return replace(ctx, topology=topo)
    # reference_step
    state = make_state(ctx.state.time, ctx.state.voltages, ctx.gains, ctx.state.active,
                       event.value)
    return replace(ctx, state=state, v_ref=float(event.value))


def _node_window(v: float, i_pu: float, start: float, drive: float, sc: Scenario):
    v_train = rate_encode(v, sc.voltage_coding, start)
    i_train = latency_encode(i_pu, sc.current_coding, start)
    _, post = srm_forward([i_train], np.array([drive]), sc.kernels, sc.neuron,
                          bins=sc.voltage_coding.bins)
    dw = stdp_update(v_train, post, sc.stdp)
    ce = cross_entropy(v_train, i_train, sc.voltage_coding.bins)
    return v_train, i_train, dw, ce


def run(scenario: Scenario) -> list:
    """Simulate ``scenario`` and return one TraceRecord per coding window."""
    sc = scenario
    sc.validate()
    topo = sc.topology
    n = topo.n
    Y = build_admittance(topo)
    gains = sc.initial_gains
    v_ref = sc.objectives.v_ref
    ratings = np.asarray(sc.objectives.sharing_ratings)
    a = sc.objectives.adaptation_rate
    active = np.ones(n, dtype=bool)
    if sc.initial_voltages is None:
        v = steady_state_solve(topo, gains, v_ref, active, Y).voltages.copy()
    else:
        v = np.array(sc.initial_voltages, dtype=float)
    ctx = GridContext(topo, make_state(0.0, v, gains, active, v_ref), gains, v_ref)

    dt = sc.dt
    spw = sc.steps_per_window
    sample_every = max(1, int(round(sc.detector.sample_period / dt)))
    events = [(int(round(ev.time / dt)), ev) for ev in sc.timeline]
    base_syn = init_weights_from_admittance(Y, sc.w_max, sc.w_min)
    synapses = [base_syn.copy() for _ in range(n)]
    det_v = [EventDetector(sc.detector) for _ in range(n)]
    det_i = [EventDetector(sc.detector) for _ in range(n)]
    dw_total = np.zeros(n)

    def propagator():
        return LinearRK4(ctx.topology, Y, ctx.gains, ctx.state.active, ctx.v_ref, dt)

    prop = propagator()
    rows = []
    k = 0
    ei = 0
    for m in range(sc.n_windows):
        seen_v = np.zeros(n, dtype=int)
        seen_i = np.zeros(n, dtype=int)
        for _ in range(spw):
            if ei < len(events) and events[ei][0] <= k:
                ctx.state = GridState(k * dt, v, ctx.state.source_currents, ctx.state.active)
                while ei < len(events) and events[ei][0] <= k:
                    ctx = schedule_event(ctx, events[ei][1])
                    ei += 1
                prop = propagator()
            v = prop.advance(v)
            k += 1
            if not np.all(np.isfinite(v)):
                raise IntegrationError(int(np.argmax(~np.isfinite(v))) + 1, k * dt)
            if k % sample_every == 0:
                t = k * dt
                cur = droop_currents(v, ctx.gains, ctx.state.active, ctx.v_ref)
                for j in range(n):
                    seen_v[j] |= det_v[j].update(t, v[j])
                    seen_i[j] |= det_i[j].update(t, cur[j])

        t_end = k * dt
        ctx.state = make_state(t_end, v, ctx.gains, ctx.state.active, ctx.v_ref)
        state = ctx.state
        start = t_end - sc.window
        omega = np.array([combine_events(int(seen_v[j]), int(seen_i[j])).omega
                          for j in range(n)])
        spikes_v = np.zeros(n, dtype=int)
        lat = np.full(n, math.nan)
        dws = np.zeros(n)
        ces = np.full(n, math.nan)
        v_raster, i_raster = [], []
        for j in range(n):
            if not (omega[j] and state.active[j]):
                v_raster.append(())
                i_raster.append(())
                continue
            drive = sc.neuron.v_threshold * (1.0 + float(np.mean(synapses[j].incoming(j))))
            v_train, i_train, dw, ce = _node_window(
                state.voltages[j], state.source_currents[j] / ratings[j], start, drive, sc)
            synapses[j].apply_delta(dw, post=j)
            spikes_v[j] = len(v_train)
            lat[j] = i_train.spike_times[0] - start
            dws[j] = dw
            ces[j] = ce
            v_raster.append(v_train.spike_times)
            i_raster.append(i_train.spike_times)
        dw_total += dws
        dw_used = dw_total.copy() if sc.accumulate_dw else dws

        obj = replace(sc.objectives, v_ref=ctx.v_ref)
        avg_err = droop.average_voltage_error(state, obj) if state.active.any() else math.nan
        share_err = droop.sharing_error(state.source_currents, ratings, state.active)
        rows.append(TraceRecord(t_end, state.voltages.copy(), state.source_currents.copy(),
                                ctx.gains.gains.copy(), omega, spikes_v, lat, dw_used.copy(),
                                ces, avg_err, share_err, tuple(v_raster), tuple(i_raster)))

        if sc.adaptation_enabled and np.any(dw_used != 0):
            new_gains = ctx.gains.updated(dw_used, a)
            if not np.array_equal(new_gains.gains, ctx.gains.gains):
                ctx.gains = new_gains
                ctx.state = make_state(t_end, v, ctx.gains, ctx.state.active, ctx.v_ref)
                prop = propagator()
    return rows


@dataclass
class BaselineComparison:
    static: list
    adaptive: list
    summary: dict = field(default_factory=dict)


def _final_summary(trace: list) -> dict:
    last = trace[-1]
    return {
        "final_abs_avg_voltage_error": abs(last.avg_voltage_error),
        "final_sharing_error": last.sharing_error,
        "gain_trajectories": np.array([r.gains for r in trace]).T.tolist(),
    }


def compare_baseline(scenario: Scenario) -> BaselineComparison:
    """Run ``scenario`` with the gain adaptation off and on."""
    static = run(replace(scenario, adaptation_enabled=False))
    adaptive = run(replace(scenario, adaptation_enabled=True))
    return BaselineComparison(static, adaptive, {"static": _final_summary(static),
                                                 "adaptive": _final_summary(adaptive)})
