"""Scenario documents: YAML with fixed sections, validated field by field.

Every diagnostic names the offending field path and, where the document
provides one, its line number.
"""

from __future__ import annotations

import math
from importlib import resources
from pathlib import Path

import yaml

from .coding import CodingConfig, EventDetectorConfig
from .droop import ControlObjectives, DroopGainVector
from .engine import EVENT_KINDS, Scenario, ScenarioValidationError, TimedEvent
from .grid import LineParams, NetworkTopology, NodeParams, TopologyError, build_admittance
from .snn import KernelParams, NeuronParams, STDPParams

REQUIRED_SECTIONS = ("nodes", "lines", "control", "sim")
OPTIONAL_SECTIONS = ("coding", "detector", "snn", "stdp", "events")


class ScenarioError(ValueError):
    def __init__(self, field: str, message: str, line: int | None = None):
        self.field = field
        self.line = line
        self.message = message
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field}{where}: {message}")


class _Map(dict):
    line = None
    key_lines: dict = {}


class _Seq(list):
    line = None
    item_lines: list = []


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_map(loader, node):
    loader.flatten_mapping(node)
    out = _Map()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ScenarioError(str(key), "duplicate key", key_node.start_mark.line + 1)
        out[key] = loader.construct_object(value_node, deep=True)
        out.key_lines[key] = key_node.start_mark.line + 1
    return out


def _construct_seq(loader, node):
    out = _Seq(loader.construct_object(child, deep=True) for child in node.value)
    out.line = node.start_mark.line + 1
    out.item_lines = [child.start_mark.line + 1 for child in node.value]
    return out


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)
_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_seq)


class _Section:
    """Typed access to one mapping with unknown-key detection."""

    def __init__(self, data, path: str, allowed: tuple, line=None):
        if not isinstance(data, dict):
            raise ScenarioError(path, "expected a mapping", line)
        self.data = data
        self.path = path
        self.line = getattr(data, "line", line)
        for key in data:
            if key not in allowed:
                raise ScenarioError(f"{path}.{key}", f"unknown key; allowed: {', '.join(allowed)}",
                                    self.key_line(key))

    def key_line(self, key):
        return getattr(self.data, "key_lines", {}).get(key, self.line)

    def field(self, key):
        return f"{self.path}.{key}"

    def error(self, key, message):
        return ScenarioError(self.field(key), message, self.key_line(key))

    def raw(self, key, default=None, required=False):
        if key not in self.data or self.data[key] is None:
            if required:
                raise ScenarioError(self.field(key), "required field missing", self.line)
            return default
        return self.data[key]

    def number(self, key, default=None, required=False, positive=False, nonneg=False):
        val = self.raw(key, default, required)
        if val is None:
            return None
        num = _as_float(val, lambda msg: self.error(key, msg))
        if positive and not num > 0:
            raise self.error(key, f"must be > 0, got {val!r}")
        if nonneg and not num >= 0:
            raise self.error(key, f"must be >= 0, got {val!r}")
        return num

    def integer(self, key, default=None, required=False, minimum=None):
        val = self.raw(key, default, required)
        if val is None:
            return None
        if isinstance(val, bool) or not isinstance(val, int):
            raise self.error(key, f"must be an integer, got {val!r}")
        if minimum is not None and val < minimum:
            raise self.error(key, f"must be >= {minimum}, got {val}")
        return val

    def boolean(self, key, default):
        val = self.raw(key, default)
        if not isinstance(val, bool):
            raise self.error(key, f"must be true or false, got {val!r}")
        return val

    def pair(self, key, default):
        val = self.raw(key, default)
        if not isinstance(val, (list, tuple)) or len(val) != 2:
            raise self.error(key, "must be a two-element list [min, max]")
        lo, hi = (_as_float(v, lambda msg: self.error(key, msg)) for v in val)
        if not hi > lo:
            raise self.error(key, f"range [{lo}, {hi}] is degenerate; need max > min")
        return (lo, hi)


def _as_float(val, err) -> float:
    if isinstance(val, bool):
        raise err(f"must be a number, got {val!r}")
    if isinstance(val, (int, float)):
        num = float(val)
    elif isinstance(val, str):
        try:
            num = float(val)
        except ValueError:
            raise err(f"must be a number, got {val!r}") from None
    else:
        raise err(f"must be a number, got {val!r}")
    if not math.isfinite(num):
        raise err(f"must be finite, got {val!r}")
    return num


def _items(doc, key, line):
    seq = doc[key]
    if not isinstance(seq, list):
        raise ScenarioError(key, "expected a list", line)
    lines = getattr(seq, "item_lines", [])
    return [(item, f"{key}[{k}]", lines[k] if k < len(lines) else line)
            for k, item in enumerate(seq)]


def _parse_nodes(doc, line):
    nodes = []
    for k, (item, path, ln) in enumerate(_items(doc, "nodes", line)):
        sec = _Section(item, path, ("id", "capacitance", "load_resistance", "rating"), ln)
        node_id = sec.integer("id", required=True)
        if node_id != k + 1:
            raise sec.error("id", f"node ids must run 1..n in order; expected {k + 1}, got {node_id}")
        nodes.append(NodeParams(node_id, sec.number("capacitance", required=True, positive=True),
                                sec.number("load_resistance", positive=True),
                                sec.number("rating", 1.0, positive=True)))
    if not nodes:
        raise ScenarioError("nodes", "at least one node required", line)
    return nodes


def _parse_lines(doc, line, n):
    lines, seen = [], {}
    for item, path, ln in _items(doc, "lines", line):
        sec = _Section(item, path, ("from", "to", "resistance"), ln)
        a = sec.integer("from", required=True)
        b = sec.integer("to", required=True)
        for key, end in (("from", a), ("to", b)):
            if not 1 <= end <= n:
                raise sec.error(key, f"references node {end} but only nodes 1..{n} exist")
        if a == b:
            raise sec.error("to", "line endpoints must differ")
        pair = frozenset((a, b))
        if pair in seen:
            raise sec.error("to", f"duplicate line between nodes {a} and {b} (first at {seen[pair]})")
        seen[pair] = path
        lines.append(LineParams(a, b, sec.number("resistance", required=True, positive=True)))
    return lines


def _parse_events(doc, line, n, duration):
    if "events" not in doc or doc["events"] is None:
        return []
    events, last = [], -math.inf
    for item, path, ln in _items(doc, "events", line):
        sec = _Section(item, path, ("time", "kind", "node", "resistance", "v_ref"), ln)
        t = sec.number("time", required=True, nonneg=True)
        if t > duration:
            raise sec.error("time", f"event at {t} s lies beyond sim.duration = {duration} s")
        if t < last:
            raise sec.error("time", "events must be sorted by time")
        last = t
        kind = sec.raw("kind", required=True)
        if kind not in EVENT_KINDS:
            raise sec.error("kind", f"unknown event kind {kind!r}; expected one of {EVENT_KINDS}")
        node = value = None
        if kind in ("load_step", "der_outage"):
            node = sec.integer("node", required=True)
            if not 1 <= node <= n:
                raise sec.error("node", f"references node {node} but only nodes 1..{n} exist")
        if kind == "load_step":
            value = sec.number("resistance", required=True, positive=True)
        elif kind == "reference_step":
            value = sec.number("v_ref", required=True, positive=True)
        extra = {"load_step": ("v_ref",), "der_outage": ("resistance", "v_ref"),
                 "reference_step": ("node", "resistance")}[kind]
        for key in extra:
            if key in item:
                raise sec.error(key, f"not valid for a {kind} event")
        events.append(TimedEvent(t, kind, node, value))
    return events


def _per_node(sec, key, default, n, positive=True):
    val = sec.raw(key, default)
    if isinstance(val, (list, tuple)):
        if len(val) != n:
            raise sec.error(key, f"expected {n} values, got {len(val)}")
        out = [_as_float(v, lambda msg: sec.error(key, msg)) for v in val]
    else:
        out = [sec.number(key, default)] * n
    if positive and any(not v > 0 for v in out):
        raise sec.error(key, "values must be > 0")
    return out


def parse_scenario(text: str, name: str = "scenario", source: str = "<string>") -> Scenario:
    """Parse and fully validate a scenario document.

    Raises
    ------
    ScenarioError
        For YAML syntax errors, missing sections or fields, unknown keys
        and violated invariants; the message names the field and line.
    """
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except ScenarioError:
        raise
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError("document", f"not valid YAML in {source}: {getattr(exc, 'problem', exc)}",
                            mark.line + 1 if mark else None) from None
    if doc is None:
        doc = _Map()
    if not isinstance(doc, dict):
        raise ScenarioError("document", "top level must be a mapping of sections", 1)
    missing = [s for s in REQUIRED_SECTIONS if s not in doc]
    if missing:
        raise ScenarioError("document", f"missing required sections: {', '.join(missing)}")
    top = _Section(doc, "document", REQUIRED_SECTIONS + OPTIONAL_SECTIONS, 1)
    for key in doc:
        if key != "events" and key not in ("nodes", "lines") and not isinstance(doc[key], dict) \
                and doc[key] is not None:
            raise ScenarioError(key, "expected a mapping", top.key_line(key))

    nodes = _parse_nodes(doc, top.key_line("nodes"))
    n = len(nodes)
    lines = _parse_lines(doc, top.key_line("lines"), n)
    try:
        topology = NetworkTopology(tuple(nodes), tuple(lines))
        build_admittance(topology)
    except TopologyError as exc:
        raise ScenarioError("lines", str(exc), top.key_line("lines")) from None

    ctl = _Section(doc["control"], "control",
                   ("v_ref", "droop_gain", "adaptation_rate", "gain_bounds", "adaptation"),
                   top.key_line("control"))
    v_ref = ctl.number("v_ref", required=True, positive=True)
    a = ctl.number("adaptation_rate", 2.0, nonneg=True)
    bounds = ctl.pair("gain_bounds", [0.1, 10.0])
    if not bounds[0] > 0:
        raise ctl.error("gain_bounds", "lower bound must be > 0")
    gains = _per_node(ctl, "droop_gain", 2.0, n)
    if any(not bounds[0] <= g <= bounds[1] for g in gains):
        raise ctl.error("droop_gain", f"gains {gains} outside gain_bounds {list(bounds)}")
    adaptation = ctl.boolean("adaptation", True)

    sim = _Section(doc["sim"], "sim", ("duration", "dt", "seed", "initial_voltage"),
                   top.key_line("sim"))
    duration = sim.number("duration", required=True, positive=True)
    dt = sim.number("dt", 1e-5, positive=True)
    seed = sim.integer("seed", 0)
    init_v = None
    if sim.raw("initial_voltage") is not None:
        init_v = tuple(_per_node(sim, "initial_voltage", None, n, positive=False))

    cod = _Section(doc.get("coding") or _Map(), "coding",
                   ("window", "bins", "max_spikes", "voltage_range", "current_range"),
                   top.key_line("coding"))
    window = cod.number("window", 10e-3, positive=True)
    bins = cod.integer("bins", 100, minimum=1)
    max_spikes = cod.integer("max_spikes", 20, minimum=1)
    if bins < max_spikes:
        raise cod.error("bins", f"bins ({bins}) must be >= max_spikes ({max_spikes})")
    v_range = cod.pair("voltage_range", [v_ref - 40.0, v_ref + 10.0])
    i_range = cod.pair("current_range", [0.0, 40.0])
    steps = window / dt
    if abs(steps - round(steps)) > 1e-6 * max(steps, 1.0) or round(steps) < 1:
        raise cod.error("window", f"window {window} s is not a whole number of dt = {dt} s steps")
    if round(duration / window) < 1:
        raise sim.error("duration", "must cover at least one coding window")

    det = _Section(doc.get("detector") or _Map(), "detector",
                   ("derivative_threshold", "settle_window", "settle_band", "sample_period"),
                   top.key_line("detector"))
    detector = EventDetectorConfig(det.number("derivative_threshold", 500.0, positive=True),
                                   det.number("settle_window", 50e-3, positive=True),
                                   det.number("settle_band", 0.5, positive=True),
                                   det.number("sample_period", 1e-3, positive=True))

    snn = _Section(doc.get("snn") or _Map(), "snn",
                   ("v_threshold", "tau_syn", "tau_refr", "w_min", "w_max", "reset"),
                   top.key_line("snn"))
    v_th = snn.number("v_threshold", 1.0, positive=True)
    kernels = KernelParams(snn.number("tau_syn", 2e-3, positive=True),
                           snn.number("tau_refr", 1e-3, positive=True))
    w_min = snn.number("w_min", 0.05, nonneg=True)
    w_max = snn.number("w_max", 1.0, positive=True)
    if w_min > w_max:
        raise snn.error("w_min", f"w_min ({w_min}) exceeds w_max ({w_max})")
    reset = snn.raw("reset", "subtract")
    if reset not in ("subtract", "rest"):
        raise snn.error("reset", f"must be 'subtract' or 'rest', got {reset!r}")

    sp = _Section(doc.get("stdp") or _Map(), "stdp",
                  ("a_plus", "a_minus", "tau_plus", "tau_minus", "accumulate"),
                  top.key_line("stdp"))
    stdp = STDPParams(sp.number("a_plus", 0.05, positive=True),
                      sp.number("a_minus", 0.05, positive=True),
                      sp.number("tau_plus", 5e-3, positive=True),
                      sp.number("tau_minus", 5e-3, positive=True))
    accumulate = sp.boolean("accumulate", False)

    events = _parse_events(doc, top.key_line("events"), n, duration)

    try:
        return Scenario(
            topology=topology,
            objectives=ControlObjectives(v_ref, tuple(nd.rating for nd in nodes), a),
            initial_gains=DroopGainVector(gains, *bounds),
            voltage_coding=CodingConfig(window, bins, max_spikes, v_range),
            current_coding=CodingConfig(window, bins, max_spikes, i_range),
            detector=detector, stdp=stdp,
            neuron=NeuronParams(v_threshold=v_th, reset=reset), kernels=kernels,
            w_min=w_min, w_max=w_max, timeline=tuple(events), duration=duration, dt=dt,
            adaptation_enabled=adaptation, seed=seed, initial_voltages=init_v,
            accumulate_dw=accumulate, name=name)
    except (ScenarioValidationError, ValueError) as exc:
        raise ScenarioError("document", str(exc)) from None


def bundled_scenarios() -> list:
    root = resources.files("spiketalk") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".scenario"))


def resolve_scenario_path(path) -> Path:
    """``path`` itself if it exists, else the bundled scenario of that name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("spiketalk") / "scenarios" / p.name
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"scenario file not found: {path}")


def load_scenario(path) -> Scenario:
    p = resolve_scenario_path(path)
    return parse_scenario(p.read_text(), name=p.stem, source=str(p))
