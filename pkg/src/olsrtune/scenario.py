"""VANET scenario construction and loading.

A scenario bundles vehicle mobility over time, radio parameters, and the
constant-bit-rate data flows that exercise the network. Mobility comes
either from a synthetic Manhattan-grid generator (vehicles follow street
lanes, turn uniformly at random at intersections and pause there) or from
an externally produced trace CSV with rows ``time_s,node_id,x_m,y_m``.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable

from .errors import ConfigurationError, InputError, TraceParseError, TraceValidationError
from .seeding import derive_rng

__all__ = [
    "MobilityTrace",
    "CbrFlow",
    "FlowTemplate",
    "LossModel",
    "Scenario",
    "GridSpec",
    "generate_grid_scenario",
    "load_trace",
    "serialize_trace",
    "position_at",
    "save_scenario",
    "load_scenario",
]

TRACE_HEADER = "time_s,node_id,x_m,y_m"


@dataclass(frozen=True)
class MobilityTrace:
    """Sampled vehicle positions, sorted by (time, node_id).

    Positions between samples are linearly interpolated; a node holds its
    last sampled position afterwards.
    """

    node_count: int
    samples: tuple  # of (time_s, node_id, x_m, y_m)
    duration: float

    def __post_init__(self):
        seen = set()
        prev = None
        nodes = set()
        for t, node, _x, _y in self.samples:
            if prev is not None and (t, node) < prev:
                raise TraceValidationError("samples not sorted by (time, node_id)")
            if (t, node) in seen:
                raise TraceValidationError(f"duplicate sample for node {node} at t={t}")
            seen.add((t, node))
            prev = (t, node)
            nodes.add(node)
        if len(nodes) != self.node_count:
            raise TraceValidationError(
                f"node_count={self.node_count} but {len(nodes)} distinct node ids present"
            )
        for node in nodes:
            if (0.0, node) not in seen and (0, node) not in seen:
                raise TraceValidationError(f"node {node} has no sample at t=0")

    @cached_property
    def node_ids(self) -> tuple:
        return tuple(sorted({s[1] for s in self.samples}))

    @cached_property
    def _per_node(self) -> dict:
        """node_id -> (times, xs, ys), each a list sorted by time."""
        idx: dict = {node: ([], [], []) for node in self.node_ids}
        for t, node, x, y in self.samples:
            times, xs, ys = idx[node]
            times.append(float(t))
            xs.append(float(x))
            ys.append(float(y))
        return idx


def position_at(trace: MobilityTrace, node: int, t: float) -> tuple:
    """Position of `node` at time `t` by linear interpolation.

    Exact sample values are returned at sample times; past a node's last
    sample the position is held constant.
    """
    try:
        times, xs, ys = trace._per_node[node]
    except KeyError:
        raise ConfigurationError(f"unknown node id {node}") from None
    if t < 0:
        raise ConfigurationError(f"negative time {t}")
    k = bisect_right(times, t) - 1
    if k < 0:
        # first sample is at t=0 by invariant, so this only guards float noise
        return xs[0], ys[0]
    if k == len(times) - 1 or times[k] == t:
        return xs[k], ys[k]
    span = times[k + 1] - times[k]
    f = (t - times[k]) / span
    return xs[k] + f * (xs[k + 1] - xs[k]), ys[k] + f * (ys[k + 1] - ys[k])


@dataclass(frozen=True)
class CbrFlow:
    """A constant-bit-rate unicast flow between two nodes."""

    source: int
    destination: int
    packet_size: int  # bytes
    rate: float  # packets per second
    start: float  # seconds
    duration: float  # seconds

    def __post_init__(self):
        if self.source == self.destination:
            raise ConfigurationError("flow source equals destination")
        if self.packet_size <= 0:
            raise ConfigurationError("packet_size must be positive")
        if self.rate <= 0:
            raise ConfigurationError("rate must be positive")
        if self.start < 0:
            raise ConfigurationError("start must be >= 0")
        if self.duration < 0:
            raise ConfigurationError("duration must be >= 0")


@dataclass(frozen=True)
class FlowTemplate:
    """Per-flow parameters applied to every generated flow; endpoints are
    sampled separately."""

    packet_size: int = 512
    rate: float = 4.0
    start: float = 30.0
    duration: float = 60.0


@dataclass(frozen=True)
class LossModel:
    """Reception model: `ideal` always delivers inside the radio range;
    `bernoulli` drops with probability scaling linearly from 0 at the
    sender up to `p_at_max_range` at the range edge."""

    kind: str = "ideal"
    p_at_max_range: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ideal", "bernoulli"):
            raise ConfigurationError(f"unknown loss model {self.kind!r}")
        if not 0.0 <= self.p_at_max_range <= 1.0:
            raise ConfigurationError("p_at_max_range must be in [0, 1]")


LOSS_IDEAL = LossModel("ideal")


@dataclass(frozen=True)
class Scenario:
    """Immutable simulation input: area, mobility, flows, radio."""

    area: tuple  # (width_m, height_m)
    trace: MobilityTrace
    flows: tuple  # of CbrFlow
    radio_range: float  # meters
    bandwidth: float  # bits per second
    sim_duration: float  # seconds
    loss_model: LossModel = LOSS_IDEAL

    def __post_init__(self):
        w, h = self.area
        if w <= 0 or h <= 0:
            raise ConfigurationError("area dimensions must be positive")
        if self.radio_range <= 0:
            raise ConfigurationError("radio_range must be positive")
        if self.bandwidth <= 0:
            raise ConfigurationError("bandwidth must be positive")
        if self.sim_duration <= 0:
            raise ConfigurationError("sim_duration must be positive")
        nodes = set(self.trace.node_ids)
        for flow in self.flows:
            if flow.source not in nodes or flow.destination not in nodes:
                raise ConfigurationError(
                    f"flow {flow.source}->{flow.destination} references unknown node ids"
                )
            if flow.start + flow.duration > self.sim_duration + 1e-9:
                raise ConfigurationError(
                    f"flow {flow.source}->{flow.destination} ends after sim_duration"
                )
        eps = 1e-6
        for t, node, x, y in self.trace.samples:
            if not (-eps <= x <= w + eps and -eps <= y <= h + eps):
                raise ConfigurationError(
                    f"sample for node {node} at t={t} lies outside the area"
                )


@dataclass(frozen=True)
class GridSpec:
    """Synthetic Manhattan-grid mobility parameters."""

    area: tuple  # (width_m, height_m)
    streets: tuple = (4, 4)  # (rows, cols) of street lines
    vehicle_count: int = 20
    speed: tuple = (8.0, 14.0)  # (min, max) m/s
    pause_time: float = 4.0  # seconds at intersections
    sample_step: float = 1.0  # seconds between trace samples
    duration: float = 180.0  # seconds of generated mobility

    def __post_init__(self):
        rows, cols = self.streets
        if rows < 2 or cols < 2:
            raise ConfigurationError("streets must be at least 2x2")
        if self.vehicle_count < 1:
            raise ConfigurationError("vehicle_count must be >= 1")
        lo, hi = self.speed
        if not 0 < lo <= hi:
            raise ConfigurationError("need 0 < speed_min <= speed_max")
        if self.pause_time < 0:
            raise ConfigurationError("pause_time must be >= 0")
        if self.sample_step <= 0:
            raise ConfigurationError("sample_step must be positive")
        if self.duration <= 0:
            raise ConfigurationError("duration must be positive")


def _vehicle_breakpoints(spec: GridSpec, rng) -> list:
    """Piecewise-linear (t, x, y) breakpoints of one vehicle's walk."""
    rows, cols = spec.streets
    w, h = spec.area
    xs = [j * w / (cols - 1) for j in range(cols)]
    ys = [i * h / (rows - 1) for i in range(rows)]

    def neighbors(r, c):
        out = []
        if r > 0:
            out.append((r - 1, c))
        if r < rows - 1:
            out.append((r + 1, c))
        if c > 0:
            out.append((r, c - 1))
        if c < cols - 1:
            out.append((r, c + 1))
        return out

    # start somewhere along a uniformly chosen street segment
    r = rng.randrange(rows)
    c = rng.randrange(cols)
    target = rng.choice(neighbors(r, c))
    frac = rng.random()
    x = xs[c] + frac * (xs[target[1]] - xs[c])
    y = ys[r] + frac * (ys[target[0]] - ys[r])

    t = 0.0
    points = [(t, x, y)]
    while t <= spec.duration:
        tx, ty = xs[target[1]], ys[target[0]]
        dist = math.hypot(tx - x, ty - y)
        speed = rng.uniform(*spec.speed)
        if dist > 0:
            t += dist / speed
            points.append((t, tx, ty))
        x, y = tx, ty
        if spec.pause_time > 0:
            t += spec.pause_time
            points.append((t, x, y))
        here = target
        target = rng.choice(neighbors(*here))
    return points


def _sample_walk(points: list, step: float, duration: float) -> list:
    """Sample a breakpoint walk at 0, step, 2*step, ... duration."""
    out = []
    k = 0
    n_steps = int(round(duration / step))
    for i in range(n_steps + 1):
        t = min(i * step, duration)
        while k + 1 < len(points) and points[k + 1][0] <= t:
            k += 1
        t0, x0, y0 = points[k]
        if k + 1 == len(points) or t0 == t:
            out.append((t, x0, y0))
        else:
            t1, x1, y1 = points[k + 1]
            f = (t - t0) / (t1 - t0)
            out.append((t, x0 + f * (x1 - x0), y0 + f * (y1 - y0)))
    return out


def generate_grid_scenario(
    spec: GridSpec,
    flow_count: int,
    flow_params: FlowTemplate | CbrFlow,
    seed: int,
    *,
    radio_range: float = 500.0,
    bandwidth: float = 6e6,
    loss_model: LossModel = LOSS_IDEAL,
    sim_duration: float | None = None,
) -> Scenario:
    """Build a deterministic grid-mobility scenario.

    Vehicles are placed on street segments at t=0, follow lanes at a
    per-leg speed drawn from ``spec.speed``, turn uniformly at random at
    intersections (pausing ``pause_time`` there), and are sampled every
    ``sample_step``. Flow endpoints are uniformly random distinct ordered
    pairs, no pair repeated. The same (spec, seed) always yields the same
    scenario.
    """
    n = spec.vehicle_count
    if flow_count < 0:
        raise ConfigurationError("flow_count must be >= 0")
    if flow_count > n * (n - 1):
        raise ConfigurationError(
            f"flow_count {flow_count} exceeds the {n * (n - 1)} distinct ordered pairs"
        )

    mob_rng = derive_rng(seed, "mobility")
    samples = []
    for node in range(n):
        walk = _vehicle_breakpoints(spec, mob_rng)
        for t, x, y in _sample_walk(walk, spec.sample_step, spec.duration):
            samples.append((t, node, x, y))
    samples.sort(key=lambda s: (s[0], s[1]))
    trace = MobilityTrace(node_count=n, samples=tuple(samples), duration=spec.duration)

    flow_rng = derive_rng(seed, "flows")
    pairs = set()
    flows = []
    while len(flows) < flow_count:
        s = flow_rng.randrange(n)
        d = flow_rng.randrange(n - 1)
        if d >= s:
            d += 1
        if (s, d) in pairs:
            continue
        pairs.add((s, d))
        flows.append(
            CbrFlow(
                source=s,
                destination=d,
                packet_size=flow_params.packet_size,
                rate=flow_params.rate,
                start=flow_params.start,
                duration=flow_params.duration,
            )
        )

    return Scenario(
        area=(float(spec.area[0]), float(spec.area[1])),
        trace=trace,
        flows=tuple(flows),
        radio_range=float(radio_range),
        bandwidth=float(bandwidth),
        sim_duration=float(spec.duration if sim_duration is None else sim_duration),
        loss_model=loss_model,
    )


def serialize_trace(trace: MobilityTrace) -> str:
    lines = [TRACE_HEADER]
    for t, node, x, y in trace.samples:
        lines.append(f"{float(t)!r},{node},{float(x)!r},{float(y)!r}")
    return "\n".join(lines) + "\n"


def load_trace(text) -> MobilityTrace:
    """Parse a trace CSV (string or line iterable); rows are re-sorted."""
    if isinstance(text, str):
        lines: Iterable = text.splitlines()
    else:
        lines = text
    rows = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line_no == 1 and line.replace(" ", "") == TRACE_HEADER:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise TraceParseError(line_no, f"expected 4 fields, got {len(parts)}")
        try:
            t = float(parts[0])
            node = int(parts[1])
            x = float(parts[2])
            y = float(parts[3])
        except ValueError as exc:
            raise TraceParseError(line_no, str(exc)) from None
        if t < 0:
            raise TraceParseError(line_no, f"negative time {t}")
        rows.append((t, node, x, y))
    if not rows:
        raise TraceValidationError("trace is empty")
    rows.sort(key=lambda s: (s[0], s[1]))
    nodes = {r[1] for r in rows}
    duration = rows[-1][0]
    return MobilityTrace(node_count=len(nodes), samples=tuple(rows), duration=duration)


def _loss_to_json(model: LossModel) -> dict:
    out = {"kind": model.kind}
    if model.kind == "bernoulli":
        out["p_at_max_range"] = model.p_at_max_range
    return out


def _loss_from_json(doc) -> LossModel:
    if isinstance(doc, str):
        return LossModel(kind=doc)
    return LossModel(kind=doc["kind"], p_at_max_range=float(doc.get("p_at_max_range", 0.0)))


def save_scenario(scenario: Scenario, json_path, trace_filename: str | None = None) -> list:
    """Write scenario JSON plus its trace CSV; returns the written paths."""
    json_path = Path(json_path)
    if trace_filename is None:
        trace_filename = json_path.stem + "_trace.csv"
    trace_path = json_path.parent / trace_filename
    doc = {
        "area": [scenario.area[0], scenario.area[1]],
        "radio_range_m": scenario.radio_range,
        "bandwidth_bps": scenario.bandwidth,
        "duration_s": scenario.sim_duration,
        "loss_model": _loss_to_json(scenario.loss_model),
        "trace_file": trace_filename,
        "flows": [
            {
                "source": f.source,
                "destination": f.destination,
                "packet_size": f.packet_size,
                "rate": f.rate,
                "start": f.start,
                "duration": f.duration,
            }
            for f in scenario.flows
        ],
    }
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    trace_path.write_text(serialize_trace(scenario.trace), encoding="utf-8")
    return [json_path, trace_path]


def load_scenario(json_path) -> Scenario:
    """Read a scenario JSON; trace_file paths resolve against the JSON's directory."""
    json_path = Path(json_path)
    try:
        doc = json.loads(json_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{json_path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "trace_file" not in doc:
        raise InputError(f"{json_path} is not a scenario file (no trace_file field)")
    trace_ref = Path(doc["trace_file"])
    if not trace_ref.is_absolute():
        trace_ref = json_path.parent / trace_ref
    with open(trace_ref, encoding="utf-8") as fh:
        trace = load_trace(fh)
    flows = tuple(
        CbrFlow(
            source=int(f["source"]),
            destination=int(f["destination"]),
            packet_size=int(f["packet_size"]),
            rate=float(f["rate"]),
            start=float(f["start"]),
            duration=float(f["duration"]),
        )
        for f in doc["flows"]
    )
    return Scenario(
        area=(float(doc["area"][0]), float(doc["area"][1])),
        trace=trace,
        flows=flows,
        radio_range=float(doc["radio_range_m"]),
        bandwidth=float(doc["bandwidth_bps"]),
        sim_duration=float(doc["duration_s"]),
        loss_model=_loss_from_json(doc["loss_model"]),
    )


def relabel_scenario(scenario: Scenario, mapping: dict) -> Scenario:
    """Apply a node-id permutation to trace samples and flow endpoints."""
    samples = sorted(
        ((t, mapping[node], x, y) for t, node, x, y in scenario.trace.samples),
        key=lambda s: (s[0], s[1]),
    )
    trace = MobilityTrace(
        node_count=scenario.trace.node_count,
        samples=tuple(samples),
        duration=scenario.trace.duration,
    )
    flows = tuple(
        replace(f, source=mapping[f.source], destination=mapping[f.destination])
        for f in scenario.flows
    )
    return replace(scenario, trace=trace, flows=flows)
