"""Discrete-event VANET simulation with per-packet energy accounting.

Nodes run the OLSR state machine over an ideal broadcast medium (unit
disk, optional distance-scaled Bernoulli loss, no MAC contention).
Every transmission charges the sender its send energy and every in-range
node the receive energy, data or control alike. Data packets travel
hop-by-hop along the routing tables; control floods follow the MPR
forwarding rule. Runs are fully deterministic in (scenario, config,
nic, seed) and independent of host scheduling.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import olsr
from .errors import ConfigurationError
from .olsr import ControlMessage, OlsrConfig, OlsrNodeState
from .scenario import MobilityTrace, Scenario, position_at
from .seeding import derive_rng

__all__ = [
    "NicProfile",
    "EnergyLedger",
    "SimMetrics",
    "default_nic",
    "packet_airtime",
    "energy_send",
    "energy_recv",
    "broadcast_energy",
    "neighbors_in_range",
    "run_simulation",
    "routing_snapshot",
    "compare_against_reference",
    "METRICS_COLUMNS",
    "metrics_row",
    "metrics_to_json",
    "PROCESSING_DELAY_S",
    "MAX_HOPS",
]

PROCESSING_DELAY_S = 0.002  # fixed per-relay handling time
MAX_HOPS = 64  # IP-default TTL; bounds transient routing loops


@dataclass(frozen=True)
class NicProfile:
    """Radio energy profile: currents in mA, supply in V, bandwidth in
    bit/s. mA x V x s works out to millijoules."""

    i_send: float = 440.0
    v_send: float = 5.0
    i_recv: float = 260.0
    v_recv: float = 5.0
    bandwidth: float = 6e6

    def __post_init__(self):
        for name in ("i_send", "v_send", "i_recv", "v_recv", "bandwidth"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"NIC {name} must be positive")


def default_nic() -> NicProfile:
    return NicProfile()


def packet_airtime(size_bits: float, bandwidth: float) -> float:
    if size_bits < 0:
        raise ConfigurationError("size must be >= 0")
    if bandwidth <= 0:
        raise ConfigurationError("bandwidth must be positive")
    return size_bits / bandwidth


def energy_send(nic: NicProfile, size_bits: float) -> float:
    """Millijoules spent transmitting `size_bits`."""
    if size_bits < 0:
        raise ConfigurationError("size must be >= 0")
    return (nic.i_send * nic.v_send) * size_bits / nic.bandwidth


def energy_recv(nic: NicProfile, size_bits: float) -> float:
    """Millijoules spent receiving `size_bits`."""
    if size_bits < 0:
        raise ConfigurationError("size must be >= 0")
    return (nic.i_recv * nic.v_recv) * size_bits / nic.bandwidth


def broadcast_energy(nic: NicProfile, size_bits: float, receivers: int) -> float:
    """Total energy of one transmission heard by `receivers` nodes."""
    if receivers < 0:
        raise ConfigurationError("receivers must be >= 0")
    return energy_send(nic, size_bits) + receivers * energy_recv(nic, size_bits)


def neighbors_in_range(
    trace: MobilityTrace, node: int, t: float, radio_range: float
) -> set:
    """All other nodes within Euclidean `radio_range` of `node` at time t."""
    x, y = position_at(trace, node, t)
    out = set()
    for other in trace.node_ids:
        if other == node:
            continue
        ox, oy = position_at(trace, other, t)
        if (ox - x) ** 2 + (oy - y) ** 2 <= radio_range**2:
            out.add(other)
    return out


@dataclass(frozen=True)
class EnergyLedger:
    """Per-node and global energy accumulators, in millijoules."""

    per_node_sent: dict
    per_node_recv: dict

    @property
    def e_sent(self) -> float:
        return sum(self.per_node_sent.values())

    @property
    def e_recv(self) -> float:
        return sum(self.per_node_recv.values())

    @property
    def e_total(self) -> float:
        return self.e_sent + self.e_recv

    @property
    def e_total_per_vehicle(self) -> float:
        return self.e_total / len(self.per_node_sent)


@dataclass(frozen=True)
class SimMetrics:
    """QoS and energy results of one run. pdr/e2ed/nrl/hops are None when
    undefined (no flows, or nothing delivered)."""

    pdr: float | None
    e2ed_ms: float | None
    nrl: float | None
    hops: float | None
    energy: EnergyLedger
    data_sent: int
    data_delivered: int
    control_tx: int


METRICS_COLUMNS = (
    "scenario_id",
    "config_id",
    "seed",
    "pdr",
    "e2ed_ms",
    "nrl",
    "hops",
    "e_sent_mj",
    "e_recv_mj",
    "e_total_mj",
    "e_total_per_vehicle_mj",
    "data_sent",
    "data_delivered",
    "control_tx",
)


def _fmt_opt(v) -> str:
    return "" if v is None else repr(float(v))


def metrics_row(metrics: SimMetrics, scenario_id: str, config_id: str, seed: int) -> list:
    return [
        scenario_id,
        config_id,
        str(seed),
        _fmt_opt(metrics.pdr),
        _fmt_opt(metrics.e2ed_ms),
        _fmt_opt(metrics.nrl),
        _fmt_opt(metrics.hops),
        repr(metrics.energy.e_sent),
        repr(metrics.energy.e_recv),
        repr(metrics.energy.e_total),
        repr(metrics.energy.e_total_per_vehicle),
        str(metrics.data_sent),
        str(metrics.data_delivered),
        str(metrics.control_tx),
    ]


def metrics_to_json(metrics: SimMetrics) -> dict:
    return {
        "pdr": metrics.pdr,
        "e2ed_ms": metrics.e2ed_ms,
        "nrl": metrics.nrl,
        "hops": metrics.hops,
        "e_sent_mj": metrics.energy.e_sent,
        "e_recv_mj": metrics.energy.e_recv,
        "e_total_mj": metrics.energy.e_total,
        "e_total_per_vehicle_mj": metrics.energy.e_total_per_vehicle,
        "data_sent": metrics.data_sent,
        "data_delivered": metrics.data_delivered,
        "control_tx": metrics.control_tx,
    }


class _PositionIndex:
    """Vectorized positions for every node at a shared query time.

    Traces produced by the generator sample all nodes on one time grid;
    that case interpolates a whole (n, 2) snapshot with two numpy rows.
    Irregular traces fall back to per-node interpolation.
    """

    def __init__(self, trace: MobilityTrace):
        self.trace = trace
        self.node_ids = list(trace.node_ids)
        per_node = trace._per_node
        times0 = per_node[self.node_ids[0]][0]
        self.shared = all(per_node[n][0] == times0 for n in self.node_ids)
        if self.shared:
            self.times = np.asarray(times0)
            self.xs = np.column_stack([per_node[n][1] for n in self.node_ids])
            self.ys = np.column_stack([per_node[n][2] for n in self.node_ids])
        self._cache_t = None
        self._cache = None

    def positions(self, t: float):
        if t == self._cache_t:
            return self._cache
        if self.shared:
            k = int(np.searchsorted(self.times, t, side="right")) - 1
            if k < 0:
                k = 0
            if k >= len(self.times) - 1 or self.times[k] == t:
                snap = (self.xs[k], self.ys[k])
            else:
                f = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
                snap = (
                    self.xs[k] + f * (self.xs[k + 1] - self.xs[k]),
                    self.ys[k] + f * (self.ys[k + 1] - self.ys[k]),
                )
        else:
            pts = [position_at(self.trace, n, t) for n in self.node_ids]
            snap = (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
        self._cache_t = t
        self._cache = snap
        return snap


# event kinds, dispatched by tag
_EV_HELLO = 0
_EV_TC = 1
_EV_CBR = 2
_EV_DATA = 3


class _Simulation:
    def __init__(
        self,
        scenario: Scenario,
        config: OlsrConfig,
        nic: NicProfile,
        seed: int,
        processing_delay: float,
        max_hops: int,
        on_transmit,
    ):
        self.scenario = scenario
        self.config = config
        self.nic = nic
        self.seed = seed
        self.processing_delay = processing_delay
        self.max_hops = max_hops
        self.on_transmit = on_transmit

        self.nodes = list(scenario.trace.node_ids)
        self.index = {n: i for i, n in enumerate(self.nodes)}
        self.states = {n: OlsrNodeState(node_id=n) for n in self.nodes}
        self.pos = _PositionIndex(scenario.trace)
        self.range2 = scenario.radio_range**2

        # jitter streams are keyed by each vehicle's initial position so
        # behaviour does not depend on how node ids were assigned
        seen_pos: dict = {}
        self.hello_rng = {}
        self.tc_rng = {}
        for n in self.nodes:
            x0, y0 = position_at(scenario.trace, n, 0.0)
            rank = seen_pos.get((x0, y0), 0)
            seen_pos[(x0, y0)] = rank + 1
            self.hello_rng[n] = derive_rng(seed, "jitter", "hello", x0, y0, rank)
            self.tc_rng[n] = derive_rng(seed, "jitter", "tc", x0, y0, rank)
        self.loss_rng = derive_rng(seed, "loss")
        self.lossy = scenario.loss_model.kind == "bernoulli"
        self.p_max = scenario.loss_model.p_at_max_range

        self.heap: list = []
        self._seq = 0

        self.e_sent = {n: 0.0 for n in self.nodes}
        self.e_recv = {n: 0.0 for n in self.nodes}
        self.control_tx = 0
        self.data_sent = 0
        self.data_delivered = 0
        self.hops_sum = 0
        self.delay_sum = 0.0

        self.hello_period = olsr.hello_emission_interval(config)
        self.tc_period = config.tc_interval

        for n in self.nodes:
            self._schedule_tick(_EV_HELLO, n, 0)
            self._schedule_tick(_EV_TC, n, 0)
        for flow in scenario.flows:
            count = math.ceil(flow.rate * flow.duration - 1e-9)
            for i in range(count):
                t = flow.start + i / flow.rate
                self._push(t, _EV_CBR, (flow.source, flow.destination, flow.packet_size))

    def _push(self, t: float, kind: int, payload):
        self._seq += 1
        heapq.heappush(self.heap, (t, self._seq, kind, payload))

    def _schedule_tick(self, kind: int, node: int, k: int):
        """Queue periodic emission k for `node`; jitter in [0, period/4).

        The jitter draw happens per tick whether or not anything ends up
        on the air, so emission instants are a fixed function of the
        period: larger intervals can never emit more often.
        """
        if kind == _EV_HELLO:
            period, rng = self.hello_period, self.hello_rng[node]
        else:
            period, rng = self.tc_period, self.tc_rng[node]
        t = k * period + rng.random() * period / 4.0
        if t <= self.scenario.sim_duration:
            self._push(t, kind, (node, k))

    def _receivers(self, sender: int, t: float):
        xs, ys = self.pos.positions(t)
        i = self.index[sender]
        d2 = (xs - xs[i]) ** 2 + (ys - ys[i]) ** 2
        hits = np.flatnonzero(d2 <= self.range2)
        out = []
        for j in hits:
            if j == i:
                continue
            node = self.nodes[j]
            if self.lossy:
                p = self.p_max * math.sqrt(d2[j]) / self.scenario.radio_range
                if self.loss_rng.random() < p:
                    continue
            out.append(node)
        return out

    def _transmit(self, sender: int, size_bits: int, t: float):
        """Charge one broadcast: sender pays send energy, every node that
        hears it pays receive energy. Returns the receiving node ids."""
        receivers = self._receivers(sender, t)
        self.e_sent[sender] += energy_send(self.nic, size_bits)
        if receivers:
            e = energy_recv(self.nic, size_bits)
            for r in receivers:
                self.e_recv[r] += e
        if self.on_transmit is not None:
            self.on_transmit(sender, size_bits, tuple(receivers), t)
        return receivers

    def _flood(self, msg: ControlMessage, t: float):
        """Broadcast a control message and run the synchronous flood:
        receptions are processed FIFO at the same instant, and MPR
        forwarders re-broadcast within the cascade."""
        queue = deque()
        self.control_tx += 1
        for r in self._transmit(msg.sender, msg.size * 8, t):
            queue.append((r, msg))
        while queue:
            node, m = queue.popleft()
            state = self.states[node]
            olsr.expire(state, t)
            if m.kind == olsr.HELLO:
                olsr.process_hello(state, m, t, self.config)
                continue
            link = state.links.get(m.sender)
            if link is None or not link[0]:
                continue  # TCs over non-symmetric links are discarded
            olsr.process_tc(state, m, t, self.config)
            if olsr.should_forward(state, m.originator, m.seq_no, m.sender, t, self.config):
                fwd = replace(m, sender=node)
                self.control_tx += 1
                for r in self._transmit(node, fwd.size * 8, t):
                    queue.append((r, fwd))

    def _send_data(self, node: int, dest: int, size_bytes: int, origin_t: float, hops: int, t: float):
        state = self.states[node]
        olsr.expire(state, t)
        route = olsr.ensure_routes(state).get(dest)
        if route is None:
            return  # no route: the packet dies here
        next_hop = route[0]
        size_bits = size_bytes * 8
        receivers = self._transmit(node, size_bits, t)
        if next_hop not in receivers:
            return  # next hop moved away or lost the frame
        arrival = t + packet_airtime(size_bits, self.scenario.bandwidth) + self.processing_delay
        self._push(arrival, _EV_DATA, (next_hop, dest, size_bytes, origin_t, hops + 1))

    def run(self) -> SimMetrics:
        duration = self.scenario.sim_duration
        heap = self.heap
        while heap:
            t, _seq, kind, payload = heapq.heappop(heap)
            if t > duration:
                break
            if kind == _EV_HELLO:
                node, k = payload
                state = self.states[node]
                olsr.expire(state, t)
                self._flood(olsr.make_hello(state, self.config), t)
                self._schedule_tick(_EV_HELLO, node, k + 1)
            elif kind == _EV_TC:
                node, k = payload
                state = self.states[node]
                olsr.expire(state, t)
                if state.mpr_selectors:
                    self._flood(olsr.make_tc(state, self.config), t)
                self._schedule_tick(_EV_TC, node, k + 1)
            elif kind == _EV_CBR:
                source, dest, size_bytes = payload
                self.data_sent += 1
                self._send_data(source, dest, size_bytes, t, 0, t)
            else:  # _EV_DATA
                node, dest, size_bytes, origin_t, hops = payload
                if node == dest:
                    self.data_delivered += 1
                    self.hops_sum += hops
                    self.delay_sum += t - origin_t
                elif hops < self.max_hops:
                    self._send_data(node, dest, size_bytes, origin_t, hops, t)
        return self._metrics()

    def _metrics(self) -> SimMetrics:
        ledger = EnergyLedger(per_node_sent=dict(self.e_sent), per_node_recv=dict(self.e_recv))
        pdr = None
        if self.data_sent > 0:
            pdr = 100.0 * self.data_delivered / self.data_sent
        delivered = self.data_delivered
        return SimMetrics(
            pdr=pdr,
            e2ed_ms=1000.0 * self.delay_sum / delivered if delivered else None,
            nrl=100.0 * self.control_tx / delivered if delivered else None,
            hops=self.hops_sum / delivered if delivered else None,
            energy=ledger,
            data_sent=self.data_sent,
            data_delivered=delivered,
            control_tx=self.control_tx,
        )


def run_simulation(
    scenario: Scenario,
    config: OlsrConfig,
    nic: NicProfile,
    seed: int,
    *,
    allow_no_flows: bool = False,
    processing_delay: float = PROCESSING_DELAY_S,
    max_hops: int = MAX_HOPS,
    on_transmit=None,
) -> SimMetrics:
    """Simulate `scenario` under `config` and return the run's metrics.

    Deterministic: the same (scenario, config, nic, seed) always yields
    the same SimMetrics. `on_transmit(sender, size_bits, receivers, t)`
    is an observation hook for tests and tracing.
    """
    if not scenario.flows and not allow_no_flows:
        raise ConfigurationError("no data flows (pass allow_no_flows to run control-only)")
    sim = _Simulation(scenario, config, nic, seed, processing_delay, max_hops, on_transmit)
    return sim.run()


def routing_snapshot(
    scenario: Scenario,
    config: OlsrConfig,
    nic: NicProfile,
    seed: int,
) -> dict:
    """Run the control plane for the scenario's full duration and return
    every node's routing table as {node: {dest: (next_hop, hops)}}."""
    sim = _Simulation(scenario, config, nic, seed, PROCESSING_DELAY_S, MAX_HOPS, None)
    sim.run()
    tables = {}
    for node, state in sim.states.items():
        olsr.expire(state, scenario.sim_duration)
        tables[node] = dict(olsr.ensure_routes(state))
    return tables


def compare_against_reference(
    scenario: Scenario, config: OlsrConfig, nic: NicProfile, seed: int
) -> tuple:
    """Run `config` and the standard defaults with the same seed; returns
    (metrics for config, reference metrics, (energy gap %, pdr gap))."""
    from .analysis import gap_energy, gap_pdr

    m_cfg = run_simulation(scenario, config, nic, seed)
    m_rfc = run_simulation(scenario, olsr.rfc_default(), nic, seed)
    gaps = (
        gap_energy(m_cfg.energy.e_total, m_rfc.energy.e_total),
        gap_pdr(m_cfg.pdr, m_rfc.pdr),
    )
    return m_cfg, m_rfc, gaps


def save_metrics_json(metrics: SimMetrics, path) -> None:
    doc = metrics_to_json(metrics)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
