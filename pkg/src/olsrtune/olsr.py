"""OLSR node state machine (RFC 3626 subset).

Implements the pieces of the protocol that the tuning study exercises:
link sensing and neighborhood discovery through HELLO messages, greedy
multipoint-relay (MPR) selection, topology dissemination through TC
messages with duplicate suppression, and minimum-hop routing-table
calculation. Behaviour is parameterized by the eight standard knobs in
OlsrConfig.

Nodes are single-interface, so no MID messages are generated;
mid_hold_time stays in the genome but has no protocol effect.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .errors import ConfigurationError

__all__ = [
    "OlsrConfig",
    "ParamSpace",
    "OlsrNodeState",
    "ControlMessage",
    "GENE_NAMES",
    "HELLO",
    "TC",
    "LINK_ASYM",
    "LINK_SYM",
    "LINK_MPR",
    "rfc_default",
    "default_param_space",
    "decode_genome",
    "encode_config",
    "hello_emission_interval",
    "config_to_dict",
    "config_from_dict",
    "make_hello",
    "make_tc",
    "process_hello",
    "select_mprs",
    "process_tc",
    "should_forward",
    "compute_routes",
    "ensure_routes",
    "expire",
]

log = logging.getLogger(__name__)

HELLO = "HELLO"
TC = "TC"

LINK_ASYM = "asym"
LINK_SYM = "sym"
LINK_MPR = "mpr"  # symmetric and selected as MPR by the sender

WILL_NEVER = 0
WILL_DEFAULT = 3
WILL_ALWAYS = 7

HELLO_HEADER_BYTES = 24
HELLO_ENTRY_BYTES = 8
TC_HEADER_BYTES = 20
TC_ENTRY_BYTES = 4

# genome layout: willingness (index 3) is the only integer gene, and
# mid_hold precedes top_hold
GENE_NAMES = (
    "hello_interval",
    "refresh_interval",
    "tc_interval",
    "willingness",
    "neighb_hold_time",
    "mid_hold_time",
    "top_hold_time",
    "dup_hold_time",
)


@dataclass(frozen=True)
class OlsrConfig:
    """The eight tunable OLSR parameters, each within its standard range."""

    hello_interval: float
    refresh_interval: float
    tc_interval: float
    willingness: int
    neighb_hold_time: float
    top_hold_time: float
    mid_hold_time: float
    dup_hold_time: float

    def __post_init__(self):
        checks = (
            ("hello_interval", self.hello_interval, 2.0, 15.0),
            ("refresh_interval", self.refresh_interval, 2.0, 15.0),
            ("tc_interval", self.tc_interval, 4.0, 35.0),
            ("willingness", self.willingness, 0, 7),
            ("neighb_hold_time", self.neighb_hold_time, 5.5, 45.0),
            ("top_hold_time", self.top_hold_time, 10.5, 90.0),
            ("mid_hold_time", self.mid_hold_time, 10.5, 90.0),
            ("dup_hold_time", self.dup_hold_time, 10.5, 90.0),
        )
        for name, value, lo, hi in checks:
            if not math.isfinite(value):
                raise ConfigurationError(f"{name} is not finite")
            if not lo <= value <= hi:
                raise ConfigurationError(f"{name}={value} outside [{lo}, {hi}]")
        if not isinstance(self.willingness, int):
            raise ConfigurationError("willingness must be an integer")


def rfc_default() -> OlsrConfig:
    """Standard parameter values: hold times are 3x their message interval."""
    return OlsrConfig(
        hello_interval=2.0,
        refresh_interval=2.0,
        tc_interval=5.0,
        willingness=3,
        neighb_hold_time=6.0,
        top_hold_time=15.0,
        mid_hold_time=15.0,
        dup_hold_time=30.0,
    )


@dataclass(frozen=True)
class ParamSpace:
    """Per-gene search bounds plus the standard reference vector."""

    bounds: tuple  # of (z_min, z_max), one per gene
    rfc: tuple  # reference value per gene
    integer_genes: tuple = (3,)

    def __post_init__(self):
        if len(self.bounds) != len(self.rfc):
            raise ConfigurationError("bounds and rfc vectors differ in length")
        for k, ((lo, hi), z) in enumerate(zip(self.bounds, self.rfc)):
            if not lo < hi:
                raise ConfigurationError(f"gene {k}: need z_min < z_max")
            if not lo <= z <= hi:
                raise ConfigurationError(f"gene {k}: rfc value {z} outside bounds")

    @property
    def n_genes(self) -> int:
        return len(self.bounds)

    def span(self, k: int) -> float:
        lo, hi = self.bounds[k]
        return hi - lo


def default_param_space() -> ParamSpace:
    return ParamSpace(
        bounds=(
            (2.0, 15.0),  # hello_interval
            (2.0, 15.0),  # refresh_interval
            (4.0, 35.0),  # tc_interval
            (0.0, 7.0),  # willingness
            (5.5, 45.0),  # neighb_hold_time
            (10.5, 90.0),  # mid_hold_time
            (10.5, 90.0),  # top_hold_time
            (10.5, 90.0),  # dup_hold_time
        ),
        rfc=(2.0, 2.0, 5.0, 3.0, 6.0, 15.0, 15.0, 30.0),
    )


def decode_genome(genes, space: ParamSpace) -> OlsrConfig:
    """Map an 8-gene vector to a valid config (clamp, round willingness)."""
    if len(genes) != space.n_genes:
        raise ConfigurationError(f"expected {space.n_genes} genes, got {len(genes)}")
    vals = []
    for k, g in enumerate(genes):
        g = float(g)
        if not math.isfinite(g):
            raise ConfigurationError(f"gene {k} is not finite")
        lo, hi = space.bounds[k]
        vals.append(min(max(g, lo), hi))
    will = int(math.floor(vals[3] + 0.5))
    will = min(max(will, 0), 7)
    return OlsrConfig(
        hello_interval=vals[0],
        refresh_interval=vals[1],
        tc_interval=vals[2],
        willingness=will,
        neighb_hold_time=vals[4],
        mid_hold_time=vals[5],
        top_hold_time=vals[6],
        dup_hold_time=vals[7],
    )


def encode_config(config: OlsrConfig) -> tuple:
    return tuple(float(getattr(config, name)) for name in GENE_NAMES)


def hello_emission_interval(config: OlsrConfig) -> float:
    """Effective HELLO period: every link must be re-advertised within
    refresh_interval, so the faster of the two intervals wins."""
    return min(config.hello_interval, config.refresh_interval)


def config_to_dict(config: OlsrConfig) -> dict:
    return {
        "hello_interval": config.hello_interval,
        "refresh_interval": config.refresh_interval,
        "tc_interval": config.tc_interval,
        "willingness": config.willingness,
        "neighb_hold_time": config.neighb_hold_time,
        "top_hold_time": config.top_hold_time,
        "mid_hold_time": config.mid_hold_time,
        "dup_hold_time": config.dup_hold_time,
    }


def config_from_dict(doc: dict) -> OlsrConfig:
    try:
        return OlsrConfig(
            hello_interval=float(doc["hello_interval"]),
            refresh_interval=float(doc["refresh_interval"]),
            tc_interval=float(doc["tc_interval"]),
            willingness=int(doc["willingness"]),
            neighb_hold_time=float(doc["neighb_hold_time"]),
            top_hold_time=float(doc["top_hold_time"]),
            mid_hold_time=float(doc["mid_hold_time"]),
            dup_hold_time=float(doc["dup_hold_time"]),
        )
    except KeyError as exc:
        raise ConfigurationError(f"config document missing field {exc}") from None


@dataclass(frozen=True)
class ControlMessage:
    """A HELLO or TC message as carried on the air.

    HELLO payload: (own willingness, ((neighbor, link status, neighbor
    willingness), ...)). TC payload: tuple of MPR-selector node ids.
    """

    kind: str
    originator: int
    sender: int
    seq_no: int
    payload: tuple
    size: int  # bytes


@dataclass
class OlsrNodeState:
    """Protocol state owned by a single node."""

    node_id: int
    # neighbor -> (symmetric, expiry)
    links: dict = field(default_factory=dict)
    # neighbor -> last advertised willingness
    nbr_will: dict = field(default_factory=dict)
    # neighbor -> {two-hop node -> expiry}
    two_hop: dict = field(default_factory=dict)
    mpr_set: set = field(default_factory=set)
    # neighbor that selected us as MPR -> expiry
    mpr_selectors: dict = field(default_factory=dict)
    # originator (last hop) -> [seq_no, {dest -> expiry}]
    topology: dict = field(default_factory=dict)
    # (originator, seq_no) -> expiry
    duplicates: dict = field(default_factory=dict)
    # dest -> (next_hop, hop_count)
    routing_table: dict = field(default_factory=dict)
    routes_dirty: bool = False
    hello_seq: int = 0
    tc_seq: int = 0
    # conservative lower bound on the earliest stored expiry; lets
    # expire() return in O(1) when nothing can have lapsed
    next_expiry: float = math.inf

    def note_expiry(self, expiry: float):
        if expiry < self.next_expiry:
            self.next_expiry = expiry

    def symmetric_neighbors(self) -> list:
        return sorted(n for n, (sym, _exp) in self.links.items() if sym)


def make_hello(state: OlsrNodeState, config: OlsrConfig) -> ControlMessage:
    """Build this node's next HELLO, advertising all current links."""
    entries = []
    for nbr in sorted(state.links):
        sym, _exp = state.links[nbr]
        if sym and nbr in state.mpr_set:
            status = LINK_MPR
        elif sym:
            status = LINK_SYM
        else:
            status = LINK_ASYM
        entries.append((nbr, status, state.nbr_will.get(nbr, WILL_DEFAULT)))
    state.hello_seq += 1
    return ControlMessage(
        kind=HELLO,
        originator=state.node_id,
        sender=state.node_id,
        seq_no=state.hello_seq,
        payload=(config.willingness, tuple(entries)),
        size=HELLO_HEADER_BYTES + HELLO_ENTRY_BYTES * len(entries),
    )


def make_tc(state: OlsrNodeState, config: OlsrConfig) -> ControlMessage:
    """Build this node's next TC, advertising its MPR selectors."""
    entries = tuple(sorted(state.mpr_selectors))
    state.tc_seq += 1
    return ControlMessage(
        kind=TC,
        originator=state.node_id,
        sender=state.node_id,
        seq_no=state.tc_seq,
        payload=entries,
        size=TC_HEADER_BYTES + TC_ENTRY_BYTES * len(entries),
    )


def process_hello(
    state: OlsrNodeState, msg: ControlMessage, now: float, config: OlsrConfig
) -> OlsrNodeState:
    """Apply a received HELLO: link sensing, two-hop discovery, MPR
    bookkeeping. The link turns symmetric once the sender lists us."""
    sender = msg.sender
    if sender == state.node_id:
        return state
    own_will, entries = msg.payload
    expiry = now + config.neighb_hold_time
    state.note_expiry(expiry)

    listed = False
    listed_as_mpr = False
    for nbr, status, _w in entries:
        if nbr == state.node_id:
            listed = True
            if status == LINK_MPR:
                listed_as_mpr = True

    prev = state.links.get(sender)
    sym = listed or (prev is not None and prev[0])
    state.links[sender] = (sym, expiry)
    link_changed = prev is None or prev[0] != sym

    nbhd_changed = link_changed
    if state.nbr_will.get(sender) != own_will:
        state.nbr_will[sender] = own_will
        nbhd_changed = True

    hood = state.two_hop.setdefault(sender, {})
    for nbr, status, _w in entries:
        if nbr == state.node_id or status == LINK_ASYM:
            continue
        if nbr not in hood:
            nbhd_changed = True
        hood[nbr] = expiry

    if listed_as_mpr:
        state.mpr_selectors[sender] = expiry

    if nbhd_changed:
        select_mprs(state)
    if link_changed:
        state.routes_dirty = True
    return state


def select_mprs(state: OlsrNodeState) -> set:
    """Greedy MPR selection over the strict two-hop neighborhood.

    Willingness-7 neighbors are always chosen and willingness-0 ones
    never; remaining two-hop nodes are covered by first taking sole
    providers, then repeatedly the candidate with highest willingness,
    then widest uncovered coverage, then lowest id.
    """
    sym = set()
    for n, (is_sym, _exp) in state.links.items():
        if is_sym:
            sym.add(n)

    cover = {}
    for n in sym:
        if state.nbr_will.get(n, WILL_DEFAULT) == WILL_NEVER:
            continue
        hood = state.two_hop.get(n)
        if not hood:
            continue
        strict = {t for t in hood if t != state.node_id and t not in sym}
        if strict:
            cover[n] = strict

    targets = set()
    for strict in cover.values():
        targets |= strict
    dropped = set()
    for n in sym:
        if state.nbr_will.get(n, WILL_DEFAULT) == WILL_NEVER:
            hood = state.two_hop.get(n) or {}
            for t in hood:
                if t != state.node_id and t not in sym and t not in targets:
                    dropped.add(t)
    if dropped:
        log.debug(
            "node %d: two-hop nodes %s reachable only via willingness-0 neighbors",
            state.node_id,
            sorted(dropped),
        )

    mprs = {n for n in sym if state.nbr_will.get(n, WILL_DEFAULT) == WILL_ALWAYS}
    uncovered = set(targets)
    for m in mprs:
        uncovered -= cover.get(m, set())

    # sole providers first
    for t in sorted(uncovered):
        providers = [n for n, c in cover.items() if t in c]
        if len(providers) == 1:
            mprs.add(providers[0])
    for m in mprs:
        uncovered -= cover.get(m, set())

    while uncovered:
        best = None
        best_key = None
        for n in sorted(cover):
            if n in mprs:
                continue
            gain = len(cover[n] & uncovered)
            if gain == 0:
                continue
            key = (state.nbr_will.get(n, WILL_DEFAULT), gain, -n)
            if best_key is None or key > best_key:
                best, best_key = n, key
        if best is None:
            break  # leftovers are uncoverable
        mprs.add(best)
        uncovered -= cover[best]

    state.mpr_set = mprs
    return mprs


def process_tc(
    state: OlsrNodeState, msg: ControlMessage, now: float, config: OlsrConfig
) -> OlsrNodeState:
    """Apply a received TC: refresh (dest, last_hop=originator) tuples,
    discarding stale sequence numbers."""
    orig = msg.originator
    if orig == state.node_id:
        return state
    rec = state.topology.get(orig)
    if rec is not None and msg.seq_no < rec[0]:
        return state
    if rec is None or msg.seq_no > rec[0]:
        rec = [msg.seq_no, {}]
        state.topology[orig] = rec
        state.routes_dirty = True
    expiry = now + config.top_hold_time
    state.note_expiry(expiry)
    dests = rec[1]
    for dest in msg.payload:
        if dest == state.node_id:
            continue
        if dest not in dests:
            state.routes_dirty = True
        dests[dest] = expiry
    return state


def should_forward(
    state: OlsrNodeState,
    originator: int,
    seq_no: int,
    sender: int,
    now: float,
    config: OlsrConfig,
) -> bool:
    """Default forwarding rule: suppress duplicates, then relay only if
    the sender selected this node as MPR. Always records the duplicate."""
    key = (originator, seq_no)
    ent = state.duplicates.get(key)
    if ent is not None and ent > now:
        return False
    expiry = now + config.dup_hold_time
    state.duplicates[key] = expiry
    state.note_expiry(expiry)
    return sender in state.mpr_selectors


def compute_routes(state: OlsrNodeState) -> dict:
    """Minimum-hop routing table over symmetric links plus topology
    tuples; ties go to the lowest next_hop id, then lowest last hop."""
    routes = {}
    for n in state.symmetric_neighbors():
        routes[n] = (n, 1)
    frontier = list(routes)
    hops = 1
    while frontier:
        candidates = {}
        for last_hop in frontier:
            rec = state.topology.get(last_hop)
            if rec is None:
                continue
            next_hop = routes[last_hop][0]
            for dest in rec[1]:
                if dest == state.node_id or dest in routes:
                    continue
                cand = (next_hop, last_hop)
                cur = candidates.get(dest)
                if cur is None or cand < cur:
                    candidates[dest] = cand
        hops += 1
        frontier = []
        for dest in sorted(candidates):
            routes[dest] = (candidates[dest][0], hops)
            frontier.append(dest)
    state.routing_table = routes
    state.routes_dirty = False
    return routes


def ensure_routes(state: OlsrNodeState) -> dict:
    if state.routes_dirty:
        return compute_routes(state)
    return state.routing_table


def expire(state: OlsrNodeState, now: float) -> OlsrNodeState:
    """Drop every entry whose expiry is <= now; recompute MPRs and routes
    if anything went. O(1) when the earliest stored expiry is still ahead."""
    if now < state.next_expiry:
        return state

    removed = False
    bound = math.inf

    dead_links = [n for n, (_s, exp) in state.links.items() if exp <= now]
    for n in dead_links:
        del state.links[n]
        state.nbr_will.pop(n, None)
        state.two_hop.pop(n, None)
        removed = True
    for _n, (_s, exp) in state.links.items():
        bound = min(bound, exp)

    for n in list(state.two_hop):
        hood = state.two_hop[n]
        dead = [t for t, exp in hood.items() if exp <= now]
        for t in dead:
            del hood[t]
            removed = True
        if not hood:
            del state.two_hop[n]
        else:
            bound = min(bound, min(hood.values()))

    dead_sel = [n for n, exp in state.mpr_selectors.items() if exp <= now]
    for n in dead_sel:
        del state.mpr_selectors[n]
        removed = True
    if state.mpr_selectors:
        bound = min(bound, min(state.mpr_selectors.values()))

    for orig in list(state.topology):
        dests = state.topology[orig][1]
        dead = [d for d, exp in dests.items() if exp <= now]
        for d in dead:
            del dests[d]
            removed = True
        if not dests:
            del state.topology[orig]
        else:
            bound = min(bound, min(dests.values()))

    dead_dup = [k for k, exp in state.duplicates.items() if exp <= now]
    for k in dead_dup:
        del state.duplicates[k]
        removed = True
    if state.duplicates:
        bound = min(bound, min(state.duplicates.values()))

    state.next_expiry = bound
    if removed:
        select_mprs(state)
        compute_routes(state)
    return state
