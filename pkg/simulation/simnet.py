"""
Deterministic discrete-event simulator for the SDN testbed.

Events live in a heap ordered by (virtual time, sequence number); the
sequence number is assigned when an event is scheduled, so simultaneous
events run in scheduling order. Host traffic (ping, telnet, logins) is
executed synchronously at the current virtual time; the clock only moves
through run_until.
"""
import functools
import heapq
import logging
import random
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Mapping, Optional, Union

import networkx as nx

from processors.errors import ScenarioError, SimulationError, TopologyError
from simulation.topology import DomainStatus, LinkKind, NodeKind, Topology, rate_limit_for, validate_topology

logger = logging.getLogger(__name__)


# ==============================================================================
# CONFIGURATION AND STATUSES
# ==============================================================================

class PacketKind:
    HELLO = "Hello"
    PACKET_IN = "PacketIn"
    FLOW_MOD = "FlowMod"
    ICMP = "Icmp"
    TELNET_DATA = "TelnetData"
    TCP_SYN = "TcpSyn"
    TCP_SYN_ACK = "TcpSynAck"
    LOGIN_ATTEMPT = "LoginAttempt"
    LOGIN_RESULT = "LoginResult"


class PingStatus:
    DELIVERED = "Delivered"
    BLOCKED = "Blocked"
    TIMEOUT = "Timeout"


class LoginResult:
    SUCCESS = "Success"
    FAILURE = "Failure"
    LOCKED_OUT = "LockedOut"


class _Opaque:
    """Payload marker for packets carried over an encrypted channel."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Opaque"


OPAQUE = _Opaque()

LINK_LATENCY = 0.0005
CONTROLLER_PROCESSING = 0.002
SYN_TICKS_PER_SECOND = 100
TLS_OVERHEAD = 29


# ==============================================================================
# DOMAIN TYPES
# ==============================================================================

@dataclass
class SimClock:
    now: float = 0.0

    def advance(self, t: float) -> None:
        if t < self.now:
            raise SimulationError(f"time regression: {t} < {self.now}")
        self.now = t


@dataclass(frozen=True)
class Packet:
    kind: str
    src: str
    dst: str
    payload: Union[Mapping[str, Any], _Opaque]
    timestamp: float
    vpls_tag: Optional[str] = None

    @property
    def opaque(self) -> bool:
        return self.payload is OPAQUE

    @property
    def size(self) -> int:
        if self.opaque:
            return 64 + TLS_OVERHEAD
        return 64 + 8 * len(self.payload)


@dataclass(frozen=True)
class CapturedPacket:
    link: str
    packet: Packet

    @property
    def kind(self) -> Optional[str]:
        """The packet kind, or None when the channel hid it."""
        return None if self.packet.opaque else self.packet.kind


@dataclass(frozen=True)
class CaptureSet:
    link: str
    packets: tuple[CapturedPacket, ...]

    def __len__(self) -> int:
        return len(self.packets)

    @property
    def plaintext(self) -> list[Packet]:
        return [c.packet for c in self.packets if not c.packet.opaque]


@dataclass(frozen=True)
class TapHandle:
    id: int
    link: str
    opened_at: float


@dataclass(frozen=True)
class TraceRecord:
    time: float
    node: str
    event: str
    fields: tuple[tuple[str, Any], ...] = ()

    def __str__(self) -> str:
        text = f"t={self.time:.3f} {self.node} {self.event}"
        if self.fields:
            text += " " + " ".join(f"{k}={_format_value(v)}" for k, v in self.fields)
        return text


@dataclass(frozen=True)
class PingResult:
    status: str
    rtt: Optional[float] = None

    @property
    def delivered(self) -> bool:
        return self.status == PingStatus.DELIVERED


@dataclass(frozen=True)
class SessionTranscript:
    src: str
    dst: str
    packets: tuple[Packet, ...]
    accepted: bool


@dataclass(frozen=True)
class FlowEntry:
    next_hop: str
    vpls_tag: str
    expires_at: float


@dataclass
class ControllerState:
    syn_backlog_limit: int
    pending_queue_limit: int
    pending_queue: deque = field(default_factory=deque)
    half_open: float = 0.0
    failed_logins: Dict[str, int] = field(default_factory=dict)
    consecutive_failures: Dict[str, int] = field(default_factory=dict)
    locked_out: Dict[str, float] = field(default_factory=dict)

    @property
    def backlog_exceeded(self) -> bool:
        return self.half_open > self.syn_backlog_limit

    @property
    def queue_full(self) -> bool:
        return len(self.pending_queue) >= self.pending_queue_limit

    @property
    def stalled(self) -> bool:
        return self.backlog_exceeded or self.queue_full


@dataclass(frozen=True)
class _Flood:
    src: str
    rate: float
    start: float
    end: float


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.3f}"
    if isinstance(value, (list, tuple, set, frozenset)):
        return ",".join(str(v) for v in value)
    return str(value)


# ==============================================================================
# THE SIMULATOR
# ==============================================================================

class Sim:
    def __init__(self, topology: Topology, seed: int = 0):
        problems = validate_topology(topology)
        if problems:
            raise TopologyError("invalid topology: " + "; ".join(problems))

        self.topology = topology
        self.seed = seed
        self.rng = random.Random(seed)
        self.clock = SimClock()
        self.config = topology.controller_config
        self.controller_id = topology.controller.id
        self.controller = ControllerState(
            syn_backlog_limit=self.config.syn_backlog_limit,
            pending_queue_limit=self.config.pending_queue_limit,
        )

        self.domain_status: Dict[str, str] = {d.id: d.status for d in topology.vpls_domains}
        self.domain_members: Dict[str, frozenset[str]] = {d.id: d.members for d in topology.vpls_domains}
        self.keepalive_misses: Dict[str, int] = {d.id: 0 for d in topology.vpls_domains}
        self.flow_tables: Dict[str, Dict[tuple[str, str, str], FlowEntry]] = {s: {} for s in topology.switches}

        self.trace: list[TraceRecord] = []
        self.probe_log: list[tuple[float, str, str, PingResult]] = []
        self.link_traversals: Dict[str, int] = {l.id: 0 for l in topology.links}
        self.syn_sent = 0.0
        self.syn_admitted = 0.0
        self.half_open_peak = 0.0

        self._events: list = []
        self._seq = 0
        self._taps: Dict[int, TapHandle] = {}
        self._captures: Dict[int, list[CapturedPacket]] = {}
        self._next_tap = 1
        self._floods: list[_Flood] = []
        self._ticking = False
        self._xid = 0

        self._data_plane = topology.data_plane()
        self._schedule(self.config.keepalive_interval / 2, "keepalive", self._keepalive_round)

    # --- Time and event queue ---
    @property
    def now(self) -> float:
        return self.clock.now

    def _schedule(self, at: float, name: str, handler: Callable, *args) -> None:
        if at < self.now:
            raise SimulationError(f"cannot schedule '{name}' in the past ({at} < {self.now})")
        heapq.heappush(self._events, (at, self._seq, name, handler, args))
        self._seq += 1

    def schedule_call(self, at: float, name: str, handler: Callable, *args) -> None:
        """Runs handler(*args) when the clock reaches 'at'."""
        self._schedule(at, name, handler, *args)

    def _record(self, node: str, event: str, **fields) -> TraceRecord:
        record = TraceRecord(self.now, node, event, tuple(fields.items()))
        self.trace.append(record)
        logger.debug(str(record))
        return record

    def run_until(self, t: float) -> list[TraceRecord]:
        if t < self.now:
            raise SimulationError(f"time regression: run_until({t}) called at t={self.now}")
        start = len(self.trace)
        while self._events and self._events[0][0] <= t:
            at, _, _, handler, args = heapq.heappop(self._events)
            self.clock.advance(at)
            handler(*args)
        self.clock.advance(t)
        return self.trace[start:]

    def run_for(self, duration: float) -> list[TraceRecord]:
        return self.run_until(self.now + duration)

    # --- Views ---
    @property
    def stalled(self) -> bool:
        return self.controller.stalled

    def domain_active(self, domain_id: str) -> bool:
        return self.domain_status[domain_id] == DomainStatus.ACTIVE

    def destroyed_domains(self) -> list[str]:
        return [d for d, status in self.domain_status.items() if status == DomainStatus.DESTROYED]

    def current_topology(self) -> Topology:
        domains = tuple(replace(d, status=self.domain_status[d.id]) for d in self.topology.vpls_domains)
        return replace(self.topology, vpls_domains=domains)

    def flow_entries(self) -> list[tuple[str, str, str, str]]:
        """(switch, src, dst, vpls_tag) for every installed entry."""
        return [(s, k[0], k[1], k[2]) for s, table in self.flow_tables.items() for k in table]

    # --- Packets and taps ---
    def _next_xid(self) -> int:
        self._xid += 1
        return self._xid

    def _traverse(self, a: str, b: str, kind: str, src: str, dst: str, payload: Mapping[str, Any],
                  vpls_tag: Optional[str] = None) -> Packet:
        link = self.topology.link_between(a, b)
        if link is None:
            raise SimulationError(f"no link between '{a}' and '{b}'")
        packet = Packet(
            kind=kind, src=src, dst=dst, timestamp=self.now, vpls_tag=vpls_tag,
            payload=OPAQUE if link.encrypted else dict(payload),
        )
        self.link_traversals[link.id] += 1
        for tap in self._taps.values():
            if tap.link == link.id:
                self._captures[tap.id].append(CapturedPacket(link.id, packet))
        return packet

    def _send_along(self, path: list[str], kind: str, payload: Mapping[str, Any], vpls_tag: Optional[str] = None,
                    src: Optional[str] = None, dst: Optional[str] = None) -> list[Packet]:
        src = src or path[0]
        dst = dst or path[-1]
        return [
            self._traverse(path[i], path[i + 1], kind, src, dst, payload, vpls_tag)
            for i in range(len(path) - 1)
        ]

    def tap_link(self, link_id: str) -> TapHandle:
        try:
            link = self.topology.find_link(link_id)
        except KeyError:
            raise SimulationError(f"unknown link '{link_id}'")
        handle = TapHandle(self._next_tap, link.id, self.now)
        self._next_tap += 1
        self._taps[handle.id] = handle
        self._captures[handle.id] = []
        self._record(link.id, "tap_opened", tap=handle.id)
        return handle

    def drain_tap(self, handle: TapHandle) -> CaptureSet:
        if handle.id not in self._taps:
            raise SimulationError(f"tap {handle.id} is not open")
        packets = tuple(self._captures[handle.id])
        self._captures[handle.id] = []
        return CaptureSet(handle.link, packets)

    def close_tap(self, handle: TapHandle) -> CaptureSet:
        capture = self.drain_tap(handle)
        del self._taps[handle.id]
        del self._captures[handle.id]
        return capture

    # --- Controller ---
    def _control_message(self, switch: str, kind: str, payload: Mapping[str, Any]) -> Packet:
        if kind == PacketKind.PACKET_IN:
            return self._traverse(switch, self.controller_id, kind, switch, self.controller_id, payload)
        return self._traverse(self.controller_id, switch, kind, self.controller_id, switch, payload)

    def _path(self, src: str, dst: str) -> list[str]:
        try:
            return nx.shortest_path(self._data_plane, src, dst)
        except (nx.NetworkXNoPath, nx.NodeNotFound):
            raise SimulationError(f"no data path between '{src}' and '{dst}'")

    def _install_flows(self, path: list[str], vpls_tag: str) -> None:
        """FlowMods for both directions on every switch along the path."""
        src, dst = path[0], path[-1]
        expires_at = self.now + self.config.flow_ttl
        for i in range(1, len(path) - 1):
            switch = path[i]
            for a, b, next_hop in ((src, dst, path[i + 1]), (dst, src, path[i - 1])):
                self._control_message(switch, PacketKind.FLOW_MOD, {
                    "xid": self._next_xid(), "switch": switch, "match_src": a, "match_dst": b,
                    "vpls": vpls_tag, "action": f"output:{next_hop}",
                })
                self.flow_tables[switch][(a, b, vpls_tag)] = FlowEntry(next_hop, vpls_tag, expires_at)
        self._schedule(expires_at, "flow_expiry", self._expire_flows, src, dst, vpls_tag, expires_at)
        self._record(self.controller_id, "flow_installed", src=src, dst=dst, vpls=vpls_tag,
                     switches=tuple(path[1:-1]), expires=expires_at)

    def _expire_flows(self, src: str, dst: str, vpls_tag: str, expires_at: float) -> None:
        removed = 0
        for table in self.flow_tables.values():
            for key in ((src, dst, vpls_tag), (dst, src, vpls_tag)):
                entry = table.get(key)
                if entry is not None and entry.expires_at == expires_at:
                    del table[key]
                    removed += 1
        if removed:
            self._record(self.controller_id, "flow_expired", src=src, dst=dst, vpls=vpls_tag, entries=removed)

    def _flush_domain_flows(self, domain_id: str) -> int:
        removed = 0
        for table in self.flow_tables.values():
            for key in [k for k in table if k[2] == domain_id]:
                del table[key]
                removed += 1
        return removed

    def _warm(self, path: list[str], vpls_tag: str) -> bool:
        src, dst = path[0], path[-1]
        for switch in path[1:-1]:
            table = self.flow_tables[switch]
            if (src, dst, vpls_tag) not in table or (dst, src, vpls_tag) not in table:
                return False
        return True

    def _handle_packet_in(self, switch: str, src: str, dst: str, vpls_tag: Optional[str]) -> bool:
        """Controller decision on a PacketIn; True when forwarding flows were installed."""
        if vpls_tag is None:
            self._record(self.controller_id, "flow_denied", src=src, dst=dst, reason="no-shared-vpls")
            return False
        if not self.domain_active(vpls_tag):
            self._record(self.controller_id, "flow_denied", src=src, dst=dst, vpls=vpls_tag, reason="vpls-destroyed")
            return False
        self._install_flows(self._path(src, dst), vpls_tag)
        return True

    def _packet_in(self, switch: str, src: str, dst: str, vpls_tag: Optional[str]) -> bool:
        """Sends a PacketIn; returns True when the controller answered with flows right away."""
        payload = {"xid": self._next_xid(), "switch": switch, "src": src, "dst": dst}
        if vpls_tag is not None:
            payload["vpls"] = vpls_tag
        if self.controller.stalled:
            if self.controller.queue_full:
                self._record(self.controller_id, "packet_in_dropped", switch=switch, src=src, dst=dst)
            else:
                self._control_message(switch, PacketKind.PACKET_IN, payload)
                self.controller.pending_queue.append((switch, src, dst, vpls_tag))
                self._record(self.controller_id, "packet_in_queued", switch=switch, src=src, dst=dst,
                             queue=len(self.controller.pending_queue))
            return False
        self._control_message(switch, PacketKind.PACKET_IN, payload)
        return self._handle_packet_in(switch, src, dst, vpls_tag)

    def _drain_pending(self) -> None:
        while self.controller.pending_queue and not self.controller.stalled:
            switch, src, dst, vpls_tag = self.controller.pending_queue.popleft()
            self._handle_packet_in(switch, src, dst, vpls_tag)

    # --- VPLS keepalives ---
    def _keepalive_round(self) -> None:
        stalled = self.controller.stalled
        for domain_id in sorted(self.domain_status):
            if not self.domain_active(domain_id):
                continue
            if stalled:
                self.keepalive_misses[domain_id] += 1
                misses = self.keepalive_misses[domain_id]
                self._record(self.controller_id, "keepalive_missed", vpls=domain_id, misses=misses)
                if misses >= self.config.keepalive_miss_limit:
                    self.domain_status[domain_id] = DomainStatus.DESTROYED
                    flushed = self._flush_domain_flows(domain_id)
                    self._record(self.controller_id, "vpls_destroyed", vpls=domain_id, flows_flushed=flushed)
                    logger.info(f"VPLS domain {domain_id} destroyed at t={self.now:.3f}")
            else:
                self.keepalive_misses[domain_id] = 0
        if not stalled:
            for switch in self.topology.switches:
                self._control_message(switch, PacketKind.HELLO, {"xid": self._next_xid(), "type": "ECHO_REQUEST", "switch": switch})
            self._record(self.controller_id, "keepalive", domains=sum(1 for d in self.domain_status if self.domain_active(d)))
        self._schedule(self.now + self.config.keepalive_interval, "keepalive", self._keepalive_round)

    def reconfigure_vpls(self) -> None:
        """Restores every domain to its baseline membership, Active, on the running simulator."""
        baseline = self.topology.vpls_baseline or self.topology.vpls_domains
        for d in baseline:
            self.domain_status[d.id] = DomainStatus.ACTIVE
            self.domain_members[d.id] = d.members
            self.keepalive_misses[d.id] = 0
        self._record(self.controller_id, "vpls_reconfigured", domains=len(baseline))
        logger.info(f"VPLS reconfigured at t={self.now:.3f}")

    # --- Host traffic ---
    def _require_host(self, host: str) -> None:
        if host not in self.topology.hosts:
            raise SimulationError(f"unknown host '{host}'")

    def _shared_domains(self, a: str, b: str) -> list[str]:
        return [d for d in sorted(self.domain_members) if a in self.domain_members[d] and b in self.domain_members[d]]

    def _vpls_tag(self, a: str, b: str) -> Optional[str]:
        shared = self._shared_domains(a, b)
        if not shared:
            return None
        active = [d for d in shared if self.domain_active(d)]
        return (active or shared)[0]

    def _establish(self, src: str, dst: str, kind: str, payload: Mapping[str, Any]) -> tuple[str, Optional[list[str]], Optional[str], bool]:
        """
        Pushes the first packet of a flow from src towards dst.

        Returns (status, path, vpls_tag, cold) where status is a PingStatus;
        the path is only set when the flow can be forwarded.
        """
        vpls_tag = self._vpls_tag(src, dst)
        path = self._path(src, dst)
        if src == dst:
            # Loopback never reaches a switch, but membership still decides the outcome.
            if vpls_tag is None:
                return PingStatus.BLOCKED, None, None, False
            if not self.domain_active(vpls_tag):
                return PingStatus.TIMEOUT, None, vpls_tag, False
            return PingStatus.DELIVERED, [src], vpls_tag, False
        if vpls_tag is not None and self.domain_active(vpls_tag) and self._warm(path, vpls_tag):
            return PingStatus.DELIVERED, path, vpls_tag, False

        # Cold path: the first switch punts the packet to the controller.
        self._traverse(path[0], path[1], kind, src, dst, payload, vpls_tag)
        installed = self._packet_in(path[1], src, dst, vpls_tag)
        if vpls_tag is None:
            return PingStatus.BLOCKED, None, None, True
        if not installed:
            return PingStatus.TIMEOUT, None, vpls_tag, True
        return PingStatus.DELIVERED, path, vpls_tag, True

    def ping(self, src: str, dst: str) -> PingResult:
        self._require_host(src)
        self._require_host(dst)
        payload = {"type": "echo-request", "seq": self._next_xid(), "src": src, "dst": dst}
        status, path, vpls_tag, cold = self._establish(src, dst, PacketKind.ICMP, payload)
        if status != PingStatus.DELIVERED:
            self._record(src, "ping", dst=dst, result=status)
            return PingResult(status)

        hops = len(path) - 1
        if hops:
            # The cold path already carried the request over the first hop.
            request_path = path[1:] if cold else path
            self._send_along(request_path, PacketKind.ICMP, payload, vpls_tag, src=src, dst=dst)
            reply = {"type": "echo-reply", "seq": payload["seq"], "src": dst, "dst": src}
            self._send_along(list(reversed(path)), PacketKind.ICMP, reply, vpls_tag)
        rtt = 2 * hops * LINK_LATENCY + (2 * LINK_LATENCY + CONTROLLER_PROCESSING if cold else 0.0)
        self._record(src, "ping", dst=dst, result=status, rtt=rtt)
        return PingResult(status, round(rtt, 6))

    def schedule_ping(self, src: str, dst: str, at: float) -> None:
        """Queues a probe ping; its result lands in probe_log."""
        self._require_host(src)
        self._require_host(dst)
        self._schedule(at, "probe", self._probe, src, dst)

    def _probe(self, src: str, dst: str) -> None:
        self.probe_log.append((self.now, src, dst, self.ping(src, dst)))

    def telnet_session(self, src: str, dst: str, username: str, secret: str,
                       commands: tuple[str, ...] = ("show flows",)) -> SessionTranscript:
        """
        Telnet login plus a few commands between two hosts. Telnet never
        encrypts, so credentials cross every link of the path in clear text.
        """
        self._require_host(src)
        self._require_host(dst)
        if self._vpls_tag(src, dst) is None or not any(self.domain_active(d) for d in self._shared_domains(src, dst)):
            raise SimulationError(f"telnet {src} -> {dst}: hosts are not in a common active VPLS domain")
        status, path, vpls_tag, _ = self._establish(src, dst, PacketKind.TELNET_DATA, {"src": src, "dst": dst, "flags": "SYN"})
        if status != PingStatus.DELIVERED:
            raise SimulationError(f"telnet {src} -> {dst}: destination unreachable ({status})")

        back = list(reversed(path))
        packets: list[Packet] = []
        accepted = bool(username)
        exchange = [
            (back, PacketKind.TELNET_DATA, {"src": dst, "dst": src, "data": "login:"}),
            (path, PacketKind.LOGIN_ATTEMPT, {"src": src, "dst": dst, "username": username, "secret": secret}),
            (back, PacketKind.LOGIN_RESULT, {"src": dst, "dst": src, "result": "accepted" if accepted else "rejected"}),
        ]
        if accepted:
            for command in commands:
                exchange.append((path, PacketKind.TELNET_DATA, {"src": src, "dst": dst, "data": command}))
                exchange.append((back, PacketKind.TELNET_DATA, {"src": dst, "dst": src, "data": f"{command}: ok"}))
        for hops, kind, payload in exchange:
            if len(hops) > 1:
                packets.append(self._send_along(hops, kind, payload, vpls_tag)[0])
        self._record(src, "telnet", dst=dst, user=username or "-", accepted=accepted, packets=len(packets))
        return SessionTranscript(src, dst, tuple(packets), accepted)

    # --- Management plane ---
    def attempt_login(self, src: str, username: str, secret: str) -> str:
        if not self.topology.has_node(src):
            raise SimulationError(f"unknown node '{src}'")
        if not nx.has_path(self.topology.graph(), src, self.controller_id):
            raise SimulationError(f"'{src}' cannot reach the controller")

        state = self.controller
        lockout = self.config.login_lockout
        expiry = state.locked_out.get(src)
        if expiry is not None and self.now < expiry:
            self._record(self.controller_id, "login", src=src, user=username, result=LoginResult.LOCKED_OUT)
            return LoginResult.LOCKED_OUT

        path = self._path_to_controller(src)
        self._send_along(path, PacketKind.LOGIN_ATTEMPT, {"src": src, "dst": self.controller_id, "username": username, "secret": secret})
        if (username, secret) in self.config.credentials:
            state.consecutive_failures[src] = 0
            result = LoginResult.SUCCESS
        else:
            state.failed_logins[src] = state.failed_logins.get(src, 0) + 1
            state.consecutive_failures[src] = state.consecutive_failures.get(src, 0) + 1
            result = LoginResult.FAILURE
        self._send_along(list(reversed(path)), PacketKind.LOGIN_RESULT, {"src": self.controller_id, "dst": src, "result": result})
        self._record(self.controller_id, "login", src=src, user=username, result=result)

        if result == LoginResult.FAILURE:
            failures = state.consecutive_failures[src]
            if lockout is not None and failures >= lockout.max_failures:
                state.locked_out[src] = self.now + lockout.lockout_duration
                state.consecutive_failures[src] = 0
                self._record(self.controller_id, "lockout", src=src, until=state.locked_out[src])
            if self.config.login_delay > 0:
                self.run_until(self.now + self.config.login_delay * failures)
        return result

    def _path_to_controller(self, src: str) -> list[str]:
        return nx.shortest_path(self.topology.graph(), src, self.controller_id)

    # --- SYN flood ---
    def calibrate_control_plane(self, packet_capacity: int, syn_backlog_limit: int) -> None:
        """
        Sets the controller's SYN-handling capacity and backlog limit for a
        flood scenario. An M8 rate limit already in place is rescaled to the
        new capacity.
        """
        if self._floods:
            raise SimulationError("the control plane cannot be recalibrated once a flood is scheduled")
        if packet_capacity <= 0 or syn_backlog_limit < 0:
            raise ScenarioError(
                f"packet_capacity must be positive and syn_backlog_limit non-negative "
                f"(packet_capacity={packet_capacity}, syn_backlog_limit={syn_backlog_limit})"
            )
        limit = self.config.control_rate_limit
        self.config = replace(
            self.config,
            packet_capacity=packet_capacity,
            syn_backlog_limit=syn_backlog_limit,
            control_rate_limit=None if limit is None else rate_limit_for(packet_capacity),
        )
        self.controller.syn_backlog_limit = syn_backlog_limit
        self._record(self.controller_id, "control_plane_calibrated",
                     packet_capacity=packet_capacity, syn_backlog_limit=syn_backlog_limit)

    def inject_syn_flood(self, src: str, dst_port: int, rate: float, duration: float, start: Optional[float] = None) -> None:
        if rate < 0 or duration < 0:
            raise ScenarioError(f"flood rate and duration must be non-negative (rate={rate}, duration={duration})")
        if dst_port != self.config.openflow_port:
            raise ScenarioError(f"port {dst_port} is not the controller's OpenFlow port {self.config.openflow_port}")
        if not self.topology.has_node(src):
            raise SimulationError(f"unknown node '{src}'")
        start = self.now if start is None else start
        if rate == 0 or duration == 0:
            return
        flood = _Flood(src, float(rate), start, start + duration)
        self._floods.append(flood)
        self._schedule(start, "flood_start", functools.partial(
            self._record, self.controller_id, "syn_flood_start", src=src, port=dst_port, rate=rate, duration=duration))
        self._schedule(flood.end, "flood_end", functools.partial(
            self._record, self.controller_id, "syn_flood_end", src=src, syn_sent=round(rate * duration)))
        if not self._ticking:
            self._ticking = True
            first_tick = int(start * SYN_TICKS_PER_SECOND) + 1
            self._schedule(first_tick / SYN_TICKS_PER_SECOND, "syn_tick", self._syn_tick, first_tick)

    def _syn_tick(self, tick: int) -> None:
        t = tick / SYN_TICKS_PER_SECOND
        was_stalled = self.controller.stalled

        admitted = 0.0
        for flood in self._floods:
            # Overlap of the flood with this tick, counted in ticks so that
            # tick-aligned floods accumulate without rounding error.
            overlap = min(tick, flood.end * SYN_TICKS_PER_SECOND) - max(tick - 1, flood.start * SYN_TICKS_PER_SECOND)
            if overlap <= 0:
                continue
            arrivals = flood.rate * overlap / SYN_TICKS_PER_SECOND
            self.syn_sent += arrivals
            limit = self.config.control_rate_limit
            if limit is not None:
                arrivals = min(arrivals, limit * overlap / SYN_TICKS_PER_SECOND)
            admitted += arrivals
        self.syn_admitted += admitted
        drained = self.config.packet_capacity / SYN_TICKS_PER_SECOND
        self.controller.half_open = max(0.0, self.controller.half_open + admitted - drained)
        self.half_open_peak = max(self.half_open_peak, self.controller.half_open)

        stalled = self.controller.stalled
        if stalled and not was_stalled:
            self._record(self.controller_id, "controller_stalled", half_open=round(self.controller.half_open))
            logger.info(f"Controller stalled at t={self.now:.3f} (half_open={self.controller.half_open:.0f})")
        elif was_stalled and not stalled:
            self._record(self.controller_id, "controller_recovered", half_open=round(self.controller.half_open))
            self._drain_pending()

        active = any(f.end > t for f in self._floods)
        if active or self.controller.half_open > 0:
            self._schedule((tick + 1) / SYN_TICKS_PER_SECOND, "syn_tick", self._syn_tick, tick + 1)
        else:
            self._ticking = False
            self._record(self.controller_id, "syn_backlog_clear")


def new_sim(t: Topology, seed: int) -> Sim:
    return Sim(t, seed)


# ==============================================================================
# EXPORT FORMATS
# ==============================================================================

def export_trace(records) -> str:
    """One event per line: t=<seconds> <node> <event> <key=value ...>."""
    return "".join(f"{r}\n" for r in records)


def export_capture(capture: CaptureSet) -> str:
    lines = []
    for c in capture.packets:
        p = c.packet
        head = f"t={p.timestamp:.3f} {c.link} {c.kind or 'Opaque'} src={p.src} dst={p.dst} size={p.size}"
        if p.opaque:
            lines.append(head)
        else:
            body = " ".join(f"{k}={_format_value(v)}" for k, v in p.payload.items())
            lines.append(f"{head} {body}" if body else head)
    return "".join(f"{line}\n" for line in lines)
