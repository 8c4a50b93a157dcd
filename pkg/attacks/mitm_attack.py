import functools
import logging
from types import MappingProxyType
from typing import Any, Mapping, Optional, Sequence

from attacks.scenarios import AttackKind, AttackOutcome, AttackScenario
from processors.errors import SimulationError
from processors.identifiers import sorted_ids
from simulation.simnet import CaptureSet, PacketKind, Sim
from simulation.topology import LinkKind, NodeKind

logger = logging.getLogger(__name__)


SERVICE_BY_KIND = {
    PacketKind.ICMP: "ICMP",
    PacketKind.TELNET_DATA: "Telnet",
    PacketKind.LOGIN_ATTEMPT: "Telnet",
    PacketKind.LOGIN_RESULT: "Telnet",
    PacketKind.HELLO: "OpenFlow",
    PacketKind.PACKET_IN: "OpenFlow",
    PacketKind.FLOW_MOD: "OpenFlow",
    PacketKind.TCP_SYN: "OpenFlow",
    PacketKind.TCP_SYN_ACK: "OpenFlow",
}

DEFAULT_TELNET = {"src": "h1", "dst": "h4", "username": "admin", "secret": "admin"}


def ping_pairs(sim: Sim) -> list[tuple[str, str]]:
    """A ring of pings inside every VPLS domain: each member pings the next one."""
    pairs = []
    for domain_id in sorted(sim.domain_members):
        members = sorted_ids(sim.domain_members[domain_id])
        if len(members) < 2:
            continue
        pairs += [(members[i], members[(i + 1) % len(members)]) for i in range(len(members))]
    return pairs


def _schedule_background(sim: Sim, window: float, pairs: Sequence[tuple[str, str]], telnet: Optional[Mapping[str, str]]) -> None:
    # Content is fixed; only the timing jitter comes from the seeded RNG.
    start = sim.now
    rounds = int(window)
    for r in range(rounds):
        for j, (src, dst) in enumerate(pairs):
            at = start + r + 0.1 + 0.02 * j + sim.rng.uniform(0, 0.01)
            sim.schedule_call(at, "mitm_ping", functools.partial(sim.ping, src, dst))
    if telnet:
        at = start + window / 2 + sim.rng.uniform(0, 0.05)
        sim.schedule_call(at, "mitm_telnet", functools.partial(
            sim.telnet_session, telnet["src"], telnet["dst"], telnet["username"], telnet["secret"]))


def _node_ids_in(packet, known: set[str]) -> set[str]:
    found = {packet.src, packet.dst} & known
    for value in packet.payload.values():
        if isinstance(value, str) and value in known:
            found.add(value)
    return found


def analyze_captures(sim: Sim, captures: Sequence[CaptureSet]) -> dict[str, Any]:
    """Exposure counts from what the taps read in clear text."""
    known = {n.id for n in sim.topology.nodes if n.kind != NodeKind.ATTACKER}
    control_links = {l.id for l in sim.topology.links if l.kind == LinkKind.CONTROL}

    nodes: set[str] = set()
    services: set[str] = set()
    credentials: set[tuple[str, str]] = set()
    plaintext = 0
    control_plaintext = 0
    for capture in captures:
        for packet in capture.plaintext:
            plaintext += 1
            if capture.link in control_links:
                control_plaintext += 1
            nodes |= _node_ids_in(packet, known)
            services.add(SERVICE_BY_KIND.get(packet.kind, packet.kind))
            if "username" in packet.payload and "secret" in packet.payload:
                credentials.add((packet.payload["username"], packet.payload["secret"]))

    return {
        "nodes_exposed": len(nodes),
        "services_exposed": len(services),
        "credentials_exposed": len(credentials),
        "plaintext_packets": plaintext,
        "control_plaintext_packets": control_plaintext,
        "exposed_nodes": tuple(sorted_ids(nodes)),
        "exposed_services": tuple(sorted(services)),
        "exposed_credentials": tuple(sorted(credentials)),
    }


def run_mitm(sim: Sim, params: Mapping[str, Any], scenario: Optional[AttackScenario] = None) -> AttackOutcome:
    """
    Taps the given links, drives the background traffic script for the
    observation window and reports what leaked.

    params: taps (link ids), window (virtual seconds), and optionally
    pings (list of [src, dst], default: a ring per VPLS domain) and telnet
    (src/dst/username/secret, or null for none).
    """
    window = float(params["window"])
    if window <= 0:
        raise SimulationError(f"observation window must be positive, got {window}")
    taps = [sim.tap_link(link_id) for link_id in params["taps"]]

    pairs = params.get("pings")
    pairs = ping_pairs(sim) if pairs is None else [tuple(p) for p in pairs]
    telnet = params.get("telnet", DEFAULT_TELNET)

    trace_start = len(sim.trace)
    _schedule_background(sim, window, pairs, telnet)
    sim.run_for(window)
    captures = [sim.close_tap(tap) for tap in taps]

    metrics = analyze_captures(sim, captures)
    metrics["window"] = window
    metrics["taps"] = tuple(t.link for t in taps)
    succeeded = metrics["credentials_exposed"] > 0 or metrics["nodes_exposed"] > 0
    logger.info(
        f"MITM over {len(taps)} tap(s): {metrics['nodes_exposed']} node(s), "
        f"{metrics['services_exposed']} service(s), {metrics['credentials_exposed']} credential(s) exposed"
    )
    return AttackOutcome(
        scenario_id=scenario.id if scenario else "mitm",
        kind=AttackKind.MITM,
        target_tc=scenario.target_tc if scenario else "TC3",
        succeeded=succeeded,
        metrics=MappingProxyType(metrics),
        trace=tuple(sim.trace[trace_start:]),
    )
