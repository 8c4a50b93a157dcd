import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

import networkx as nx
import yaml

from processors import settings
from processors.errors import HardeningError, TopologyError, UnknownIdError
from processors.identifiers import sorted_ids
from processors.knowledge_base import Catalog, MitigationKind, Surface

logger = logging.getLogger(__name__)


# ==============================================================================
# CONFIGURATION AND STATUSES
# ==============================================================================

class NodeKind:
    CONTROLLER = "Controller"
    SWITCH = "Switch"
    HOST = "Host"
    ATTACKER = "Attacker"

    ALL = (CONTROLLER, SWITCH, HOST, ATTACKER)


class LinkKind:
    CONTROL = "Control"
    DATA = "Data"
    MANAGEMENT = "Management"

    ALL = (CONTROL, DATA, MANAGEMENT)


class DomainStatus:
    ACTIVE = "Active"
    DESTROYED = "Destroyed"


SURFACE_BY_KIND = {
    NodeKind.CONTROLLER: Surface.CONTROL_LAYER,
    NodeKind.SWITCH: Surface.DATA_LAYER,
    NodeKind.HOST: Surface.DATA_LAYER,
    NodeKind.ATTACKER: Surface.DATA_LAYER,
}

DEFAULT_USERNAME = "onos"
DEFAULT_SECRET = "rocks"
HARDENED_SECRET = "Vx9#tLq2!mRz7$pK"
DEFAULT_LOCKOUT_FAILURES = 5
DEFAULT_LOCKOUT_SECONDS = 300.0
HARDENED_LOGIN_DELAY = 1.0

# Specific mitigations the shipped catalog defines; used when no catalog is given.
KNOWN_SPECIFIC_MITIGATIONS = tuple(f"M{i}" for i in range(1, 19))
# Central solutions that stand in for the n/a mitigations of the shipped catalog.
DEFAULT_INAPPLICABLE = {"M5": ("CS2",), "M7": ("CS3",)}


# ==============================================================================
# DOMAIN TYPES
# ==============================================================================

@dataclass(frozen=True)
class Node:
    id: str
    kind: str

    @property
    def surface(self) -> str:
        return SURFACE_BY_KIND[self.kind]


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    kind: str = LinkKind.DATA
    encrypted: bool = False

    @property
    def id(self) -> str:
        return f"{self.a}-{self.b}"

    @property
    def endpoints(self) -> frozenset[str]:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class VplsDomain:
    id: str
    members: frozenset[str]
    status: str = DomainStatus.ACTIVE

    @property
    def active(self) -> bool:
        return self.status == DomainStatus.ACTIVE


@dataclass(frozen=True)
class LoginLockout:
    max_failures: int
    lockout_duration: float


@dataclass(frozen=True)
class ControllerConfig:
    credentials: frozenset[tuple[str, str]] = frozenset({(DEFAULT_USERNAME, DEFAULT_SECRET)})
    default_credentials: bool = True
    openflow_port: int = 6653
    channel_tls: bool = False
    login_lockout: Optional[LoginLockout] = None
    # Base delay added per consecutive failed login; grows linearly with the failure count.
    login_delay: float = 0.0
    packet_capacity: int = 100_000
    syn_backlog_limit: int = 2_400_000
    control_rate_limit: Optional[int] = None
    pending_queue_limit: int = 1024
    keepalive_interval: float = 1.0
    keepalive_miss_limit: int = 2
    flow_ttl: float = 30.0

    def __post_init__(self):
        if self.packet_capacity <= 0:
            raise TopologyError(f"packet_capacity must be positive, got {self.packet_capacity}")
        if not 1 <= self.openflow_port <= 65535:
            raise TopologyError(f"openflow_port {self.openflow_port} is outside 1-65535")
        if self.syn_backlog_limit < 0 or self.pending_queue_limit <= 0:
            raise TopologyError("syn_backlog_limit and pending_queue_limit must be non-negative / positive")
        if self.keepalive_interval <= 0 or self.keepalive_miss_limit < 1:
            raise TopologyError("keepalive_interval must be positive and keepalive_miss_limit at least 1")


@dataclass(frozen=True)
class Topology:
    name: str
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    vpls_domains: tuple[VplsDomain, ...]
    controller_config: ControllerConfig = field(default_factory=ControllerConfig)
    # Membership reconfigure_vpls restores.
    vpls_baseline: tuple[VplsDomain, ...] = ()
    hardening: tuple[str, ...] = ()
    annotations: tuple[str, ...] = ()

    # --- Lookups ---
    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise UnknownIdError(node_id, "node")

    def has_node(self, node_id: str) -> bool:
        return any(n.id == node_id for n in self.nodes)

    def nodes_of(self, kind: str) -> list[Node]:
        return [n for n in self.nodes if n.kind == kind]

    @property
    def controller(self) -> Node:
        controllers = self.nodes_of(NodeKind.CONTROLLER)
        if len(controllers) != 1:
            raise TopologyError(f"expected exactly one controller, found {len(controllers)}")
        return controllers[0]

    @property
    def hosts(self) -> list[str]:
        return sorted_ids(n.id for n in self.nodes_of(NodeKind.HOST))

    @property
    def switches(self) -> list[str]:
        return sorted_ids(n.id for n in self.nodes_of(NodeKind.SWITCH))

    def link_between(self, a: str, b: str) -> Optional[Link]:
        wanted = frozenset((a, b))
        for link in self.links:
            if link.endpoints == wanted:
                return link
        return None

    def find_link(self, link_id: str) -> Link:
        for link in self.links:
            if link.id == link_id or f"{link.b}-{link.a}" == link_id:
                return link
        raise UnknownIdError(link_id, "link")

    def domain(self, domain_id: str) -> VplsDomain:
        for d in self.vpls_domains:
            if d.id == domain_id:
                return d
        raise UnknownIdError(domain_id, "VPLS domain")

    def domains_of(self, host_id: str) -> list[VplsDomain]:
        return [d for d in self.vpls_domains if host_id in d.members]

    def switch_of(self, host_id: str) -> str:
        for link in self.links:
            if host_id in link.endpoints:
                other = link.b if link.a == host_id else link.a
                if self.has_node(other) and self.node(other).kind == NodeKind.SWITCH:
                    return other
        raise TopologyError(f"host '{host_id}' is not attached to a switch")

    # --- Graph views ---
    def graph(self) -> nx.Graph:
        g = nx.Graph()
        for n in self.nodes:
            g.add_node(n.id, kind=n.kind)
        for link in self.links:
            g.add_edge(link.a, link.b, kind=link.kind, encrypted=link.encrypted)
        return g

    def data_plane(self) -> nx.Graph:
        """Hosts and switches joined by data links only."""
        g = nx.Graph()
        for n in self.nodes:
            if n.kind in (NodeKind.HOST, NodeKind.SWITCH):
                g.add_node(n.id)
        for link in self.links:
            if link.kind == LinkKind.DATA and link.a in g and link.b in g:
                g.add_edge(link.a, link.b)
        return g


# ==============================================================================
# BUILT-IN TESTBED
# ==============================================================================

def default_testbed() -> Topology:
    """
    One controller with three switches, three hosts per switch, an attacker
    on the management network and three VPLS domains. Each domain takes one
    host from every switch, so intra-domain traffic always crosses switches.
    """
    nodes = [Node("c0", NodeKind.CONTROLLER)]
    nodes += [Node(f"s{i}", NodeKind.SWITCH) for i in range(1, 4)]
    nodes += [Node(f"h{i}", NodeKind.HOST) for i in range(1, 10)]
    nodes.append(Node("attacker", NodeKind.ATTACKER))

    links = [Link("c0", f"s{i}", LinkKind.CONTROL) for i in range(1, 4)]
    links += [Link("s1", "s2"), Link("s2", "s3")]
    for s in range(1, 4):
        for h in range(3 * s - 2, 3 * s + 1):
            links.append(Link(f"h{h}", f"s{s}"))
    links.append(Link("attacker", "c0", LinkKind.MANAGEMENT))

    domains = tuple(
        VplsDomain(f"d{d}", frozenset(f"h{d + 3 * s}" for s in range(3))) for d in range(1, 4)
    )
    return Topology(
        name="default-testbed",
        nodes=tuple(nodes),
        links=tuple(links),
        vpls_domains=domains,
        controller_config=ControllerConfig(),
        vpls_baseline=domains,
    )


# ==============================================================================
# VALIDATION
# ==============================================================================

def validate_topology(t: Topology) -> list[str]:
    """Structural problems with the topology; an empty list means valid."""
    problems = []
    ids = [n.id for n in t.nodes]
    duplicates = sorted({i for i in ids if ids.count(i) > 1})
    if duplicates:
        problems.append(f"duplicate node ids: {', '.join(duplicates)}")
    for n in t.nodes:
        if n.kind not in NodeKind.ALL:
            problems.append(f"node '{n.id}' has unknown kind '{n.kind}'")

    controllers = t.nodes_of(NodeKind.CONTROLLER)
    if len(controllers) != 1:
        problems.append(f"expected exactly one controller, found {len(controllers)}")

    known = set(ids)
    for link in t.links:
        if link.a not in known or link.b not in known:
            problems.append(f"link '{link.id}' references an unknown node")
        if link.kind not in LinkKind.ALL:
            problems.append(f"link '{link.id}' has unknown kind '{link.kind}'")

    g = t.graph()
    if g.number_of_nodes() and not nx.is_connected(g):
        parts = [sorted_ids(c) for c in nx.connected_components(g)]
        problems.append(f"topology is not connected: {parts}")

    hosts = set(t.hosts)
    seen: Dict[str, str] = {}
    for d in t.vpls_domains:
        for member in sorted_ids(d.members):
            if member not in hosts:
                problems.append(f"VPLS domain '{d.id}' lists '{member}', which is not a host")
            elif member in seen:
                problems.append(f"host '{member}' belongs to both '{seen[member]}' and '{d.id}'")
            else:
                seen[member] = d.id
        if d.status not in (DomainStatus.ACTIVE, DomainStatus.DESTROYED):
            problems.append(f"VPLS domain '{d.id}' has unknown status '{d.status}'")
    return problems


# ==============================================================================
# QUERIES AND TRANSFORMATIONS
# ==============================================================================

def same_vpls(t: Topology, a: str, b: str) -> bool:
    for host in (a, b):
        if host not in t.hosts:
            raise UnknownIdError(host, "host")
    return any(d.active and a in d.members and b in d.members for d in t.vpls_domains)


def reconfigure_vpls(t: Topology) -> Topology:
    baseline = t.vpls_baseline or t.vpls_domains
    restored = tuple(replace(d, status=DomainStatus.ACTIVE) for d in baseline)
    if restored == t.vpls_domains:
        return t
    logger.info(f"Reconfiguring VPLS on '{t.name}': {len(restored)} domain(s) restored")
    return replace(t, vpls_domains=restored)


# --- Hardening ---

def _harden_credentials(t: Topology, with_delay: bool) -> Topology:
    config = replace(
        t.controller_config,
        credentials=frozenset({(DEFAULT_USERNAME, HARDENED_SECRET)}),
        default_credentials=False,
        login_lockout=LoginLockout(DEFAULT_LOCKOUT_FAILURES, DEFAULT_LOCKOUT_SECONDS),
        login_delay=HARDENED_LOGIN_DELAY if with_delay else t.controller_config.login_delay,
    )
    return replace(t, controller_config=config)


def _enable_tls(t: Topology) -> Topology:
    links = tuple(replace(l, encrypted=True) if l.kind == LinkKind.CONTROL else l for l in t.links)
    return replace(t, links=links, controller_config=replace(t.controller_config, channel_tls=True))


def rate_limit_for(packet_capacity: int) -> int:
    """Control-port arrival cap M8 installs: half the controller's packet capacity."""
    return packet_capacity // 2


def _rate_limit(t: Topology) -> Topology:
    limit = rate_limit_for(t.controller_config.packet_capacity)
    return replace(t, controller_config=replace(t.controller_config, control_rate_limit=limit))


HARDENING_EFFECTS = {
    "M2": lambda t: _harden_credentials(t, with_delay=False),
    "M4": lambda t: _harden_credentials(t, with_delay=False),
    "M6": _enable_tls,
    "M8": _rate_limit,
    "M13": lambda t: _harden_credentials(t, with_delay=True),
}


def _inapplicable_alternatives(mitigation_id: str, catalog: Optional[Catalog]) -> Optional[tuple[str, ...]]:
    """Central solutions to suggest when the mitigation is n/a, or None when it applies."""
    if catalog is None:
        return DEFAULT_INAPPLICABLE.get(mitigation_id)
    record = catalog.mitigations[mitigation_id]
    if record.applicable:
        return None
    threats = [tid for tid, mids in catalog.correlation.threat_to_specific.items() if mitigation_id in mids]
    alternatives = []
    for tid in threats:
        for cid in catalog.correlation.threat_to_central.get(tid, ()):
            if cid not in alternatives:
                alternatives.append(cid)
    return tuple(alternatives)


def apply_hardening(t: Topology, mitigation_id: str, catalog: Optional[Catalog] = None) -> Topology:
    """
    Returns a copy of the topology with the mitigation's toggles set.

    M2/M4 replace the default credentials and enable lockout, M13 also adds
    an increasing per-failure login delay, M6 turns on TLS for every control
    channel, M8 rate-limits control-port arrivals to half the controller's
    packet capacity. Any other applicable mitigation is recorded as an
    annotation only.
    """
    known = set(catalog.mitigations) if catalog is not None else set(KNOWN_SPECIFIC_MITIGATIONS)
    if mitigation_id not in known:
        raise HardeningError(f"Unknown mitigation id '{mitigation_id}'; nothing to apply.")

    alternatives = _inapplicable_alternatives(mitigation_id, catalog)
    if alternatives is not None:
        names = alternatives
        if catalog is not None:
            names = tuple(f"{cid} ({catalog.mitigations[cid].name})" for cid in alternatives)
        raise HardeningError(
            f"Mitigation {mitigation_id} has no preventive control; use a central solution instead: "
            f"{', '.join(names) or 'none recorded'}",
            alternatives=alternatives,
        )

    if mitigation_id in t.hardening:
        return t

    effect = HARDENING_EFFECTS.get(mitigation_id)
    hardened = effect(t) if effect else t
    annotations = t.annotations
    if effect is None:
        kind = ""
        if catalog is not None and catalog.mitigations[mitigation_id].kind == MitigationKind.CENTRAL:
            kind = " (central solution)"
        annotations = annotations + (f"{mitigation_id}{kind} recorded; no simulated effect",)
    logger.info(f"Applied hardening {mitigation_id} to '{t.name}'" + ("" if effect else " as annotation"))
    return replace(hardened, hardening=t.hardening + (mitigation_id,), annotations=annotations)


def apply_hardening_set(t: Topology, mitigation_ids, catalog: Optional[Catalog] = None) -> Topology:
    for mid in mitigation_ids:
        t = apply_hardening(t, mid, catalog)
    return t


# ==============================================================================
# FILE FORMAT
# ==============================================================================

def topology_to_document(t: Topology) -> Dict[str, Any]:
    c = t.controller_config
    controller: Dict[str, Any] = {
        "credentials": [{"username": u, "secret": s} for u, s in sorted(c.credentials)],
        "default_credentials": c.default_credentials,
        "openflow_port": c.openflow_port,
        "channel_tls": c.channel_tls,
        "login_lockout": (
            {"max_failures": c.login_lockout.max_failures, "lockout_duration": c.login_lockout.lockout_duration}
            if c.login_lockout else None
        ),
        "login_delay": c.login_delay,
        "packet_capacity": c.packet_capacity,
        "syn_backlog_limit": c.syn_backlog_limit,
        "control_rate_limit": c.control_rate_limit,
        "pending_queue_limit": c.pending_queue_limit,
        "keepalive_interval": c.keepalive_interval,
        "keepalive_miss_limit": c.keepalive_miss_limit,
        "flow_ttl": c.flow_ttl,
    }
    return {
        "schema_version": settings.SCHEMA_VERSION,
        "name": t.name,
        "controller": controller,
        "nodes": [{"id": n.id, "kind": n.kind} for n in t.nodes],
        "links": [{"a": l.a, "b": l.b, "kind": l.kind, "encrypted": l.encrypted} for l in t.links],
        "vpls_domains": [
            {"id": d.id, "members": sorted_ids(d.members), "status": d.status} for d in t.vpls_domains
        ],
        "vpls_baseline": [{"id": d.id, "members": sorted_ids(d.members)} for d in t.vpls_baseline],
        "hardening": list(t.hardening),
        "annotations": list(t.annotations),
    }


def topology_from_document(document: Any) -> Topology:
    if not isinstance(document, dict) or not document:
        raise TopologyError("topology document is empty or not a mapping")
    if document.get("schema_version") != settings.SCHEMA_VERSION:
        raise TopologyError(f"unsupported topology schema_version {document.get('schema_version')!r}")
    try:
        raw = dict(document.get("controller") or {})
        lockout = raw.pop("login_lockout", None)
        credentials = raw.pop("credentials", None)
        config_args = dict(raw)
        if credentials is not None:
            config_args["credentials"] = frozenset((c["username"], c["secret"]) for c in credentials)
        if lockout:
            config_args["login_lockout"] = LoginLockout(int(lockout["max_failures"]), float(lockout["lockout_duration"]))
        config = ControllerConfig(**config_args)

        nodes = tuple(Node(n["id"], n["kind"]) for n in document["nodes"])
        links = tuple(
            Link(l["a"], l["b"], l.get("kind", LinkKind.DATA), bool(l.get("encrypted", False)))
            for l in document["links"]
        )
        domains = tuple(
            VplsDomain(d["id"], frozenset(d["members"]), d.get("status", DomainStatus.ACTIVE))
            for d in document.get("vpls_domains", [])
        )
        baseline = tuple(
            VplsDomain(d["id"], frozenset(d["members"])) for d in document.get("vpls_baseline", [])
        ) or tuple(replace(d, status=DomainStatus.ACTIVE) for d in domains)
    except (KeyError, TypeError) as e:
        raise TopologyError(f"malformed topology document: {e}")

    topology = Topology(
        name=str(document.get("name", "topology")),
        nodes=nodes,
        links=links,
        vpls_domains=domains,
        controller_config=config,
        vpls_baseline=baseline,
        hardening=tuple(document.get("hardening", [])),
        annotations=tuple(document.get("annotations", [])),
    )
    problems = validate_topology(topology)
    if problems:
        raise TopologyError("invalid topology: " + "; ".join(problems))
    return topology


def load_topology(path: Union[str, Path]) -> Topology:
    with open(path, "r", encoding="utf-8") as f:
        document = yaml.safe_load(f)
    logger.info(f"Loading topology from {path}")
    return topology_from_document(document)


def save_topology(t: Topology, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(topology_to_document(t), f, sort_keys=False)
    logger.info(f"Topology '{t.name}' saved to {path}")


def resolve_topology(name_or_path: Optional[str] = None) -> Topology:
    """'default' (or nothing) is the built-in testbed; anything else is read as a file."""
    if not name_or_path or name_or_path == "default":
        return default_testbed()
    return load_topology(name_or_path)
