import logging
from types import MappingProxyType
from typing import Any, Mapping, Optional

from attacks.scenarios import AttackKind, AttackOutcome, AttackScenario
from processors.errors import ScenarioError
from processors.identifiers import sorted_ids
from simulation.simnet import Sim
from simulation.topology import NodeKind

logger = logging.getLogger(__name__)


DEFAULT_PROBE_INTERVAL = 1.0
DEFAULT_RECOVERY_WINDOW = 60.0
DEFAULT_FLOOD_DELAY = 2.0

# Controller calibration every flood scenario file must carry.
CALIBRATION_PARAMETERS = ("packet_capacity", "syn_backlog_limit")


def probe_pairs(sim: Sim) -> list[tuple[str, str]]:
    """One probe pair per VPLS domain: its first member pings its second."""
    pairs = []
    for domain_id in sorted(sim.domain_members):
        members = sorted_ids(sim.domain_members[domain_id])
        if len(members) >= 2:
            pairs.append((members[0], members[1]))
    return pairs


def _first_event(trace, event: str) -> Optional[float]:
    for record in trace:
        if record.event == event:
            return record.time
    return None


def run_dos(sim: Sim, params: Mapping[str, Any], scenario: Optional[AttackScenario] = None) -> AttackOutcome:
    """
    SYN flood on the controller's OpenFlow port while every VPLS domain is
    probed once per probe interval.

    The controller's packet_capacity and syn_backlog_limit come from the
    scenario parameters and are applied to the simulator before the flood.
    time_to_disruption is measured from the flood start to the first failed
    probe, so it is quantized to the probe cadence; destroyed_at is the
    unquantized moment the keepalive-miss limit tore the first domain down.
    Probing continues for the recovery window after the flood ends; the run
    never calls reconfigure_vpls, so any later successful probe means the
    network recovered on its own.
    """
    missing = [p for p in CALIBRATION_PARAMETERS if p not in params]
    if missing:
        raise ScenarioError(f"SYN flood scenario is missing calibration parameters: {', '.join(missing)}")
    rate = float(params["rate"])
    duration = float(params["duration"])
    port = int(params["port"])
    interval = float(params.get("probe_interval", DEFAULT_PROBE_INTERVAL))
    recovery_window = float(params.get("recovery_window", DEFAULT_RECOVERY_WINDOW))
    delay = float(params.get("flood_delay", DEFAULT_FLOOD_DELAY))

    src = params.get("source")
    if src is None:
        attackers = sim.topology.nodes_of(NodeKind.ATTACKER)
        src = attackers[0].id if attackers else sim.topology.hosts[0]

    start = sim.now
    flood_start = start + delay
    trace_start = len(sim.trace)
    sim.calibrate_control_plane(int(params["packet_capacity"]), int(params["syn_backlog_limit"]))
    sim.inject_syn_flood(src, port, rate, duration, start=flood_start)

    pairs = probe_pairs(sim)
    end = flood_start + duration + recovery_window
    probes = int(round((end - start) / interval))
    for k in range(1, probes + 1):
        for a, b in pairs:
            sim.schedule_ping(a, b, start + k * interval)
    probe_start = len(sim.probe_log)
    sim.run_until(end)

    results = sim.probe_log[probe_start:]
    failed_at = [t for t, _, _, r in results if not r.delivered and t >= flood_start]
    first_failure = failed_at[0] if failed_at else None
    recovered = first_failure is not None and any(
        r.delivered for t, _, _, r in results if t > first_failure
    )

    trace = sim.trace[trace_start:]
    stalled_at = _first_event(trace, "controller_stalled")
    destroyed_at = _first_event(trace, "vpls_destroyed")
    metrics = {
        "syn_sent": int(round(sim.syn_sent)),
        "time_to_disruption": None if first_failure is None else round(first_failure - flood_start, 6),
        "domains_destroyed": len(sim.destroyed_domains()),
        "self_recovered": recovered,
        "stall_time": None if stalled_at is None else round(stalled_at - flood_start, 6),
        "destroyed_at": None if destroyed_at is None else round(destroyed_at - flood_start, 6),
        "half_open_peak": int(round(sim.half_open_peak)),
        "probes_sent": len(results),
        "probes_failed": len(failed_at),
    }
    succeeded = metrics["time_to_disruption"] is not None
    logger.info(
        f"SYN flood {rate:.0f}/s for {duration:.0f}s: disruption after {metrics['time_to_disruption']}s, "
        f"{metrics['domains_destroyed']} domain(s) destroyed, self_recovered={recovered}"
    )
    return AttackOutcome(
        scenario_id=scenario.id if scenario else "dos",
        kind=AttackKind.DOS_SYN_FLOOD,
        target_tc=scenario.target_tc if scenario else "TC4",
        succeeded=succeeded,
        metrics=MappingProxyType(metrics),
        trace=tuple(trace),
    )
