import logging
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping, Optional, Sequence, Union

from attacks.scenarios import AttackKind, AttackOutcome, AttackScenario, resolve_data_path
from processors.errors import ScenarioError, SimulationError
from simulation.simnet import LoginResult, Sim
from simulation.topology import NodeKind

logger = logging.getLogger(__name__)


def read_wordlist(source: Union[str, Path, Sequence[str]]) -> list[tuple[str, str]]:
    """
    Dictionary entries as (username, secret) pairs. A file holds one
    'username:secret' per line; blank lines and '#' comments are skipped.
    """
    if isinstance(source, (str, Path)):
        with open(resolve_data_path(str(source)), "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    else:
        lines = list(source)

    entries = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ScenarioError(f"dictionary entry '{line}' is not in username:secret form")
        username, secret = line.split(":", 1)
        entries.append((username, secret))
    return entries


def _attacker(sim: Sim, params: Mapping[str, Any]) -> str:
    src = params.get("source")
    if src is None:
        attackers = sim.topology.nodes_of(NodeKind.ATTACKER)
        if not attackers:
            raise SimulationError("the topology has no attacker node")
        return attackers[0].id
    if not sim.topology.has_node(src):
        raise SimulationError(f"attacker node '{src}' is not in the topology")
    return src


def run_brute_force(sim: Sim, params: Mapping[str, Any], scenario: Optional[AttackScenario] = None) -> AttackOutcome:
    """
    Walks the dictionary against the controller login at a fixed attempt rate.

    Attempt i (1-based) is sent at start + i / rate, or immediately when a
    login delay has already pushed the clock past that point. The run stops
    at the first Success; otherwise the whole dictionary is spent, lockouts
    included.
    """
    src = _attacker(sim, params)
    entries = read_wordlist(params["dictionary"])
    rate = float(params["rate"])
    if not entries:
        raise ScenarioError("brute-force dictionary is empty")
    if rate <= 0:
        raise ScenarioError(f"attempt rate must be positive, got {rate}")

    start = sim.now
    trace_start = len(sim.trace)
    attempts = 0
    locked_out = 0
    found = None
    time_to_crack = None

    for position, (username, secret) in enumerate(entries, start=1):
        sim.run_until(max(sim.now, start + position / rate))
        attempts += 1
        result = sim.attempt_login(src, username, secret)
        if result == LoginResult.LOCKED_OUT:
            locked_out += 1
        elif result == LoginResult.SUCCESS:
            found = (username, secret)
            time_to_crack = round(sim.now - start, 6)
            break

    succeeded = found is not None
    if succeeded:
        logger.info(f"Brute force cracked '{found[0]}' after {attempts} attempt(s), {time_to_crack}s virtual")
    else:
        logger.info(f"Brute force exhausted {attempts} dictionary entries ({locked_out} locked out)")

    metrics = {
        "attempts": attempts,
        "time_to_crack": time_to_crack,
        "credential_found": found,
        "locked_out_attempts": locked_out,
        "rate": rate,
    }
    return AttackOutcome(
        scenario_id=scenario.id if scenario else "brute_force",
        kind=AttackKind.BRUTE_FORCE,
        target_tc=scenario.target_tc if scenario else "TC2",
        succeeded=succeeded,
        metrics=MappingProxyType(metrics),
        trace=tuple(sim.trace[trace_start:]),
    )
