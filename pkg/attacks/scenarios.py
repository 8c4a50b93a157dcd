import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Dict, Mapping, Optional, Union

import yaml

from processors import settings
from processors.cvss_engine import RankedList, Severity
from processors.errors import ScenarioError
from processors.knowledge_base import Catalog

logger = logging.getLogger(__name__)


# ==============================================================================
# CONFIGURATION AND STATUSES
# ==============================================================================

class AttackKind:
    BRUTE_FORCE = "BruteForce"
    MITM = "Mitm"
    DOS_SYN_FLOOD = "DosSynFlood"

    ALL = (BRUTE_FORCE, MITM, DOS_SYN_FLOOD)


class ObservedImpact:
    NONE = "None"
    DEGRADED = "Degraded"
    SERVICE_LOSS = "ServiceLoss"
    FULL_COMPROMISE = "FullCompromise"

    ORDER = (NONE, DEGRADED, SERVICE_LOSS, FULL_COMPROMISE)

    @classmethod
    def level(cls, impact: str) -> int:
        return cls.ORDER.index(impact)


# Parameters every scenario file of a kind must define.
REQUIRED_PARAMETERS = {
    AttackKind.BRUTE_FORCE: ("dictionary", "rate"),
    AttackKind.MITM: ("taps", "window"),
    AttackKind.DOS_SYN_FLOOD: ("rate", "duration", "port", "packet_capacity", "syn_backlog_limit"),
}

SCENARIO_FILES = ("brute_force.yaml", "brute_force_slow.yaml", "mitm.yaml", "dos.yaml")


# ==============================================================================
# DOMAIN TYPES
# ==============================================================================

@dataclass(frozen=True)
class AttackScenario:
    id: str
    kind: str
    target_tc: str
    parameters: Mapping[str, Any]
    description: str = ""
    # Secondary profiles (e.g. the slow brute-force tool) are never picked by select_scenarios.
    primary: bool = True

    def param(self, name: str, default: Any = None) -> Any:
        return self.parameters.get(name, default)


@dataclass(frozen=True)
class AttackOutcome:
    scenario_id: str
    kind: str
    target_tc: str
    succeeded: bool
    metrics: Mapping[str, Any]
    trace: tuple = field(default=(), compare=False)

    def metric(self, name: str, default: Any = None) -> Any:
        return self.metrics.get(name, default)


@dataclass(frozen=True)
class Verdict:
    tc_id: str
    expectation: str
    observed_impact: str
    consistent: bool
    notes: str = ""


# ==============================================================================
# SCENARIO FILES
# ==============================================================================

def scenario_from_document(document: Any, source: str = "<in-memory>") -> AttackScenario:
    if not isinstance(document, Mapping) or not document:
        raise ScenarioError(f"scenario document {source} is empty or not a mapping")
    if document.get("schema_version") != settings.SCHEMA_VERSION:
        raise ScenarioError(f"scenario {source}: unsupported schema_version {document.get('schema_version')!r}")
    for key in ("id", "kind", "target_tc"):
        if not document.get(key):
            raise ScenarioError(f"scenario {source}: missing '{key}'")
    kind = document["kind"]
    if kind not in AttackKind.ALL:
        raise ScenarioError(f"scenario {document['id']}: unknown kind '{kind}'")
    parameters = dict(document.get("parameters") or {})
    missing = [p for p in REQUIRED_PARAMETERS[kind] if p not in parameters]
    if missing:
        raise ScenarioError(f"scenario {document['id']}: missing parameters {', '.join(missing)}")
    return AttackScenario(
        id=str(document["id"]),
        kind=kind,
        target_tc=str(document["target_tc"]),
        parameters=MappingProxyType(parameters),
        description=str(document.get("description", "")),
        primary=bool(document.get("primary", True)),
    )


def load_scenario(path: Union[str, Path]) -> AttackScenario:
    with open(path, "r", encoding="utf-8") as f:
        return scenario_from_document(yaml.safe_load(f), str(path))


def load_scenarios(directory: Optional[Union[str, Path]] = None) -> list[AttackScenario]:
    """The shipped scenario library, in a stable order."""
    directory = Path(directory or settings.SCENARIO_DIR)
    names = [n for n in SCENARIO_FILES if (directory / n).exists()]
    names += sorted(p.name for p in directory.glob("*.yaml") if p.name not in SCENARIO_FILES)
    scenarios = [load_scenario(directory / n) for n in names]
    logger.info(f"Loaded {len(scenarios)} attack scenario(s) from {directory}")
    return scenarios


def resolve_data_path(value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else settings.DATA_DIR / path


# ==============================================================================
# SELECTION
# ==============================================================================

def select_scenarios(ranked: RankedList, k: int, library: Optional[list[AttackScenario]] = None) -> list[AttackScenario]:
    """
    Scenarios for the k highest ranks, one per rank, highest rank first.
    Raises ScenarioError listing every rank among the top k without a scenario.
    """
    if k < 1:
        raise ScenarioError(f"k must be at least 1, got {k}")
    library = load_scenarios() if library is None else library
    ranks = ranked.distinct_ranks()
    wanted = ranks[:k]

    selected = []
    unmapped = []
    for rank in wanted:
        tc_ids = {tc.id for tc in ranked.categories_at(rank)}
        candidates = [s for s in library if s.primary and s.target_tc in tc_ids]
        if candidates:
            selected.append(candidates[0])
        else:
            unmapped.append(rank)
    if k > len(ranks):
        unmapped += list(range(len(ranks) + 1, k + 1))
    if unmapped:
        raise ScenarioError(
            f"No attack scenario is mapped to rank(s) {', '.join(str(r) for r in unmapped)}",
            unmapped_ranks=tuple(unmapped),
        )
    return selected


# ==============================================================================
# VERDICTS
# ==============================================================================

def classify_impact(outcome: AttackOutcome) -> str:
    """
    FullCompromise: authentication bypass on the controller.
    ServiceLoss: at least one VPLS domain destroyed or probes that never recover.
    Degraded: plaintext exposure without control.
    """
    m = outcome.metrics
    if outcome.kind == AttackKind.BRUTE_FORCE:
        return ObservedImpact.FULL_COMPROMISE if outcome.succeeded else ObservedImpact.NONE
    if outcome.kind == AttackKind.DOS_SYN_FLOOD:
        sustained = m.get("time_to_disruption") is not None and not m.get("self_recovered", False)
        if m.get("domains_destroyed", 0) > 0 or sustained:
            return ObservedImpact.SERVICE_LOSS
        return ObservedImpact.NONE
    if m.get("credentials_exposed", 0) > 0 or m.get("nodes_exposed", 0) > 0 or m.get("plaintext_packets", 0) > 0:
        return ObservedImpact.DEGRADED
    return ObservedImpact.NONE


def _consistent(expectation: str, impact: str, outcome: AttackOutcome) -> bool:
    level = ObservedImpact.level(impact)
    if expectation in (Severity.CRITICAL, Severity.HIGH):
        with_credentials = outcome.metric("credentials_exposed", 0) > 0
        return level > ObservedImpact.level(ObservedImpact.DEGRADED) or (impact == ObservedImpact.DEGRADED and with_credentials)
    if expectation == Severity.MEDIUM:
        return level >= ObservedImpact.level(ObservedImpact.DEGRADED)
    return True


def verdict(outcome: AttackOutcome, catalog: Catalog) -> Verdict:
    tc = catalog.category(outcome.target_tc)
    impact = classify_impact(outcome)
    consistent = _consistent(tc.severity, impact, outcome)
    if consistent:
        notes = f"{impact} observed; matches the {tc.severity} rating of {tc.id}"
    else:
        notes = f"{impact} observed; below what a {tc.severity} rating of {tc.id} expects (check applied hardening)"
    return Verdict(tc_id=tc.id, expectation=tc.severity, observed_impact=impact, consistent=consistent, notes=notes)
