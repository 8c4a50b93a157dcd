"""
The four assessment stages and the report that chains them.

Stage 1 lists the catalog threats for every surface the topology exposes,
Stage 2 scores and ranks the threat categories those threats belong to,
Stage 3 simulates the attack scenarios mapped to the top ranks, and
Stage 4 builds the mitigation plan. Each stage only consumes the output of
the stages before it.
"""
import logging
from dataclasses import dataclass, field
from datetime import datetime
from decimal import Decimal
from pathlib import Path
from types import MappingProxyType
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Union

import yaml

from attacks.attack_engine import run_scenarios
from attacks.scenarios import AttackOutcome, AttackScenario, Verdict, select_scenarios, verdict
from processors import settings
from processors.cvss_engine import RankedList, impact_direction, parse_vector, rank_categories, vector_string
from processors.errors import CatalogSchemaError, ScenarioError
from processors.identifiers import sorted_ids
from processors.knowledge_base import (
    Catalog,
    MitigationKind,
    MitigationPlanEntry,
    MitigationRecord,
    Surface,
    ThreatCategory,
    load_default_catalog,
    mitigations_for,
    stride_summary,
)
from simulation.topology import LinkKind, NodeKind, Topology, apply_hardening_set

logger = logging.getLogger(__name__)


# ==============================================================================
# DOMAIN TYPES
# ==============================================================================

@dataclass(frozen=True)
class ThreatFinding:
    surface: str
    threat_id: str
    vulnerability_ids: tuple[str, ...]


@dataclass(frozen=True)
class Stage1Findings:
    instances: tuple[ThreatFinding, ...]
    root_summary: Mapping[str, tuple[str, ...]]
    stride: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def threat_ids(self) -> list[str]:
        return sorted_ids({f.threat_id for f in self.instances})

    @property
    def surfaces(self) -> list[str]:
        present = {f.surface for f in self.instances}
        return [s for s in Surface.ALL if s in present]

    def threats_on(self, surface: str) -> list[str]:
        return [f.threat_id for f in self.instances if f.surface == surface]

    def vulnerabilities_of(self, threat_id: str) -> tuple[str, ...]:
        for f in self.instances:
            if f.threat_id == threat_id:
                return f.vulnerability_ids
        return ()


@dataclass(frozen=True)
class Stage2Ranking:
    ranked: RankedList
    directions: Mapping[str, str]


@dataclass(frozen=True)
class Stage3Result:
    scenario: AttackScenario
    outcome: AttackOutcome
    verdict: Verdict


@dataclass(frozen=True)
class MitigationPlan:
    entries: tuple[MitigationPlanEntry, ...]
    central_required: bool

    def entry(self, threat_id: str) -> Optional[MitigationPlanEntry]:
        for e in self.entries:
            if e.threat_id == threat_id:
                return e
        return None

    @property
    def central_solutions(self) -> list[str]:
        """Central solutions the central-only threats depend on."""
        needed = {c.id for e in self.entries if e.central_only for c in e.central}
        return sorted_ids(needed)


@dataclass(frozen=True)
class ReportMetadata:
    catalog_version: str
    topology_name: str
    seed: int
    timestamp: str
    hardening: tuple[str, ...] = ()
    attacks: int = 0
    schema_version: int = settings.SCHEMA_VERSION


@dataclass(frozen=True)
class AssessmentReport:
    metadata: ReportMetadata
    stage1: Stage1Findings
    stage2: Stage2Ranking
    stage3: tuple[Stage3Result, ...]
    stage4: MitigationPlan

    @property
    def simulated(self) -> bool:
        return bool(self.stage3)


# ==============================================================================
# STAGES
# ==============================================================================

def topology_surfaces(topology: Topology) -> list[str]:
    """
    Surfaces the architecture exposes. A controller brings the application
    layer, its northbound API and the control layer; control channels are
    the southbound interface; switches and hosts make up the data layer.
    """
    surfaces = set()
    if topology.nodes_of(NodeKind.CONTROLLER):
        surfaces |= {Surface.APP_LAYER, Surface.NORTHBOUND_IF, Surface.CONTROL_LAYER}
    if any(l.kind == LinkKind.CONTROL for l in topology.links):
        surfaces.add(Surface.SOUTHBOUND_IF)
    if topology.nodes_of(NodeKind.SWITCH) or topology.nodes_of(NodeKind.HOST):
        surfaces.add(Surface.DATA_LAYER)
    return [s for s in Surface.ALL if s in surfaces]


def run_stage1(catalog: Catalog, topology: Topology) -> Stage1Findings:
    instances = []
    for surface in topology_surfaces(topology):
        for tid in sorted_ids(t.id for t in catalog.threats.values() if surface in t.affected_surfaces):
            instances.append(ThreatFinding(surface, tid, tuple(catalog.correlation.threat_to_vulns.get(tid, ()))))

    found = {f.threat_id for f in instances}
    roots: Dict[str, tuple[str, ...]] = {}
    for root_id in sorted_ids(catalog.root_threats):
        members = sorted_ids(tid for tid in found if catalog.threats[tid].root_threat == root_id)
        if members:
            roots[root_id] = tuple(members)
    stride = {
        category: tuple(tid for tid in ids if tid in found)
        for category, ids in stride_summary(catalog).items()
    }
    logger.info(f"Stage 1: {len(found)} threat(s) over {len(topology_surfaces(topology))} surface(s), {len(roots)} root threat(s)")
    return Stage1Findings(
        instances=tuple(instances),
        root_summary=MappingProxyType(roots),
        stride=MappingProxyType(stride),
    )


def run_stage2(findings: Stage1Findings, catalog: Catalog) -> Stage2Ranking:
    found = set(findings.threat_ids)
    categories = [tc for tc in catalog.threat_categories.values() if tc.member_threats & found]
    ranked = rank_categories(categories)
    directions = {tc.id: impact_direction(tc) for _, tc in ranked}
    logger.info(f"Stage 2: ranked {len(ranked)} threat categor{'y' if len(ranked) == 1 else 'ies'}")
    return Stage2Ranking(ranked=ranked, directions=MappingProxyType(directions))


def run_stage3(ranking: Stage2Ranking, topology: Topology, k: int, seed: int,
               catalog: Optional[Catalog] = None, library: Optional[list[AttackScenario]] = None,
               max_workers: Optional[int] = None) -> tuple[Stage3Result, ...]:
    """
    Simulates the scenarios mapped to the k highest ranks, each on a fresh
    simulator of the topology. k=0 skips the stage.
    """
    if k < 0:
        raise ScenarioError(f"k must not be negative, got {k}")
    if k == 0:
        logger.info("Stage 3: skipped")
        return ()
    if catalog is None:
        catalog = load_default_catalog()

    scenarios = select_scenarios(ranking.ranked, k, library)
    outcomes = run_scenarios(topology, scenarios, seed, max_workers=max_workers)
    results = tuple(Stage3Result(s, o, verdict(o, catalog)) for s, o in zip(scenarios, outcomes))
    for r in results:
        logger.info(
            f"Stage 3: {r.scenario.id} -> {r.verdict.observed_impact} "
            f"({'consistent' if r.verdict.consistent else 'inconsistent'} with {r.verdict.expectation} {r.verdict.tc_id})"
        )
    return results


def run_stage4(findings: Stage1Findings, catalog: Catalog) -> MitigationPlan:
    entries = tuple(mitigations_for(catalog, tid) for tid in findings.threat_ids)
    central_required = any(e.central_only for e in entries)
    logger.info(f"Stage 4: {len(entries)} plan entr{'y' if len(entries) == 1 else 'ies'}, central_required={central_required}")
    return MitigationPlan(entries=entries, central_required=central_required)


def run_assessment(catalog: Catalog, topology: Topology, k: int = 3, seed: int = 0,
                   hardening: Sequence[str] = (), clock: Optional[Callable[[], datetime]] = None,
                   library: Optional[list[AttackScenario]] = None,
                   max_workers: Optional[int] = None) -> AssessmentReport:
    """
    Runs all four stages end to end.

    Args:
        catalog: The threat catalog.
        topology: The architecture under assessment, before hardening.
        k: Number of top ranks to simulate attacks for; 0 assesses from the catalog only.
        seed: Simulator seed.
        hardening: Mitigation ids applied to the topology before Stage 3.
        clock: Returns the report timestamp; defaults to settings.report_clock.

    Returns:
        The AssessmentReport with its stages in order.
    """
    clock = clock or settings.report_clock
    hardened = apply_hardening_set(topology, hardening, catalog)
    logger.info(f"[PIPELINE] Assessing '{topology.name}' with catalog {catalog.catalog_version}, k={k}, seed={seed}")

    stage1 = run_stage1(catalog, hardened)
    stage2 = run_stage2(stage1, catalog)
    stage3 = run_stage3(stage2, hardened, k, seed, catalog=catalog, library=library, max_workers=max_workers)
    stage4 = run_stage4(stage1, catalog)

    metadata = ReportMetadata(
        catalog_version=catalog.catalog_version,
        topology_name=topology.name,
        seed=seed,
        timestamp=clock().isoformat(timespec="seconds"),
        hardening=tuple(hardened.hardening),
        attacks=k,
    )
    return AssessmentReport(metadata=metadata, stage1=stage1, stage2=stage2, stage3=stage3, stage4=stage4)


# ==============================================================================
# STRUCTURED DOCUMENT
# ==============================================================================

def to_plain(value: Any) -> Any:
    """Metric values as YAML-safe builtins."""
    if isinstance(value, Decimal):
        return str(value)
    if isinstance(value, (tuple, list)):
        return [to_plain(v) for v in value]
    if isinstance(value, Mapping):
        return {k: to_plain(v) for k, v in value.items()}
    return value


def report_to_document(report: AssessmentReport) -> Dict[str, Any]:
    m = report.metadata
    return {
        "schema_version": m.schema_version,
        "kind": "assessment_report",
        "metadata": {
            "catalog_version": m.catalog_version,
            "topology": m.topology_name,
            "seed": m.seed,
            "timestamp": m.timestamp,
            "hardening": list(m.hardening),
            "attacks": m.attacks,
        },
        "stage1": {
            "findings": [
                {"surface": f.surface, "threat": f.threat_id, "vulnerabilities": list(f.vulnerability_ids)}
                for f in report.stage1.instances
            ],
            "root_threats": {k: list(v) for k, v in report.stage1.root_summary.items()},
            "stride": {k: list(v) for k, v in report.stage1.stride.items()},
        },
        "stage2": [
            {
                "rank": rank,
                "id": tc.id,
                "name": tc.name,
                "members": sorted_ids(tc.member_threats),
                "vector": vector_string(tc.cvss_vector),
                "base_score": str(tc.base_score),
                "overall_score": str(tc.overall_score),
                "severity": tc.severity,
                "impact_direction": report.stage2.directions[tc.id],
            }
            for rank, tc in report.stage2.ranked
        ],
        "stage3": [
            {
                "scenario": {
                    "id": r.scenario.id,
                    "kind": r.scenario.kind,
                    "target_tc": r.scenario.target_tc,
                    "parameters": to_plain(dict(r.scenario.parameters)),
                },
                "outcome": {
                    "succeeded": r.outcome.succeeded,
                    "metrics": to_plain(dict(r.outcome.metrics)),
                    "trace_events": len(r.outcome.trace),
                },
                "verdict": {
                    "expectation": r.verdict.expectation,
                    "observed_impact": r.verdict.observed_impact,
                    "consistent": r.verdict.consistent,
                    "notes": r.verdict.notes,
                },
            }
            for r in report.stage3
        ],
        "stage4": {
            "central_required": report.stage4.central_required,
            "entries": [_plan_entry_document(e) for e in report.stage4.entries],
        },
    }


def _mitigation_document(m: MitigationRecord) -> Dict[str, Any]:
    return {"id": m.id, "name": m.name, "actions": list(m.actions)}


def _plan_entry_document(e: MitigationPlanEntry) -> Dict[str, Any]:
    return {
        "threat": e.threat_id,
        "specific": _mitigation_document(e.specific) if e.specific else None,
        "inapplicable": list(e.inapplicable),
        "central": [_mitigation_document(c) for c in e.central],
        "central_only": e.central_only,
    }


def _mitigation_from_document(d: Mapping[str, Any], kind: str) -> MitigationRecord:
    return MitigationRecord(id=d["id"], actions=tuple(d.get("actions") or ()), kind=kind, name=d.get("name") or "")


def report_from_document(document: Any) -> AssessmentReport:
    """Rebuilds a report from its Structured form; raises CatalogSchemaError on malformed input."""
    if not isinstance(document, Mapping) or document.get("kind") != "assessment_report":
        raise CatalogSchemaError("not an assessment report document", field="kind")
    if document.get("schema_version") != settings.SCHEMA_VERSION:
        raise CatalogSchemaError(f"unsupported report schema_version {document.get('schema_version')!r}", field="schema_version")
    try:
        meta = document["metadata"]
        metadata = ReportMetadata(
            catalog_version=str(meta["catalog_version"]),
            topology_name=str(meta["topology"]),
            seed=int(meta["seed"]),
            timestamp=str(meta["timestamp"]),
            hardening=tuple(meta.get("hardening") or ()),
            attacks=int(meta.get("attacks", 0)),
        )

        s1 = document["stage1"]
        stage1 = Stage1Findings(
            instances=tuple(ThreatFinding(f["surface"], f["threat"], tuple(f["vulnerabilities"])) for f in s1["findings"]),
            root_summary=MappingProxyType({k: tuple(v) for k, v in s1["root_threats"].items()}),
            stride=MappingProxyType({k: tuple(v) for k, v in (s1.get("stride") or {}).items()}),
        )

        entries = []
        directions = {}
        for row in document["stage2"]:
            tc = ThreatCategory(
                id=row["id"],
                name=row["name"],
                member_threats=frozenset(row["members"]),
                cvss_vector=parse_vector(row["vector"]),
                base_score=Decimal(row["base_score"]),
                overall_score=Decimal(row["overall_score"]),
                severity=row["severity"],
                rank=int(row["rank"]),
            )
            entries.append((int(row["rank"]), tc))
            directions[tc.id] = row["impact_direction"]
        stage2 = Stage2Ranking(ranked=RankedList(entries=tuple(entries)), directions=MappingProxyType(directions))

        stage3 = []
        for row in document["stage3"]:
            sc, out, ver = row["scenario"], row["outcome"], row["verdict"]
            scenario = AttackScenario(id=sc["id"], kind=sc["kind"], target_tc=sc["target_tc"],
                                      parameters=MappingProxyType(dict(sc.get("parameters") or {})))
            outcome = AttackOutcome(scenario_id=sc["id"], kind=sc["kind"], target_tc=sc["target_tc"],
                                    succeeded=bool(out["succeeded"]), metrics=MappingProxyType(dict(out["metrics"])))
            v = Verdict(tc_id=sc["target_tc"], expectation=ver["expectation"], observed_impact=ver["observed_impact"],
                        consistent=bool(ver["consistent"]), notes=ver.get("notes", ""))
            stage3.append(Stage3Result(scenario, outcome, v))

        s4 = document["stage4"]
        plan_entries = tuple(
            MitigationPlanEntry(
                threat_id=e["threat"],
                specific=_mitigation_from_document(e["specific"], MitigationKind.SPECIFIC) if e.get("specific") else None,
                central=tuple(_mitigation_from_document(c, MitigationKind.CENTRAL) for c in e.get("central") or ()),
                central_only=bool(e["central_only"]),
                inapplicable=tuple(e.get("inapplicable") or ()),
            )
            for e in s4["entries"]
        )
        stage4 = MitigationPlan(entries=plan_entries, central_required=bool(s4["central_required"]))
    except (KeyError, TypeError, ValueError) as e:
        raise CatalogSchemaError(f"malformed assessment report: {e}")

    return AssessmentReport(metadata=metadata, stage1=stage1, stage2=stage2, stage3=tuple(stage3), stage4=stage4)


def load_report(path: Union[str, Path]) -> AssessmentReport:
    with open(path, "r", encoding="utf-8") as f:
        document = yaml.safe_load(f)
    logger.info(f"Loading assessment report from {path}")
    return report_from_document(document)
