from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from types import MappingProxyType
from typing import Any, Dict, IO, Mapping, Optional, Union

import yaml
from thefuzz import fuzz

from processors import settings
from processors.cvss_engine import CvssVector, parse_vector, vector_string, Severity
from processors.errors import CatalogSchemaError, DanglingReferenceError, DuplicateIdError, UnknownIdError
from processors.identifiers import natural_key, sorted_ids

logger = logging.getLogger(__name__)


# ==============================================================================
# CONFIGURATION AND STATUSES
# ==============================================================================

class Surface:
    APP_LAYER = "AppLayer"
    NORTHBOUND_IF = "NorthboundIf"
    CONTROL_LAYER = "ControlLayer"
    SOUTHBOUND_IF = "SouthboundIf"
    DATA_LAYER = "DataLayer"

    ALL = (APP_LAYER, NORTHBOUND_IF, CONTROL_LAYER, SOUTHBOUND_IF, DATA_LAYER)


class Stride:
    SPOOFING = "Spoofing"
    TAMPERING = "Tampering"
    REPUDIATION = "Repudiation"
    INFORMATION_DISCLOSURE = "InformationDisclosure"
    DENIAL_OF_SERVICE = "DenialOfService"
    ELEVATION_OF_PRIVILEGE = "ElevationOfPrivilege"

    ALL = (SPOOFING, TAMPERING, REPUDIATION, INFORMATION_DISCLOSURE, DENIAL_OF_SERVICE, ELEVATION_OF_PRIVILEGE)


class MitigationKind:
    SPECIFIC = "Specific"
    CENTRAL = "Central"


class CatalogProfile:
    REFERENCE = "reference"
    CUSTOM = "custom"


# ==============================================================================
# DOMAIN TYPES
# ==============================================================================

@dataclass(frozen=True)
class RootThreat:
    id: str
    name: str
    editorial: bool = True


@dataclass(frozen=True)
class ThreatRecord:
    id: str
    name: str
    description: tuple[str, ...]
    stride_tags: frozenset[str]
    root_threat: str
    affected_surfaces: frozenset[str]
    editorial: tuple[str, ...] = ()


@dataclass(frozen=True)
class VulnRecord:
    id: str
    description: tuple[str, ...]
    not_mappable: bool = False


@dataclass(frozen=True)
class MitigationRecord:
    id: str
    actions: tuple[str, ...]
    kind: str = MitigationKind.SPECIFIC
    covered_threats: frozenset[str] = frozenset()
    applicable: bool = True
    name: str = ""
    editorial: bool = False


@dataclass(frozen=True)
class ThreatCategory:
    id: str
    name: str
    member_threats: frozenset[str]
    cvss_vector: CvssVector
    base_score: Decimal
    overall_score: Decimal
    severity: str
    rank: int
    editorial: bool = True


@dataclass(frozen=True)
class CorrelationMap:
    vuln_to_threat: Mapping[str, frozenset[str]]
    threat_to_vulns: Mapping[str, tuple[str, ...]]
    threat_to_specific: Mapping[str, tuple[str, ...]]
    threat_to_central: Mapping[str, tuple[str, ...]]


@dataclass(frozen=True)
class Catalog:
    schema_version: int
    catalog_version: str
    profile: str
    root_threats: Mapping[str, RootThreat]
    threats: Mapping[str, ThreatRecord]
    vulnerabilities: Mapping[str, VulnRecord]
    mitigations: Mapping[str, MitigationRecord]
    threat_categories: Mapping[str, ThreatCategory]
    correlation: CorrelationMap
    source: str = field(default="", compare=False)

    @property
    def specific_mitigations(self) -> list[MitigationRecord]:
        return [m for m in self.mitigations.values() if m.kind == MitigationKind.SPECIFIC]

    @property
    def central_mitigations(self) -> list[MitigationRecord]:
        return [m for m in self.mitigations.values() if m.kind == MitigationKind.CENTRAL]

    def threat(self, threat_id: str) -> ThreatRecord:
        if threat_id not in self.threats:
            raise UnknownIdError(threat_id, "threat")
        return self.threats[threat_id]

    def category(self, tc_id: str) -> ThreatCategory:
        if tc_id not in self.threat_categories:
            raise UnknownIdError(tc_id, "threat category")
        return self.threat_categories[tc_id]


@dataclass(frozen=True)
class MitigationPlanEntry:
    threat_id: str
    specific: Optional[MitigationRecord]
    central: tuple[MitigationRecord, ...]
    central_only: bool
    inapplicable: tuple[str, ...] = ()

    @property
    def edge_count(self) -> int:
        return (1 if self.specific else 0) + len(self.central)


# ==============================================================================
# LOADING
# ==============================================================================

CatalogSource = Union[str, Path, IO[str], Mapping[str, Any]]

SECTIONS = ("root_threats", "threats", "vulnerabilities", "mitigations", "threat_categories")


def read_document(source: CatalogSource) -> Any:
    """Reads a catalog-family YAML document from a path, an open stream, or an already-parsed mapping."""
    if isinstance(source, Mapping):
        return dict(source)
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as f:
            return yaml.safe_load(f)
    return yaml.safe_load(source)


def _require(record: Mapping[str, Any], key: str, record_id: str, kind: type | tuple = object) -> Any:
    if key not in record or record[key] is None:
        raise CatalogSchemaError("required field is missing", field=key, record_id=record_id)
    value = record[key]
    if not isinstance(value, kind):
        raise CatalogSchemaError(f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}",
                                 field=key, record_id=record_id)
    return value


def _string_list(record: Mapping[str, Any], key: str, record_id: str, required: bool = True) -> tuple[str, ...]:
    if key not in record or record[key] is None:
        if required:
            raise CatalogSchemaError("required field is missing", field=key, record_id=record_id)
        return ()
    value = record[key]
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise CatalogSchemaError("expected a list of strings", field=key, record_id=record_id)
    return tuple(value)


def _enum_set(values: tuple[str, ...], allowed: tuple[str, ...], key: str, record_id: str) -> frozenset[str]:
    for value in values:
        if value not in allowed:
            raise CatalogSchemaError(f"'{value}' is not one of {', '.join(allowed)}", field=key, record_id=record_id)
    return frozenset(values)


def _decimal_score(record: Mapping[str, Any], key: str, record_id: str) -> Decimal:
    raw = _require(record, key, record_id, (int, float, str))
    try:
        value = Decimal(str(raw).replace(",", "."))
    except InvalidOperation:
        raise CatalogSchemaError(f"'{raw}' is not a decimal score", field=key, record_id=record_id)
    if value < 0 or value > 10:
        raise CatalogSchemaError(f"score {value} outside 0.0 - 10.0", field=key, record_id=record_id)
    return value.quantize(Decimal("0.1"))


def _records(document: Mapping[str, Any], section: str) -> list[Mapping[str, Any]]:
    records = document.get(section)
    if records is None:
        raise CatalogSchemaError("required section is missing", field=section)
    if not isinstance(records, list):
        raise CatalogSchemaError("section must be a list of records", field=section)
    seen = set()
    for index, record in enumerate(records):
        if not isinstance(record, Mapping):
            raise CatalogSchemaError(f"entry #{index + 1} is not a mapping", field=section)
        record_id = record.get("id")
        if not isinstance(record_id, str) or not record_id:
            raise CatalogSchemaError(f"entry #{index + 1} has no string id", field="id")
        if record_id in seen:
            raise DuplicateIdError(record_id, section)
        seen.add(record_id)
    return records


def load_catalog(source: CatalogSource) -> Catalog:
    """
    Loads the catalog document and returns a fully cross-linked Catalog.

    Schema problems raise CatalogSchemaError naming the field and record id,
    broken links raise DanglingReferenceError naming both ends, repeated ids
    raise DuplicateIdError. Semantic invariants (coverage, severity bands,
    cardinalities) are left to catalog_validator.validate_catalog.
    """
    document = read_document(source)
    source_name = str(source) if isinstance(source, (str, Path)) else ""
    logger.info(f"Loading SDN security catalog {source_name or '<in-memory>'}")

    if not isinstance(document, Mapping) or not document:
        raise CatalogSchemaError("catalog document is empty or not a mapping")
    if "schema_version" not in document:
        raise CatalogSchemaError("required field is missing", field="schema_version")
    if document["schema_version"] != settings.SCHEMA_VERSION:
        raise CatalogSchemaError(f"unsupported schema_version {document['schema_version']!r}",
                                 field="schema_version")

    profile = document.get("profile", CatalogProfile.CUSTOM)
    if profile not in (CatalogProfile.REFERENCE, CatalogProfile.CUSTOM):
        raise CatalogSchemaError(f"unknown profile '{profile}'", field="profile")

    # --- Root threats ---
    root_threats: Dict[str, RootThreat] = {}
    for record in _records(document, "root_threats"):
        rid = record["id"]
        root_threats[rid] = RootThreat(id=rid, name=_require(record, "name", rid, str),
                                       editorial=bool(record.get("editorial", True)))

    # --- Vulnerabilities ---
    vulnerabilities: Dict[str, VulnRecord] = {}
    for record in _records(document, "vulnerabilities"):
        vid = record["id"]
        vulnerabilities[vid] = VulnRecord(
            id=vid,
            description=_string_list(record, "description", vid),
            not_mappable=bool(record.get("not_mappable", False)),
        )

    # --- Mitigations (specific and central) ---
    mitigations: Dict[str, MitigationRecord] = {}
    raw_covers: Dict[str, tuple[str, ...]] = {}
    for record in _records(document, "mitigations"):
        mid = record["id"]
        kind = record.get("kind", MitigationKind.SPECIFIC)
        if kind not in (MitigationKind.SPECIFIC, MitigationKind.CENTRAL):
            raise CatalogSchemaError(f"unknown mitigation kind '{kind}'", field="kind", record_id=mid)
        applicable = record.get("applicable", True)
        if not isinstance(applicable, bool):
            raise CatalogSchemaError("expected a boolean", field="applicable", record_id=mid)
        covers = _string_list(record, "covers", mid, required=(kind == MitigationKind.CENTRAL))
        raw_covers[mid] = covers
        mitigations[mid] = MitigationRecord(
            id=mid,
            actions=_string_list(record, "actions", mid, required=False),
            kind=kind,
            covered_threats=frozenset(covers),
            applicable=applicable,
            name=str(record.get("name", "")),
            editorial=bool(record.get("editorial", False)),
        )

    # --- Threats ---
    threats: Dict[str, ThreatRecord] = {}
    threat_to_vulns: Dict[str, tuple[str, ...]] = {}
    threat_to_specific: Dict[str, tuple[str, ...]] = {}
    for record in _records(document, "threats"):
        tid = record["id"]
        root = _require(record, "root_threat", tid, str)
        if root not in root_threats:
            raise DanglingReferenceError(tid, root, "belongs to root threat")
        threats[tid] = ThreatRecord(
            id=tid,
            name=_require(record, "name", tid, str),
            description=_string_list(record, "description", tid),
            stride_tags=_enum_set(_string_list(record, "stride", tid), Stride.ALL, "stride", tid),
            root_threat=root,
            affected_surfaces=_enum_set(_string_list(record, "surfaces", tid), Surface.ALL, "surfaces", tid),
            editorial=_string_list(record, "editorial", tid, required=False),
        )
        vuln_ids = _string_list(record, "vulnerabilities", tid, required=False)
        for vid in vuln_ids:
            if vid not in vulnerabilities:
                raise DanglingReferenceError(tid, vid, "is linked to vulnerability")
        threat_to_vulns[tid] = vuln_ids

        specific_ids = _string_list(record, "mitigations", tid, required=False)
        for mid in specific_ids:
            if mid not in mitigations:
                raise DanglingReferenceError(tid, mid, "is mitigated by")
            if mitigations[mid].kind != MitigationKind.SPECIFIC:
                raise CatalogSchemaError(f"'{mid}' is a central solution; list it under its own 'covers'",
                                         field="mitigations", record_id=tid)
        threat_to_specific[tid] = specific_ids

    threat_to_central: Dict[str, list[str]] = {tid: [] for tid in threats}
    for mid, covers in raw_covers.items():
        for tid in covers:
            if tid not in threats:
                raise DanglingReferenceError(mid, tid, "covers threat")
            threat_to_central[tid].append(mid)

    vuln_to_threat: Dict[str, set[str]] = {vid: set() for vid in vulnerabilities}
    for tid, vuln_ids in threat_to_vulns.items():
        for vid in vuln_ids:
            vuln_to_threat[vid].add(tid)

    # --- Threat categories ---
    categories: Dict[str, ThreatCategory] = {}
    for record in _records(document, "threat_categories"):
        cid = record["id"]
        members = _string_list(record, "members", cid, required=False)
        for tid in members:
            if tid not in threats:
                raise DanglingReferenceError(cid, tid, "aggregates threat")
        try:
            vector = parse_vector(_require(record, "vector", cid, str))
        except ValueError as e:
            raise CatalogSchemaError(str(e), field="vector", record_id=cid)
        severity = _require(record, "severity", cid, str)
        if severity not in Severity.ORDER:
            raise CatalogSchemaError(f"'{severity}' is not a severity class", field="severity", record_id=cid)
        rank = _require(record, "rank", cid, int)
        if rank < 1:
            raise CatalogSchemaError("rank must be a positive integer", field="rank", record_id=cid)
        categories[cid] = ThreatCategory(
            id=cid,
            name=_require(record, "name", cid, str),
            member_threats=frozenset(members),
            cvss_vector=vector,
            base_score=_decimal_score(record, "base_score", cid),
            overall_score=_decimal_score(record, "overall_score", cid),
            severity=severity,
            rank=rank,
            editorial=bool(record.get("editorial", True)),
        )

    correlation = CorrelationMap(
        vuln_to_threat=MappingProxyType({vid: frozenset(tids) for vid, tids in vuln_to_threat.items()}),
        threat_to_vulns=MappingProxyType(threat_to_vulns),
        threat_to_specific=MappingProxyType(threat_to_specific),
        threat_to_central=MappingProxyType({tid: tuple(mids) for tid, mids in threat_to_central.items()}),
    )

    catalog = Catalog(
        schema_version=document["schema_version"],
        catalog_version=str(document.get("catalog_version", "")),
        profile=profile,
        root_threats=MappingProxyType(root_threats),
        threats=MappingProxyType(threats),
        vulnerabilities=MappingProxyType(vulnerabilities),
        mitigations=MappingProxyType(mitigations),
        threat_categories=MappingProxyType(categories),
        correlation=correlation,
        source=source_name,
    )
    logger.info(
        f"Catalog loaded: {len(threats)} threats, {len(vulnerabilities)} vulnerabilities, "
        f"{len(mitigations)} mitigations, {len(categories)} threat categories"
    )
    return catalog


def load_default_catalog() -> Catalog:
    return load_catalog(settings.DEFAULT_KB_PATH)


# ==============================================================================
# SERIALIZATION
# ==============================================================================

def catalog_to_document(catalog: Catalog) -> Dict[str, Any]:
    """Inverse of load_catalog: the mapping that reloads to an equal Catalog."""
    correlation = catalog.correlation
    document: Dict[str, Any] = {
        "schema_version": catalog.schema_version,
        "catalog_version": catalog.catalog_version,
        "profile": catalog.profile,
        "root_threats": [
            {"id": r.id, "name": r.name, "editorial": r.editorial} for r in catalog.root_threats.values()
        ],
        "threats": [],
        "vulnerabilities": [
            {"id": v.id, "description": list(v.description), "not_mappable": v.not_mappable}
            for v in catalog.vulnerabilities.values()
        ],
        "mitigations": [],
        "threat_categories": [],
    }
    for t in catalog.threats.values():
        entry = {
            "id": t.id,
            "name": t.name,
            "description": list(t.description),
            "stride": [s for s in Stride.ALL if s in t.stride_tags],
            "root_threat": t.root_threat,
            "surfaces": [s for s in Surface.ALL if s in t.affected_surfaces],
            "vulnerabilities": list(correlation.threat_to_vulns.get(t.id, ())),
            "mitigations": list(correlation.threat_to_specific.get(t.id, ())),
        }
        if t.editorial:
            entry["editorial"] = list(t.editorial)
        document["threats"].append(entry)
    for m in catalog.mitigations.values():
        entry = {"id": m.id, "kind": m.kind}
        if m.name:
            entry["name"] = m.name
        entry["applicable"] = m.applicable
        entry["actions"] = list(m.actions)
        if m.kind == MitigationKind.CENTRAL:
            entry["covers"] = sorted_ids(m.covered_threats)
        if m.editorial:
            entry["editorial"] = True
        document["mitigations"].append(entry)
    for tc in catalog.threat_categories.values():
        document["threat_categories"].append({
            "id": tc.id,
            "name": tc.name,
            "members": sorted_ids(tc.member_threats),
            "editorial": tc.editorial,
            "vector": vector_string(tc.cvss_vector),
            "base_score": str(tc.base_score),
            "overall_score": str(tc.overall_score),
            "severity": tc.severity,
            "rank": tc.rank,
        })
    return document


def save_catalog(catalog: Catalog, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(catalog_to_document(catalog), f, sort_keys=False, allow_unicode=True)
    logger.info(f"Catalog saved to {path}")


# ==============================================================================
# QUERIES
# ==============================================================================

def threats_for_surface(catalog: Catalog, surface: str) -> frozenset[ThreatRecord]:
    if surface not in Surface.ALL:
        raise UnknownIdError(surface, "SDN surface")
    return frozenset(t for t in catalog.threats.values() if surface in t.affected_surfaces)


def vulnerabilities_for(catalog: Catalog, threat_id: str) -> frozenset[VulnRecord]:
    catalog.threat(threat_id)
    return frozenset(catalog.vulnerabilities[vid] for vid in catalog.correlation.threat_to_vulns.get(threat_id, ()))


def mitigations_for(catalog: Catalog, threat_id: str) -> MitigationPlanEntry:
    """
    Specific countermeasure for the threat (when one applies) plus every
    central solution covering it. Threats whose specific mitigation is n/a
    come back flagged central-only.
    """
    catalog.threat(threat_id)
    specific_ids = catalog.correlation.threat_to_specific.get(threat_id, ())
    applicable = [catalog.mitigations[mid] for mid in specific_ids if catalog.mitigations[mid].applicable]
    inapplicable = tuple(mid for mid in specific_ids if not catalog.mitigations[mid].applicable)
    central = tuple(catalog.mitigations[mid] for mid in catalog.correlation.threat_to_central.get(threat_id, ()))
    return MitigationPlanEntry(
        threat_id=threat_id,
        specific=applicable[0] if applicable else None,
        central=central,
        central_only=not applicable,
        inapplicable=inapplicable,
    )


def stride_summary(catalog: Catalog) -> Dict[str, list[str]]:
    """STRIDE category -> ids of the threats tagged with it."""
    return {
        category: sorted_ids(t.id for t in catalog.threats.values() if category in t.stride_tags)
        for category in Stride.ALL
    }


def find_threats(catalog: Catalog, text: str, limit: int = 5, threshold: int = 60) -> list[tuple[ThreatRecord, int]]:
    """
    Fuzzy search over threat names and descriptions, best match first.
    Uses the same token-set scoring the field validators rely on for
    free-text comparison.
    """
    query = text.strip().lower()
    if not query:
        return []
    scored = []
    for threat in catalog.threats.values():
        name_score = fuzz.token_set_ratio(query, threat.name.lower())
        description_score = fuzz.token_set_ratio(query, " ".join(threat.description).lower())
        # Description hits count a little less than name hits
        score = max(name_score, int(description_score * 0.9))
        if score >= threshold:
            scored.append((threat, score))
    scored.sort(key=lambda pair: (-pair[1], natural_key(pair[0].id)))
    return scored[:limit]
