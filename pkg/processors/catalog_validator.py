import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator

from processors.cvss_engine import base_score, rank_categories, severity_band
from processors.knowledge_base import Catalog, CatalogProfile, Stride

logger = logging.getLogger(__name__)


# ==============================================================================
# CONFIGURATION AND STATUSES
# ==============================================================================

class CheckStatus:
    PASSED = "PASSED"
    FAILED = "FAILED"
    SKIPPED = "SKIPPED"


# Record counts the shipped reference catalog must have.
REFERENCE_CARDINALITIES = {
    "root threats": 4,
    "threats": 18,
    "vulnerabilities": 18,
    "specific mitigations": 18,
    "central mitigations": 3,
    "threat categories": 14,
}

# Which checks run for which catalog profile. Custom catalogs (trimmed test
# catalogs, site-specific extensions) skip the reference-only checks.
VALIDATION_PROFILES = {
    CatalogProfile.REFERENCE: {"reference_checks": True},
    CatalogProfile.CUSTOM: {"reference_checks": False},
}


@dataclass(frozen=True)
class Violation:
    check: str
    record_id: str
    message: str


@dataclass(frozen=True)
class CheckResult:
    check: str
    status: str
    notes: str = ""


@dataclass(frozen=True)
class ValidationReport:
    results: tuple[CheckResult, ...]
    violations: tuple[Violation, ...]

    @property
    def checks(self) -> tuple[str, ...]:
        return tuple(r.check for r in self.results)

    @property
    def ok(self) -> bool:
        return not self.violations

    def violations_for(self, check: str) -> list[Violation]:
        return [v for v in self.violations if v.check == check]

    def as_rows(self) -> list[Dict[str, Any]]:
        """One row per check, ready for a DataFrame."""
        return [
            {"check": r.check, "status": r.status, "violations": len(self.violations_for(r.check)), "notes": r.notes}
            for r in self.results
        ]


# ==============================================================================
# INDIVIDUAL CHECKS
# Each check yields (record_id, message) for every violation it finds.
# ==============================================================================

def _stride_non_empty(catalog: Catalog) -> Iterator[tuple[str, str]]:
    for t in catalog.threats.values():
        if not t.stride_tags:
            yield t.id, "threat has no STRIDE tag"


def _root_known(catalog: Catalog) -> Iterator[tuple[str, str]]:
    for t in catalog.threats.values():
        if t.root_threat not in catalog.root_threats:
            yield t.id, f"root threat '{t.root_threat}' is not defined"


def _threat_has_vulnerability(catalog: Catalog) -> Iterator[tuple[str, str]]:
    for tid in catalog.threats:
        if not catalog.correlation.threat_to_vulns.get(tid):
            yield tid, "threat is not linked to any vulnerability"


def _threat_has_mitigation_edge(catalog: Catalog) -> Iterator[tuple[str, str]]:
    for tid in catalog.threats:
        if not catalog.correlation.threat_to_specific.get(tid) and not catalog.correlation.threat_to_central.get(tid):
            yield tid, "threat has no specific or central mitigation edge"


def _inapplicable_has_central(catalog: Catalog) -> Iterator[tuple[str, str]]:
    correlation = catalog.correlation
    for tid in catalog.threats:
        specific = correlation.threat_to_specific.get(tid, ())
        if not specific:
            continue
        if all(not catalog.mitigations[mid].applicable for mid in specific) and not correlation.threat_to_central.get(tid):
            yield tid, f"specific mitigation {', '.join(specific)} is not applicable and no central solution covers the threat"


def _inapplicable_has_no_actions(catalog: Catalog) -> Iterator[tuple[str, str]]:
    for m in catalog.mitigations.values():
        if not m.applicable and m.actions:
            yield m.id, "inapplicable mitigation lists actions"


def _central_covers_threats(catalog: Catalog) -> Iterator[tuple[str, str]]:
    for m in catalog.central_mitigations:
        if not m.covered_threats:
            yield m.id, "central solution covers no threat"


def _no_universal_central(catalog: Catalog) -> Iterator[tuple[str, str]]:
    all_threats = set(catalog.threats)
    for m in catalog.central_mitigations:
        if all_threats and all_threats <= m.covered_threats:
            yield m.id, "central solution covers every threat"


def _members_non_empty(catalog: Catalog) -> Iterator[tuple[str, str]]:
    for tc in catalog.threat_categories.values():
        if not tc.member_threats:
            yield tc.id, "threat category has no member threats"


def _severity_band(catalog: Catalog) -> Iterator[tuple[str, str]]:
    for tc in catalog.threat_categories.values():
        expected = severity_band(tc.base_score)
        if tc.severity != expected:
            yield tc.id, f"severity {tc.severity} does not match base score {tc.base_score} (expected {expected})"


def _vector_base_score(catalog: Catalog) -> Iterator[tuple[str, str]]:
    for tc in catalog.threat_categories.values():
        computed = base_score(tc.cvss_vector).value
        if computed != tc.base_score:
            yield tc.id, f"vector computes to {computed}, stored base score is {tc.base_score}"


def _rank_consistent(catalog: Catalog) -> Iterator[tuple[str, str]]:
    ranked = rank_categories(list(catalog.threat_categories.values()))
    for rank, tc in ranked:
        if tc.rank != rank:
            yield tc.id, f"stored rank {tc.rank}, computed dense rank {rank}"


def _reference_cardinalities(catalog: Catalog) -> Iterator[tuple[str, str]]:
    actual = {
        "root threats": len(catalog.root_threats),
        "threats": len(catalog.threats),
        "vulnerabilities": len(catalog.vulnerabilities),
        "specific mitigations": len(catalog.specific_mitigations),
        "central mitigations": len(catalog.central_mitigations),
        "threat categories": len(catalog.threat_categories),
    }
    for section, expected in REFERENCE_CARDINALITIES.items():
        if actual[section] != expected:
            yield section, f"expected {expected} {section}, found {actual[section]}"


def _reference_stride_coverage(catalog: Catalog) -> Iterator[tuple[str, str]]:
    covered = set()
    for t in catalog.threats.values():
        covered |= t.stride_tags
    for category in Stride.ALL:
        if category not in covered:
            yield category, "no threat carries this STRIDE category"


CATALOG_CHECKS: list[tuple[str, Callable[[Catalog], Iterator[tuple[str, str]]], bool]] = [
    # (check name, check function, reference-only)
    ("threat.stride_non_empty", _stride_non_empty, False),
    ("threat.root_known", _root_known, False),
    ("correlation.threat_has_vulnerability", _threat_has_vulnerability, False),
    ("correlation.threat_has_mitigation_edge", _threat_has_mitigation_edge, False),
    ("correlation.inapplicable_has_central", _inapplicable_has_central, False),
    ("mitigation.inapplicable_has_no_actions", _inapplicable_has_no_actions, False),
    ("mitigation.central_covers_threats", _central_covers_threats, False),
    ("mitigation.no_universal_central", _no_universal_central, False),
    ("category.members_non_empty", _members_non_empty, False),
    ("category.severity_band", _severity_band, False),
    ("category.vector_base_score", _vector_base_score, False),
    ("category.rank_consistent", _rank_consistent, False),
    ("reference.cardinalities", _reference_cardinalities, True),
    ("reference.stride_coverage", _reference_stride_coverage, True),
]


# ==============================================================================
# THE MAIN VALIDATION DISPATCHER
# ==============================================================================

def validate_catalog(catalog: Catalog) -> ValidationReport:
    """
    Runs every catalog check and collects violations as data.

    The catalog's profile decides whether the reference-only checks
    (cardinalities, STRIDE coverage) apply; skipped checks are still listed
    in the report with status SKIPPED.
    """
    profile = VALIDATION_PROFILES.get(catalog.profile, VALIDATION_PROFILES[CatalogProfile.CUSTOM])
    results = []
    violations = []

    for name, check, reference_only in CATALOG_CHECKS:
        if reference_only and not profile["reference_checks"]:
            results.append(CheckResult(name, CheckStatus.SKIPPED, f"not applied to '{catalog.profile}' catalogs"))
            continue
        found = [Violation(name, record_id, message) for record_id, message in check(catalog)]
        violations.extend(found)
        if found:
            results.append(CheckResult(name, CheckStatus.FAILED, f"{len(found)} violation(s)"))
        else:
            results.append(CheckResult(name, CheckStatus.PASSED))

    for v in violations:
        logger.warning(f"Catalog check {v.check} failed for {v.record_id}: {v.message}")
    logger.info(f"Catalog validation finished: {len(results)} checks, {len(violations)} violation(s)")
    return ValidationReport(results=tuple(results), violations=tuple(violations))

