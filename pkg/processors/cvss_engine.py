from __future__ import annotations

from dataclasses import dataclass, fields
from decimal import Decimal
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Any

from processors.identifiers import natural_key

if TYPE_CHECKING:
    from processors.knowledge_base import ThreatCategory


# ==============================================================================
# CONFIGURATION AND STATUSES
# ==============================================================================

CVSS_PREFIX = "CVSS:3.1"
NOT_DEFINED = "X"


class Severity:
    NONE = "None"
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    CRITICAL = "Critical"

    ORDER = (NONE, LOW, MEDIUM, HIGH, CRITICAL)


class ImpactDirection:
    HIGHER_THAN_ASSUMED = "HigherThanAssumed"
    LOWER_THAN_ASSUMED = "LowerThanAssumed"
    AS_ASSUMED = "AsAssumed"


BASE_METRICS = ("AV", "AC", "PR", "UI", "S", "C", "I", "A")
ENVIRONMENTAL_METRICS = ("CR", "IR", "AR", "MAV", "MAC", "MPR", "MUI", "MS", "MC", "MI", "MA")

# Metric abbreviation -> CvssVector attribute
FIELD_BY_METRIC = {
    "AV": "attack_vector",
    "AC": "attack_complexity",
    "PR": "privileges_required",
    "UI": "user_interaction",
    "S": "scope",
    "C": "confidentiality",
    "I": "integrity",
    "A": "availability",
    "CR": "confidentiality_requirement",
    "IR": "integrity_requirement",
    "AR": "availability_requirement",
    "MAV": "modified_attack_vector",
    "MAC": "modified_attack_complexity",
    "MPR": "modified_privileges_required",
    "MUI": "modified_user_interaction",
    "MS": "modified_scope",
    "MC": "modified_confidentiality",
    "MI": "modified_integrity",
    "MA": "modified_availability",
}

_BASE_VALUES = {
    "AV": ("N", "A", "L", "P"),
    "AC": ("L", "H"),
    "PR": ("N", "L", "H"),
    "UI": ("N", "R"),
    "S": ("U", "C"),
    "C": ("N", "L", "H"),
    "I": ("N", "L", "H"),
    "A": ("N", "L", "H"),
}

ALLOWED_VALUES = dict(_BASE_VALUES)
for _req in ("CR", "IR", "AR"):
    ALLOWED_VALUES[_req] = ("L", "M", "H", NOT_DEFINED)
for _metric in BASE_METRICS:
    ALLOWED_VALUES["M" + _metric] = _BASE_VALUES[_metric] + (NOT_DEFINED,)

# Long names accepted when building vectors by hand or from catalog files
ALIASES = {
    "NETWORK": "N", "ADJACENT": "A", "LOCAL": "L", "PHYSICAL": "P",
    "LOW": "L", "MEDIUM": "M", "HIGH": "H", "NONE": "N", "REQUIRED": "R",
    "UNCHANGED": "U", "CHANGED": "C", "NOTDEFINED": NOT_DEFINED, "NOT_DEFINED": NOT_DEFINED,
}

# CVSS v3.1 weights, kept exact
_F = Fraction
WEIGHTS = {
    "AV": {"N": _F("0.85"), "A": _F("0.62"), "L": _F("0.55"), "P": _F("0.2")},
    "AC": {"L": _F("0.77"), "H": _F("0.44")},
    "UI": {"N": _F("0.85"), "R": _F("0.62")},
    "CIA": {"N": _F(0), "L": _F("0.22"), "H": _F("0.56")},
    "REQ": {"L": _F("0.5"), "M": _F(1), "H": _F("1.5"), NOT_DEFINED: _F(1)},
}
PR_WEIGHTS = {
    "U": {"N": _F("0.85"), "L": _F("0.62"), "H": _F("0.27")},
    "C": {"N": _F("0.85"), "L": _F("0.68"), "H": _F("0.5")},
}
MISS_CAP = _F("0.915")
TEN = _F(10)


# ==============================================================================
# DOMAIN TYPES
# ==============================================================================

@dataclass(frozen=True)
class CvssVector:
    attack_vector: str
    attack_complexity: str
    privileges_required: str
    user_interaction: str
    scope: str
    confidentiality: str
    integrity: str
    availability: str
    confidentiality_requirement: str = NOT_DEFINED
    integrity_requirement: str = NOT_DEFINED
    availability_requirement: str = NOT_DEFINED
    modified_attack_vector: str = NOT_DEFINED
    modified_attack_complexity: str = NOT_DEFINED
    modified_privileges_required: str = NOT_DEFINED
    modified_user_interaction: str = NOT_DEFINED
    modified_scope: str = NOT_DEFINED
    modified_confidentiality: str = NOT_DEFINED
    modified_integrity: str = NOT_DEFINED
    modified_availability: str = NOT_DEFINED

    def __post_init__(self):
        for metric, attr in FIELD_BY_METRIC.items():
            value = _normalize_value(getattr(self, attr))
            if value not in ALLOWED_VALUES[metric]:
                allowed = ", ".join(ALLOWED_VALUES[metric])
                raise ValueError(f"Invalid {metric} value '{getattr(self, attr)}'. Allowed: {allowed}.")
            object.__setattr__(self, attr, value)

    def metric(self, abbreviation: str) -> str:
        return getattr(self, FIELD_BY_METRIC[abbreviation])

    def has_environmental(self) -> bool:
        return any(self.metric(m) != NOT_DEFINED for m in ENVIRONMENTAL_METRICS)

    def modified(self, abbreviation: str) -> str:
        """Modified base metric with the NotDefined fallback applied."""
        value = self.metric("M" + abbreviation)
        return self.metric(abbreviation) if value == NOT_DEFINED else value

    def with_metrics(self, **metrics: str) -> "CvssVector":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        for abbreviation, value in metrics.items():
            values[FIELD_BY_METRIC[abbreviation]] = value
        return CvssVector(**values)

    def __str__(self) -> str:
        return vector_string(self)


@dataclass(frozen=True)
class Score:
    value: Decimal
    severity: str

    def __str__(self) -> str:
        return f"{self.value} ({self.severity})"


@dataclass(frozen=True)
class RankedList:
    entries: tuple[tuple[int, "ThreatCategory"], ...] = ()

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def ranks(self) -> dict[str, int]:
        return {tc.id: rank for rank, tc in self.entries}

    def categories_at(self, rank: int) -> list["ThreatCategory"]:
        return [tc for r, tc in self.entries if r == rank]

    def distinct_ranks(self) -> list[int]:
        return sorted({rank for rank, _ in self.entries})


def _normalize_value(value: Any) -> str:
    raw = str(value).strip().upper().replace(" ", "")
    return ALIASES.get(raw, raw)


# ==============================================================================
# VECTOR STRINGS
# ==============================================================================

def parse_vector(text: str) -> CvssVector:
    """
    Parses a CVSS v3.1 vector string such as
    'CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H/CR:L'.
    """
    if not isinstance(text, str) or not text.strip():
        raise ValueError("Empty CVSS vector string.")
    parts = text.strip().split("/")
    if parts[0] != CVSS_PREFIX:
        raise ValueError(f"Unsupported vector prefix '{parts[0]}'. Only {CVSS_PREFIX} is supported.")

    metrics: dict[str, str] = {}
    for part in parts[1:]:
        if ":" not in part:
            raise ValueError(f"Malformed metric '{part}' in vector '{text}'.")
        key, value = part.split(":", 1)
        if key not in FIELD_BY_METRIC:
            raise ValueError(f"Unknown metric '{key}' in vector '{text}'.")
        if key in metrics:
            raise ValueError(f"Metric '{key}' appears twice in vector '{text}'.")
        metrics[key] = value

    missing = [m for m in BASE_METRICS if m not in metrics]
    if missing:
        raise ValueError(f"Missing base metrics: {', '.join(missing)}")
    return CvssVector(**{FIELD_BY_METRIC[k]: v for k, v in metrics.items()})


def vector_string(v: CvssVector, include_environmental: bool = True) -> str:
    """Canonical form: base metrics in order, then every defined environmental metric."""
    parts = [CVSS_PREFIX] + [f"{m}:{v.metric(m)}" for m in BASE_METRICS]
    if include_environmental:
        parts += [f"{m}:{v.metric(m)}" for m in ENVIRONMENTAL_METRICS if v.metric(m) != NOT_DEFINED]
    return "/".join(parts)


# ==============================================================================
# SCORING
# ==============================================================================

def roundup(value: Fraction) -> Decimal:
    """
    The v3.1 Roundup: smallest one-decimal number >= value, computed on an
    integer scaled to five decimals so that 8.9/9.0 style boundaries are exact.
    """
    int_input = round(value * 100000)
    if int_input % 10000 == 0:
        result = Decimal(int_input) / Decimal(100000)
    else:
        result = Decimal(int_input // 10000 + 1) / Decimal(10)
    return result.quantize(Decimal("0.1"))


def severity_band(score_value: Any) -> str:
    value = Decimal(str(score_value))
    if value < 0 or value > 10:
        raise ValueError(f"Score {score_value} is outside the range 0.0 - 10.0.")
    if value != value.quantize(Decimal("0.1")):
        raise ValueError(f"Score {score_value} must have exactly one fractional digit.")
    if value == 0:
        return Severity.NONE
    if value <= Decimal("3.9"):
        return Severity.LOW
    if value <= Decimal("6.9"):
        return Severity.MEDIUM
    if value <= Decimal("8.9"):
        return Severity.HIGH
    return Severity.CRITICAL


def _score(value: Decimal) -> Score:
    return Score(value=value, severity=severity_band(value))


def base_subscores(v: CvssVector) -> tuple[Fraction, Fraction, Fraction]:
    """Returns (impact sub-score base ISS, impact, exploitability) as exact fractions."""
    cia = WEIGHTS["CIA"]
    iss = 1 - (1 - cia[v.confidentiality]) * (1 - cia[v.integrity]) * (1 - cia[v.availability])
    if v.scope == "U":
        impact = _F("6.42") * iss
    else:
        impact = _F("7.52") * (iss - _F("0.029")) - _F("3.25") * (iss - _F("0.02")) ** 15
    exploitability = (
        _F("8.22")
        * WEIGHTS["AV"][v.attack_vector]
        * WEIGHTS["AC"][v.attack_complexity]
        * PR_WEIGHTS[v.scope][v.privileges_required]
        * WEIGHTS["UI"][v.user_interaction]
    )
    return iss, impact, exploitability


def base_score(v: CvssVector) -> Score:
    _, impact, exploitability = base_subscores(v)
    if impact <= 0:
        return _score(Decimal("0.0"))
    if v.scope == "U":
        return _score(roundup(min(impact + exploitability, TEN)))
    return _score(roundup(min(_F("1.08") * (impact + exploitability), TEN)))


def environmental_score(v: CvssVector) -> Score:
    """
    Environmental score per the v3.1 equations. Modified metrics left at
    NotDefined take the base value; requirements at NotDefined weigh 1.
    A vector with no environmental metric defined scores as its base.
    """
    if not v.has_environmental():
        return base_score(v)

    cia = WEIGHTS["CIA"]
    req = WEIGHTS["REQ"]
    scope = v.modified("S")

    miss = min(
        1
        - (1 - req[v.confidentiality_requirement] * cia[v.modified("C")])
        * (1 - req[v.integrity_requirement] * cia[v.modified("I")])
        * (1 - req[v.availability_requirement] * cia[v.modified("A")]),
        MISS_CAP,
    )
    if scope == "U":
        impact = _F("6.42") * miss
    else:
        impact = _F("7.52") * (miss - _F("0.029")) - _F("3.25") * (miss * _F("0.9731") - _F("0.02")) ** 13

    exploitability = (
        _F("8.22")
        * WEIGHTS["AV"][v.modified("AV")]
        * WEIGHTS["AC"][v.modified("AC")]
        * PR_WEIGHTS[scope][v.modified("PR")]
        * WEIGHTS["UI"][v.modified("UI")]
    )

    if impact <= 0:
        return _score(Decimal("0.0"))
    # The published formula rounds twice; Roundup of a one-decimal value is itself.
    if scope == "U":
        return _score(roundup(min(impact + exploitability, TEN)))
    return _score(roundup(min(_F("1.08") * (impact + exploitability), TEN)))


# ==============================================================================
# RANKING
# ==============================================================================

def rank_categories(tcs: Iterable["ThreatCategory"]) -> RankedList:
    """
    Dense ranking by base score, highest first. Equal base scores share a
    rank; inside a rank categories are ordered by id (TC1 before TC2).
    """
    ordered = sorted(tcs, key=lambda tc: (-Decimal(str(tc.base_score)), natural_key(tc.id)))
    entries = []
    rank = 0
    previous = None
    for tc in ordered:
        score = Decimal(str(tc.base_score))
        if score != previous:
            rank += 1
            previous = score
        entries.append((rank, tc))
    return RankedList(entries=tuple(entries))


def impact_direction(tc: "ThreatCategory") -> str:
    base = Decimal(str(tc.base_score))
    overall = Decimal(str(tc.overall_score))
    if overall > base:
        return ImpactDirection.HIGHER_THAN_ASSUMED
    if overall < base:
        return ImpactDirection.LOWER_THAN_ASSUMED
    return ImpactDirection.AS_ASSUMED
