import logging
from decimal import Decimal
from typing import Any, Optional, Sequence

import pandas as pd
import yaml

from processors import settings
from processors.cvss_engine import ImpactDirection
from processors.identifiers import sorted_ids
from processors.pipeline_engine import AssessmentReport, report_to_document

logger = logging.getLogger(__name__)


class ReportFormat:
    TEXT = "text"
    STRUCTURED = "structured"
    DOT = "dot"

    ALL = (TEXT, STRUCTURED, DOT)


DIRECTION_LABELS = {
    ImpactDirection.HIGHER_THAN_ASSUMED: "overall above base",
    ImpactDirection.LOWER_THAN_ASSUMED: "overall below base",
    ImpactDirection.AS_ASSUMED: "overall equals base",
}


def format_score(value: Decimal, decimal_comma: bool = False) -> str:
    text = f"{Decimal(value):.1f}"
    return text.replace(".", ",") if decimal_comma else text


def _format_metric(name: str, value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.1f}" if value.is_integer() else f"{value:g}"
    if isinstance(value, (list, tuple)):
        if name == "credential_found":
            return ":".join(str(v) for v in value)
        return ",".join(":".join(str(x) for x in v) if isinstance(v, (list, tuple)) else str(v) for v in value) or "-"
    return str(value)


# ==============================================================================
# TABLES
# ==============================================================================

def ranking_frame(report: AssessmentReport, decimal_comma: bool = False) -> pd.DataFrame:
    """The ranked TC table: one row per category, highest rank first."""
    rows = [
        {
            "Rank": rank,
            "TC": tc.id,
            "Name": tc.name,
            "Base": format_score(tc.base_score, decimal_comma),
            "Overall": format_score(tc.overall_score, decimal_comma),
            "Severity": tc.severity,
        }
        for rank, tc in report.stage2.ranked
    ]
    return pd.DataFrame(rows, columns=["Rank", "TC", "Name", "Base", "Overall", "Severity"])


def attack_frame(report: AssessmentReport) -> pd.DataFrame:
    rows = [
        {
            "Scenario": r.scenario.id,
            "Kind": r.scenario.kind,
            "TC": r.verdict.tc_id,
            "Succeeded": "yes" if r.outcome.succeeded else "no",
            "Impact": r.verdict.observed_impact,
            "Expected": r.verdict.expectation,
            "Consistent": "yes" if r.verdict.consistent else "no",
        }
        for r in report.stage3
    ]
    return pd.DataFrame(rows, columns=["Scenario", "Kind", "TC", "Succeeded", "Impact", "Expected", "Consistent"])


def plan_frame(report: AssessmentReport) -> pd.DataFrame:
    rows = []
    for e in report.stage4.entries:
        if e.specific is not None:
            note = ""
        elif e.inapplicable:
            note = f"{', '.join(e.inapplicable)} n/a, central solution required"
        else:
            note = "no specific mitigation, central solution required"
        rows.append({
            "Threat": e.threat_id,
            "Specific": e.specific.id if e.specific else "-",
            "Central": ", ".join(c.id for c in e.central) or "-",
            "Note": note,
        })
    return pd.DataFrame(rows, columns=["Threat", "Specific", "Central", "Note"])


def _table(frame: pd.DataFrame) -> str:
    """Left-aligned columns, two spaces apart, no trailing blanks."""
    rows = [[str(c) for c in frame.columns]]
    rows += [[str(v) for v in record] for record in frame.itertuples(index=False, name=None)]
    widths = [max(len(row[i]) for row in rows) for i in range(len(frame.columns))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows)


# ==============================================================================
# RENDERERS
# ==============================================================================

def render_text(report: AssessmentReport, decimal_comma: Optional[bool] = None) -> str:
    """
    Human-readable report: metadata, the four stage sections in order and
    the ranked TC table in the CVSS results layout.

    Args:
        report: The assessment to render. It is not modified.
        decimal_comma: Print scores as 9,0 instead of 9.0; defaults to SDNSEC_DECIMAL_COMMA.
    """
    decimal_comma = settings.DECIMAL_COMMA if decimal_comma is None else decimal_comma
    m = report.metadata
    lines = [
        "SDN SECURITY ASSESSMENT",
        f"Catalog {m.catalog_version} | Topology {m.topology_name} | Seed {m.seed} | "
        f"Hardening {', '.join(m.hardening) or 'none'} | Generated {m.timestamp}",
        "",
        "== Stage 1: Threat findings ==",
    ]
    for surface in report.stage1.surfaces:
        lines.append(f"{surface}: {', '.join(report.stage1.threats_on(surface))}")
    lines.append(f"Threats: {len(report.stage1.threat_ids)} over {len(report.stage1.surfaces)} surface(s)")
    for root_id, members in report.stage1.root_summary.items():
        lines.append(f"Root threat {root_id}: {', '.join(members)}")
    for category, members in report.stage1.stride.items():
        lines.append(f"STRIDE {category}: {', '.join(members) or '-'}")

    lines += ["", "== Stage 2: CVSS results ordered by TC severity =="]
    if len(report.stage2.ranked):
        lines.append(_table(ranking_frame(report, decimal_comma)))
        for direction, label in DIRECTION_LABELS.items():
            ids = sorted_ids(tc for tc, d in report.stage2.directions.items() if d == direction)
            if ids:
                lines.append(f"{label}: {', '.join(ids)}")
    else:
        lines.append("no threat categories")

    lines += ["", "== Stage 3: Attack simulation =="]
    if report.stage3:
        lines.append(_table(attack_frame(report)))
        for r in report.stage3:
            metrics = " ".join(f"{k}={_format_metric(k, v)}" for k, v in r.outcome.metrics.items())
            lines.append(f"{r.scenario.id}: {metrics}")
            lines.append(f"{r.scenario.id}: {r.verdict.notes}")
    else:
        lines.append("skipped")

    lines += ["", "== Stage 4: Mitigation plan =="]
    if report.stage4.entries:
        lines.append(_table(plan_frame(report)))
    else:
        lines.append("no threats to mitigate")
    if report.stage4.central_required:
        lines.append(f"Central solution required: yes ({', '.join(report.stage4.central_solutions)})")
    else:
        lines.append("Central solution required: no")
    return "\n".join(lines) + "\n"


def render_structured(report: AssessmentReport) -> str:
    return yaml.safe_dump(report_to_document(report), sort_keys=False, allow_unicode=True)


def _quote(node_id: str) -> str:
    return '"' + node_id.replace('"', '\\"') + '"'


def render_dot(report: AssessmentReport) -> str:
    """
    Correlation map as a Graphviz digraph: vulnerability -> threat ->
    mitigation edges, with central solutions as their own node group.
    Edges to inapplicable mitigations are dashed.
    """
    vulns: set[str] = set()
    threats = report.stage1.threat_ids
    specific: set[str] = set()
    central: dict[str, str] = {}
    edges: list[str] = []

    for tid in threats:
        for vid in report.stage1.vulnerabilities_of(tid):
            vulns.add(vid)
            edges.append(f"  {_quote(vid)} -> {_quote(tid)};")
    for e in report.stage4.entries:
        if e.specific is not None:
            specific.add(e.specific.id)
            edges.append(f"  {_quote(e.threat_id)} -> {_quote(e.specific.id)};")
        for mid in e.inapplicable:
            specific.add(mid)
            edges.append(f"  {_quote(e.threat_id)} -> {_quote(mid)} [style=dashed, label=\"n/a\"];")
        for c in e.central:
            central[c.id] = c.name
            edges.append(f"  {_quote(e.threat_id)} -> {_quote(c.id)} [color=blue];")

    lines = ["digraph correlation_map {", "  rankdir=LR;", "  node [shape=box];"]
    lines += [f"  {_quote(v)} [shape=ellipse];" for v in sorted_ids(vulns)]
    lines += [f"  {_quote(t)} [shape=diamond];" for t in threats]
    lines += [f"  {_quote(mid)};" for mid in sorted_ids(specific)]
    for cid in sorted_ids(central):
        label = f"{cid}\\n{central[cid]}" if central[cid] else cid
        lines.append(f"  {_quote(cid)} [shape=box3d, label=\"{label}\"];")
    lines += edges
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_report(report: AssessmentReport, fmt: str = ReportFormat.TEXT, decimal_comma: Optional[bool] = None) -> str:
    """Renders the report in one of the ReportFormat formats; rendering never changes the report."""
    logger.info(f"Rendering report as {fmt}")
    if fmt == ReportFormat.TEXT:
        return render_text(report, decimal_comma)
    elif fmt == ReportFormat.STRUCTURED:
        return render_structured(report)
    elif fmt == ReportFormat.DOT:
        return render_dot(report)
    raise ValueError(f"Unknown report format '{fmt}'. Expected one of: {', '.join(ReportFormat.ALL)}")
