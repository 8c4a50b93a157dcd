import re
from datetime import datetime, timezone
from decimal import Decimal
from pathlib import Path

import pytest
import yaml

from processors.pipeline_engine import run_assessment
from processors.report_formatter import (
    ReportFormat,
    attack_frame,
    format_score,
    plan_frame,
    ranking_frame,
    render_report,
)
from simulation.topology import default_testbed

GOLDEN_DIR = Path(__file__).parent / "golden"

NODE_LINE = re.compile(r'^  "([^"]+)"( \[.*\])?;$')
EDGE_LINE = re.compile(r'^  "([^"]+)" -> "([^"]+)"( \[.*\])?;$')


@pytest.fixture(scope="module")
def report(catalog):
    return run_assessment(catalog, default_testbed(), k=3, seed=42, clock=lambda: datetime(2024, 1, 1, tzinfo=timezone.utc))


@pytest.fixture(scope="module")
def catalog_only(catalog):
    return run_assessment(catalog, default_testbed(), k=0, clock=lambda: datetime(2024, 1, 1, tzinfo=timezone.utc))


def parse_dot(text):
    nodes, edges = {}, []
    for line in text.splitlines():
        edge = EDGE_LINE.match(line)
        if edge:
            edges.append((edge.group(1), edge.group(2), edge.group(3) or ""))
            continue
        node = NODE_LINE.match(line)
        if node:
            nodes[node.group(1)] = node.group(2) or ""
    return nodes, edges


# =============================================================================
# Scores and tables
# =============================================================================

class TestFormatting:

    @pytest.mark.parametrize("value,comma,expected", [
        ("9.0", False, "9.0"),
        ("9.0", True, "9,0"),
        ("10", False, "10.0"),
        ("3.7", True, "3,7"),
    ])
    def test_format_score(self, value, comma, expected):
        assert format_score(Decimal(value), comma) == expected

    def test_ranking_frame(self, report):
        frame = ranking_frame(report)
        assert list(frame.columns) == ["Rank", "TC", "Name", "Base", "Overall", "Severity"]
        assert frame.iloc[0][["Rank", "TC", "Base", "Overall", "Severity"]].tolist() == [1, "TC1", "9.0", "7.9", "Critical"]
        assert frame["TC"].tolist()[-1] == "TC14"

    def test_attack_frame(self, report):
        frame = attack_frame(report)
        assert frame["Scenario"].tolist() == ["brute_force", "mitm", "dos"]
        assert set(frame["Consistent"]) == {"yes"}

    def test_plan_frame_flags_inapplicable_mitigations(self, report):
        frame = plan_frame(report).set_index("Threat")
        assert frame.loc["T5", "Specific"] == "-"
        assert frame.loc["T5", "Note"] == "M5 n/a, central solution required"
        assert frame.loc["T1", "Specific"] == "M1"


# =============================================================================
# Text
# =============================================================================

class TestText:

    def test_sections_in_order(self, report):
        text = render_report(report, ReportFormat.TEXT)
        positions = [text.index(f"== Stage {n}:") for n in range(1, 5)]
        assert positions == sorted(positions)
        assert text.startswith("SDN SECURITY ASSESSMENT\n")

    def test_first_ranking_row(self, report):
        lines = render_report(report, ReportFormat.TEXT).splitlines()
        header = next(i for i, line in enumerate(lines) if line.split()[:2] == ["Rank", "TC"])
        row = lines[header + 1].split()
        assert row[:2] == ["1", "TC1"]
        assert row[-3:] == ["9.0", "7.9", "Critical"]

    def test_decimal_comma(self, report):
        text = render_report(report, ReportFormat.TEXT, decimal_comma=True)
        assert "9,0" in text
        assert " 9.0 " not in text

    def test_skipped_simulation(self, catalog_only):
        text = render_report(catalog_only, ReportFormat.TEXT)
        stage3 = text.split("== Stage 3: Attack simulation ==\n")[1]
        assert stage3.startswith("skipped\n")

    def test_central_solution_line(self, report):
        assert "Central solution required: yes (CS2, CS3)" in render_report(report, ReportFormat.TEXT)

    def test_metrics_are_listed(self, report):
        text = render_report(report, ReportFormat.TEXT)
        assert "credential_found=onos:rocks" in text
        assert "time_to_crack=4.0" in text
        assert "domains_destroyed=3" in text

    def test_golden(self, report, golden):
        golden("assessment_seed42.txt", render_report(report, ReportFormat.TEXT, decimal_comma=False))

    @pytest.mark.parametrize("name", ["assessment_seed42.txt", "assessment_seed42.dot"])
    def test_goldens_are_checked_in(self, name):
        assert (GOLDEN_DIR / name).is_file()

    def test_tables_are_padded_to_the_widest_cell(self, report):
        lines = render_report(report, ReportFormat.TEXT, decimal_comma=False).splitlines()
        start = lines.index("== Stage 4: Mitigation plan ==") + 1
        assert lines[start] == "Threat  Specific  Central   Note"
        assert lines[start + 1] == "T1      M1        -"
        assert lines[start + 5] == "T5      -         CS2       M5 n/a, central solution required"


# =============================================================================
# Structured and DOT
# =============================================================================

class TestStructured:

    def test_is_yaml_with_every_stage(self, report):
        document = yaml.safe_load(render_report(report, ReportFormat.STRUCTURED))
        assert document["kind"] == "assessment_report"
        assert [row["id"] for row in document["stage2"]][:3] == ["TC1", "TC2", "TC3"]
        assert document["stage2"][0]["base_score"] == "9.0"
        assert [r["scenario"]["id"] for r in document["stage3"]] == ["brute_force", "mitm", "dos"]
        assert document["stage4"]["central_required"] is True

    def test_catalog_only_has_empty_stage3(self, catalog_only):
        document = yaml.safe_load(render_report(catalog_only, ReportFormat.STRUCTURED))
        assert document["stage3"] == []


class TestDot:

    def test_correlation_map_nodes(self, report):
        nodes, _ = parse_dot(render_report(report, ReportFormat.DOT))
        assert len(nodes) == 57
        assert sum("ellipse" in attrs for attrs in nodes.values()) == 18
        assert sum("diamond" in attrs for attrs in nodes.values()) == 18
        assert sum("box3d" in attrs for attrs in nodes.values()) == 3

    def test_every_threat_has_edges_both_ways(self, report):
        nodes, edges = parse_dot(render_report(report, ReportFormat.DOT))
        threats = [n for n, attrs in nodes.items() if "diamond" in attrs]
        for tid in threats:
            assert any(b == tid for _, b, _ in edges), tid
            assert any(a == tid for a, _, _ in edges), tid

    def test_inapplicable_edges_are_dashed(self, report):
        _, edges = parse_dot(render_report(report, ReportFormat.DOT))
        dashed = {(a, b) for a, b, attrs in edges if "dashed" in attrs}
        assert dashed == {("T5", "M5"), ("T7", "M7")}

    def test_every_edge_points_at_a_declared_node(self, report):
        nodes, edges = parse_dot(render_report(report, ReportFormat.DOT))
        for a, b, _ in edges:
            assert a in nodes and b in nodes

    def test_golden(self, report, golden):
        golden("assessment_seed42.dot", render_report(report, ReportFormat.DOT))


class TestRendering:

    @pytest.mark.parametrize("fmt", ReportFormat.ALL)
    def test_rendering_is_repeatable(self, report, fmt):
        assert render_report(report, fmt) == render_report(report, fmt)

    def test_unknown_format(self, report):
        with pytest.raises(ValueError):
            render_report(report, "pdf")
