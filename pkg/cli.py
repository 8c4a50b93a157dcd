import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd
import yaml

from attacks.attack_engine import execute
from attacks.scenarios import load_scenarios, verdict
from processors import settings
from processors.catalog_validator import validate_catalog
from processors.cvss_engine import base_score, environmental_score, parse_vector
from processors.errors import (
    CatalogSchemaError,
    DanglingReferenceError,
    DuplicateIdError,
    HardeningError,
    ScenarioError,
    SimulationError,
    TopologyError,
    UnknownIdError,
)
from processors.knowledge_base import find_threats, load_catalog
from processors.pipeline_engine import load_report, run_assessment, to_plain
from processors.report_formatter import ReportFormat, render_report
from simulation.simnet import export_trace
from simulation.topology import apply_hardening_set, resolve_topology

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SCENARIO = 3
EXIT_IO = 4

SCENARIO_CHOICES = ("brute-force", "brute-force-slow", "mitm", "dos")


def _split_ids(value: Optional[str]) -> list[str]:
    return [v.strip() for v in (value or "").split(",") if v.strip()]


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        logger.info(f"Wrote {out}")
    else:
        sys.stdout.write(text)


# ==============================================================================
# SUBCOMMANDS
# ==============================================================================

def cmd_kb_validate(args) -> int:
    catalog = load_catalog(settings.resolve_kb_path(args.kb))
    report = validate_catalog(catalog)
    print(pd.DataFrame(report.as_rows()).to_string(index=False, justify="left"))
    for v in report.violations:
        print(f"{v.check} {v.record_id}: {v.message}")
    if not report.ok:
        print(f"Catalog INVALID: {len(report.violations)} violation(s)")
        return EXIT_VALIDATION
    print(f"Catalog {catalog.catalog_version} OK")
    return EXIT_OK


def _load_valid_catalog(kb: Optional[str]):
    """The catalog, or None after reporting its violations on stderr."""
    catalog = load_catalog(settings.resolve_kb_path(kb))
    report = validate_catalog(catalog)
    if report.ok:
        return catalog
    for v in report.violations:
        print(f"[INVALID] {v.check} {v.record_id}: {v.message}", file=sys.stderr)
    logger.error(f"Catalog {catalog.catalog_version} has {len(report.violations)} violation(s); fix it or check it with `kb validate`")
    return None


def cmd_kb_search(args) -> int:
    catalog = load_catalog(settings.resolve_kb_path(args.kb))
    matches = find_threats(catalog, args.text, limit=args.limit)
    if not matches:
        print("No matching threats")
        return EXIT_OK
    for threat, score in matches:
        print(f"{threat.id}\t{score}\t{threat.name}")
    return EXIT_OK


def cmd_score(args) -> int:
    vector = parse_vector(args.vector)
    base = base_score(vector)
    print(f"Base: {base.value} {base.severity}")
    if args.env:
        env = environmental_score(vector)
        print(f"Environmental: {env.value} {env.severity}")
    return EXIT_OK


def cmd_assess(args) -> int:
    catalog = _load_valid_catalog(args.kb)
    if catalog is None:
        return EXIT_VALIDATION
    topology = resolve_topology(args.topology)
    report = run_assessment(
        catalog,
        topology,
        k=args.attacks,
        seed=args.seed,
        hardening=_split_ids(args.harden),
        max_workers=args.workers,
    )
    _write(render_report(report, args.format), args.out)
    if args.trace:
        Path(args.trace).write_text("".join(export_trace(r.outcome.trace) for r in report.stage3), encoding="utf-8")
    return EXIT_OK


def cmd_attack(args) -> int:
    catalog = _load_valid_catalog(args.kb)
    if catalog is None:
        return EXIT_VALIDATION
    scenario_id = args.scenario.replace("-", "_")
    library = {s.id: s for s in load_scenarios()}
    if scenario_id not in library:
        raise ScenarioError(f"No scenario '{args.scenario}' in {settings.SCENARIO_DIR}")
    scenario = library[scenario_id]

    topology = apply_hardening_set(resolve_topology(args.topology), _split_ids(args.harden), catalog)
    outcome = execute(topology, scenario, args.seed)
    result = verdict(outcome, catalog)

    document = {
        "scenario": scenario.id,
        "kind": scenario.kind,
        "target_tc": scenario.target_tc,
        "seed": args.seed,
        "hardening": list(topology.hardening),
        "succeeded": outcome.succeeded,
        "metrics": to_plain(dict(outcome.metrics)),
        "verdict": {
            "expectation": result.expectation,
            "observed_impact": result.observed_impact,
            "consistent": result.consistent,
        },
    }
    sys.stdout.write(yaml.safe_dump(document, sort_keys=False))
    if args.trace:
        Path(args.trace).write_text(export_trace(outcome.trace), encoding="utf-8")
    return EXIT_OK


def cmd_report(args) -> int:
    report = load_report(args.input)
    _write(render_report(report, args.format), args.out)
    return EXIT_OK


# ==============================================================================
# PARSER
# ==============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdnsec", description="SDN architecture security evaluation")
    parser.add_argument("--log-level", default=None, help="Logging level (default: SDNSEC_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    kb = sub.add_parser("kb", help="Threat catalog commands")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)
    p = kb_sub.add_parser("validate", help="Validate the threat catalog")
    p.add_argument("--kb", help="Catalog path (default: SDNSEC_KB or the shipped catalog)")
    p.set_defaults(func=cmd_kb_validate)
    p = kb_sub.add_parser("search", help="Fuzzy search threats by name or description")
    p.add_argument("text")
    p.add_argument("--kb")
    p.add_argument("--limit", type=int, default=5)
    p.set_defaults(func=cmd_kb_search)

    p = sub.add_parser("score", help="Score a CVSS v3.1 vector")
    p.add_argument("--vector", required=True)
    p.add_argument("--env", action="store_true", help="Also print the environmental score")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("assess", help="Run the four-stage assessment")
    p.add_argument("--kb")
    p.add_argument("--topology", default="builtin", help="Topology file, or 'builtin' for the default testbed")
    p.add_argument("--attacks", type=int, default=3, help="Number of top ranks to simulate (0 skips simulation)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--harden", help="Comma-separated mitigation ids, e.g. M6,M8,M13")
    p.add_argument("--format", choices=ReportFormat.ALL, default=ReportFormat.TEXT)
    p.add_argument("--out")
    p.add_argument("--trace", help="Write the Stage 3 trace slices to this file")
    p.add_argument("--workers", type=int, default=None, help="Run Stage 3 scenarios on this many threads")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("attack", help="Run a single attack scenario")
    p.add_argument("--scenario", required=True, choices=SCENARIO_CHOICES)
    p.add_argument("--kb")
    p.add_argument("--topology", default="builtin")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--harden")
    p.add_argument("--trace")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("report", help="Re-render a Structured report")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=ReportFormat.ALL, default=ReportFormat.TEXT)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging(args.log_level)
    if getattr(args, "topology", None) == "builtin":
        args.topology = "default"
    try:
        return args.func(args)
    except (ScenarioError, HardeningError, SimulationError) as e:
        logger.error(str(e))
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_SCENARIO
    except (CatalogSchemaError, DanglingReferenceError, DuplicateIdError, UnknownIdError, TopologyError,
            OSError, yaml.YAMLError, ValueError) as e:
        logger.error(str(e))
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
