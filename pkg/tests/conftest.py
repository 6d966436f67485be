"""Shared test plumbing: fixture paths and reference-graph shortcuts."""

import sys
from pathlib import Path

TESTS = Path(__file__).parent
DATA = TESTS / "data"

# geometry/errorgen/agent_script live next to the tests, not in the package
sys.path.insert(0, str(TESTS))

from mofcurator.formula import parse_structural_formula
from mofcurator.refgraph import build_reference_graph


def reference_for(formula: str, abbreviations: dict | None = None):
    return build_reference_graph(parse_structural_formula(formula), abbreviations or {})


def kinds(report) -> list[str]:
    return sorted({e.kind for e in report.errors})


def subgraph_table(report) -> dict:
    return {r.name: (r.expected, r.found) for r in report.subgraph_counts}
