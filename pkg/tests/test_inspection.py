"""Diagnosis: species scaling, coordination environments, classification."""

import random
from fractions import Fraction

import pytest

import errorgen
import geometry
from conftest import DATA, kinds, reference_for, subgraph_table
from mofcurator.cif import parse_cif
from mofcurator.crystal import BondPolicy, build_graph
from mofcurator.inspection import (
    MissingAnchor,
    choose_anchor,
    coordination_env_test,
    diagnose,
    species_scaling_test,
    subgraph_match_test,
)
from mofcurator.matching import heavy_view
from mofcurator.smiles import parse_smiles
from mofcurator.sources import RecordStore


def test_choose_anchor_rarest_then_heaviest():
    ref = {"C": 33, "Dy": 2, "O": 15, "N": 1}
    assert choose_anchor({"C": 66, "Dy": 4, "O": 30, "N": 2}, ref) == "N"
    # elements absent from either side never anchor
    assert choose_anchor({"C": 66, "Dy": 4, "Zr": 1}, ref) == "Dy"
    with pytest.raises(MissingAnchor):
        choose_anchor({"Zr": 6}, ref)


def test_choose_anchor_tie_breaks_heavier():
    assert choose_anchor({"N": 8, "Dy": 8}, {"N": 1, "Dy": 1}) == "Dy"


def test_species_scaling_exact_multiple():
    ref = {"C": 3, "H": 7, "N": 1, "O": 1}
    result = species_scaling_test({"C": 6, "H": 14, "N": 2, "O": 2}, ref, "N")
    assert result.factor == Fraction(2)
    assert result.passed


def test_species_scaling_fractional_factor():
    result = species_scaling_test({"O": 1, "H": 2}, {"O": 2, "H": 4}, "O")
    assert result.factor == Fraction(1, 2)
    assert result.passed


def test_species_scaling_reports_mismatches_both_ways():
    ref = {"C": 1, "O": 2, "H": 4}
    result = species_scaling_test({"C": 2, "O": 3, "H": 8, "S": 1}, ref, "C")
    assert result.factor == Fraction(2)
    mm = {el: (e, f) for el, e, f in result.mismatches}
    assert mm == {"O": (Fraction(4), 3), "S": (Fraction(0), 1)}


def test_species_scaling_scales_with_cell_multiplication():
    ref = {"C": 3, "H": 7, "N": 1, "O": 1}
    found = {"C": 3, "H": 7, "N": 1, "O": 1}
    for m in (1, 2, 5):
        scaled = {el: m * n for el, n in found.items()}
        result = species_scaling_test(scaled, ref, "N")
        assert result.factor == Fraction(m) and result.passed


def test_coordination_clean_fixture_no_diffs():
    s = geometry.dmf_box()
    ref = reference_for("2(DMF)")
    graph = build_graph(s, BondPolicy())
    assert coordination_env_test(graph, ref, Fraction(1)) == []


def test_coordination_metal_neighbors_are_wildcards():
    # the formula never says what Zn binds, so the framework's Zn-O bonds
    # must not count against the reference
    s = geometry.zno_framework()
    ref = reference_for(geometry.ZNO_FORMULA)
    graph = build_graph(s, BondPolicy())
    assert coordination_env_test(graph, ref, Fraction(1)) == []


def test_coordination_flags_missing_hydrogen():
    s = errorgen.delete_random_hydrogen(geometry.dmf_box(), random.Random(5))
    ref = reference_for("2(DMF)")
    graph = build_graph(s, BondPolicy())
    diffs = coordination_env_test(graph, ref, Fraction(1))
    assert diffs
    for d in diffs:
        stripped = [x for x in d.label.neighbor_elements if x != "H"]
        assert d.label.element == "H" or len(stripped) < len(d.label.neighbor_elements) or (
            d.expected != d.found
        )


def test_subgraph_match_counts():
    s = geometry.water_box(n=2)
    graph = build_graph(s, BondPolicy())
    skeleton, _, _ = parse_smiles("O").heavy_skeleton()
    result = subgraph_match_test(graph, skeleton, expected=2, name="water")
    assert (result.expected, result.found) == (2, 2)
    assert len(result.matches) == 2


def test_subgraph_match_excluded_sites():
    s = geometry.water_box(n=2)
    graph = build_graph(s, BondPolicy())
    skeleton, _, _ = parse_smiles("O").heavy_skeleton()
    first = subgraph_match_test(graph, skeleton, expected=2, name="water")
    taken = set(next(iter(first.matches)))
    second = subgraph_match_test(
        graph, skeleton, expected=2, name="water", excluded_sites=taken
    )
    assert second.found == 1


def test_diagnose_clean():
    report = diagnose(geometry.benzoic_box(with_water=True), reference_for("benzoic_acid·H2O"))
    assert report.clean and report.severity is None
    assert report.scaling.passed


def test_diagnose_committed_store_classification():
    """Every seeded error in the curation store diagnoses as its kind."""
    store = RecordStore(DATA / "curate_store")
    expected = {"QQBND": "bond", "QQHYD": "hydrogen", "QQDIS": "disorder"}
    checked = 0
    for refcode in store.refcodes():
        if not store.has_cif("csd", refcode):
            continue
        record = store.lookup_refcode(refcode)
        structure = parse_cif(store.cif_path("csd", refcode).read_text())
        report = diagnose(structure, reference_for(record.structural_formula))
        assert kinds(report) == [expected[refcode[:5]]], refcode
        assert report.severity == expected[refcode[:5]]
        checked += 1
    assert checked == 10


def test_diagnose_severity_disorder_dominates():
    s = errorgen.duplicate_fragment(
        geometry.benzoic_box(with_water=True), component_index=1
    )
    s = errorgen.delete_random_hydrogen(s, random.Random(3))
    report = diagnose(s, reference_for("benzoic_acid·H2O"))
    assert not report.clean
    assert "disorder" in kinds(report)
    assert report.severity == "disorder"


def test_diagnose_worked_example_summary():
    structure = parse_cif((DATA / "store" / "csd" / "PICLAS.cif").read_text())
    ref = reference_for(geometry.PICLAS_FORMULA, geometry.PICLAS_ABBREVIATIONS)
    report = diagnose(structure, ref)
    assert report.scaling.factor == Fraction(4)
    assert subgraph_table(report) == {
        "btpdc": (12, 16),
        "DMF": (4, 8),
        "H2O": (8, 8),
        "Dy": (8, 8),
    }
    text = report.to_text()
    assert "status: errors" in text and "severity: disorder" in text


def test_diagnose_occupancy_only_disorder():
    # full duplicate at partial occupancy, no broken bonds, no missing atoms
    s = geometry.assemble(
        geometry.cubic(14.0),
        [
            (geometry.water(), (3.0, 3.0, 3.0), 0.5, 1),
            (geometry.water(), (3.0, 3.0, 6.0), 0.5, 2),
        ],
    )
    report = diagnose(s, reference_for("H2O"))
    assert kinds(report) == ["disorder"]
