"""Repair stages: disorder enumeration, bond search, hydrogen assignment,
chemical rules, and candidate ranking."""

import itertools
import random

import numpy as np
import pytest

import errorgen
import geometry
from conftest import DATA, kinds, reference_for
from mofcurator.cif import parse_cif
from mofcurator.crystal import BondPolicy, build_graph, min_image_distance
from mofcurator.energy import LennardJonesModel, ModelFailure
from mofcurator.inspection import diagnose
from mofcurator.repair import (
    BondSearchExhausted,
    CandidateExplosion,
    apply_chemical_rules,
    correct_bonds,
    correct_hydrogens,
    enumerate_disorder_candidates,
    rank_candidates,
    repair_all,
    structure_hash,
)
from mofcurator.rules import find_motifs, load_rules
from mofcurator.sources import RecordStore


# ---------------------------------------------------------------------------
# disorder

def grouped_waters():
    return geometry.assemble(
        geometry.cubic(14.0),
        [
            (geometry.water(), (3.0, 3.0, 3.0), 0.5, 1),
            (geometry.water(), (3.0, 3.0, 6.0), 0.5, 2),
        ],
    )


def test_disorder_grouped_two_way():
    cands = enumerate_disorder_candidates(grouped_waters(), reference_for("H2O"), BondPolicy())
    assert len(cands) == 2
    for c in cands:
        assert c.element_counts() == {"O": 1, "H": 2}
        assert all(s.occupancy == 1.0 and s.disorder_group is None for s in c.sites)


def test_disorder_untagged_duplicate():
    s = errorgen.duplicate_fragment(
        geometry.benzoic_box(with_water=True), component_index=1
    )
    cands = enumerate_disorder_candidates(s, reference_for("benzoic_acid·H2O"), BondPolicy())
    assert len(cands) == 2
    for c in cands:
        assert c.element_counts() == {"C": 7, "H": 8, "O": 3}
        assert diagnose(c, reference_for("benzoic_acid·H2O")).clean


def test_disorder_clean_structure_is_identity():
    (only,) = enumerate_disorder_candidates(
        geometry.water_box(n=2), reference_for("H2O"), BondPolicy()
    )
    assert only.element_counts() == {"O": 2, "H": 4}


def test_disorder_candidate_explosion_carries_partial():
    placements = []
    for i in range(9):  # 2^9 selections blows the 256 cap
        x = 4.0 + (i % 3) * 12.0
        y = 4.0 + (i // 3) * 12.0
        placements.append((geometry.water(), (x, y, 10.0), 0.5, None))
        placements.append((geometry.water(), (x, y, 13.0), 0.5, None))
    big = geometry.assemble(geometry.cubic(40.0), placements)
    with pytest.raises(CandidateExplosion) as exc:
        enumerate_disorder_candidates(big, reference_for("H2O"), BondPolicy())
    assert len(exc.value.candidates) == 256


# ---------------------------------------------------------------------------
# ranking

def test_rank_candidates_input_order_free():
    cands = [
        errorgen.duplicate_fragment(geometry.water_box(n=2), component_index=i)
        for i in (0, 1)
    ] + [geometry.water_box(n=2), geometry.water_box(n=4)]
    model = LennardJonesModel()
    ranked = rank_candidates(cands, model)
    shuffled = list(cands)
    random.Random(7).shuffle(shuffled)
    again = rank_candidates(shuffled, model)
    assert [structure_hash(c) for c, _ in ranked] == [
        structure_hash(c) for c, _ in again
    ]
    energies = [e for _, e in ranked]
    assert energies == sorted(energies)


def test_rank_candidates_failures_last():
    import dataclasses

    bad = geometry.water_box(n=1)
    bad.sites = bad.sites + [
        dataclasses.replace(s, label=s.label + "X") for s in bad.sites
    ]  # coincident copies
    good = geometry.water_box(n=1)
    ranked = rank_candidates([bad, good], LennardJonesModel())
    assert structure_hash(ranked[0][0]) == structure_hash(good)
    assert ranked[1][1] == float("inf")


# ---------------------------------------------------------------------------
# bonds

def test_correct_bonds_stretched_lattice():
    broken = errorgen.stretch_lattice(geometry.benzoic_box(with_water=False), 1.20)
    ref = reference_for("benzoic_acid")
    assert kinds(diagnose(broken, ref)) == ["bond"]
    outcome = correct_bonds(broken, ref)
    assert outcome.log
    assert outcome.corrected.explicit_bonds  # found parameters baked in
    assert outcome.policy is not None and outcome.policy.trust_explicit
    assert diagnose(outcome.corrected, ref, outcome.policy).clean


def test_correct_bonds_never_moves_atoms():
    broken = errorgen.stretch_lattice(geometry.dmf_box(), 1.20)
    outcome = correct_bonds(broken, reference_for("2(DMF)"))
    assert len(outcome.corrected.sites) == len(broken.sites)
    for a, b in zip(broken.sites, outcome.corrected.sites):
        assert a.frac == b.frac and a.element == b.element


def test_correct_bonds_exhausted():
    broken = errorgen.stretch_lattice(geometry.benzoic_box(with_water=False), 2.0)
    with pytest.raises(BondSearchExhausted):
        correct_bonds(broken, reference_for("benzoic_acid"))


# ---------------------------------------------------------------------------
# hydrogens

def test_correct_hydrogens_restores_deleted():
    broken = errorgen.delete_random_hydrogen(geometry.dmf_box(), random.Random(13))
    ref = reference_for("2(DMF)")
    outcome = correct_hydrogens(broken, ref)
    assert outcome.corrected.element_counts()["H"] == 14
    assert diagnose(outcome.corrected, ref).clean


def test_correct_hydrogens_keeps_heavy_atoms_fixed():
    broken = errorgen.delete_random_hydrogen(
        geometry.benzoic_box(with_water=True), random.Random(11)
    )
    heavy_before = [
        (s.element, s.frac) for s in broken.sites if s.element != "H"
    ]
    outcome = correct_hydrogens(broken, reference_for("benzoic_acid·H2O"))
    heavy_after = [
        (s.element, s.frac) for s in outcome.corrected.sites if s.element != "H"
    ]
    assert heavy_before == heavy_after


def test_correct_hydrogens_deletes_orphan():
    s = geometry.water_box(n=1)
    from mofcurator.cif import Site

    s.sites.append(Site(label="H99", element="H", frac=(0.8, 0.8, 0.8)))
    outcome = correct_hydrogens(s, reference_for("H2O"))
    assert outcome.corrected.element_counts() == {"O": 1, "H": 2}
    assert any("unbonded" in line for line in outcome.log)


def test_correct_hydrogens_ambiguous_acid_two_candidates():
    s = geometry.benzoic_box(with_water=True, acid_h=False)
    ref = reference_for("benzoic_acid·H2O")
    outcome = correct_hydrogens(s, ref)
    assert len(outcome.candidates) == 2
    for cand, _ in outcome.candidates:
        assert diagnose(cand, ref).clean
    # placement on either carboxyl oxygen, lowest energy first
    energies = [e for _, e in outcome.candidates]
    assert energies == sorted(energies)


def test_added_h_sits_at_covalent_distance():
    broken = errorgen.delete_random_hydrogen(geometry.water_box(n=1), random.Random(2))
    outcome = correct_hydrogens(broken, reference_for("H2O"))
    s = outcome.corrected
    g = build_graph(s, BondPolicy())
    for v in range(len(g.vertices)):
        if g.element(v) != "H":
            continue
        ((u, _),) = g.neighbors(v)
        assert g.element(u) == "O"
        assert min_image_distance(s, v, u) == pytest.approx(0.95, abs=0.02)


# ---------------------------------------------------------------------------
# chemical rules

def zr6_cluster():
    """Zr6 octahedron with eight face caps pushed radially outward."""
    d, t = 2.7, 1.35
    verts = [(d, 0, 0), (-d, 0, 0), (0, d, 0), (0, -d, 0), (0, 0, d), (0, 0, -d)]
    caps = [
        (sx * t, sy * t, sz * t)
        for sx, sy, sz in itertools.product((1, -1), repeat=3)
    ]
    els = ["Zr"] * 6 + ["O"] * 8
    coords = [np.array(v, float) for v in verts] + [np.array(c, float) for c in caps]
    return geometry.assemble(geometry.cubic(20.0), [((els, coords), (10.0, 10.0, 10.0))], name="zr6")


def test_find_motifs_zr6():
    s = zr6_cluster()
    (rule,) = load_rules()
    (motif,) = find_motifs(build_graph(s, BondPolicy()), rule)
    assert len(motif.metal_sites) == 6
    assert len(motif.cap_sites) == 8
    assert len(motif.protonate) == 4 and len(motif.bare) == 4
    assert set(motif.protonate).isdisjoint(motif.bare)


def test_apply_chemical_rules_alternating_protonation():
    s = zr6_cluster()
    fixed = apply_chemical_rules(s, policy=BondPolicy())
    assert fixed.element_counts()["H"] == 4
    g = build_graph(fixed, BondPolicy())

    def metal_set(v):
        return {u for u, _ in g.neighbors(v) if g.element(u) == "Zr"}

    protonated = []
    for v in range(len(g.vertices)):
        if g.element(v) != "H":
            continue
        ((cap, _),) = g.neighbors(v)
        assert g.element(cap) == "O"
        protonated.append(cap)
    # alternating: no two protonated caps share an octahedron edge
    for a, b in itertools.combinations(protonated, 2):
        assert len(metal_set(a) & metal_set(b)) < 2


def test_apply_chemical_rules_idempotent_and_identity():
    s = zr6_cluster()
    fixed = apply_chemical_rules(s, policy=BondPolicy())
    again = apply_chemical_rules(fixed, policy=BondPolicy())
    assert [s_.label for s_ in again.sites] == [s_.label for s_ in fixed.sites]
    # no motif, no change
    plain = geometry.water_box(n=2)
    assert apply_chemical_rules(plain, policy=BondPolicy()) is plain


def test_rule_file_round_trip(tmp_path):
    path = tmp_path / "rules.txt"
    path.write_text(
        "[rule custom]\nmetal = Cu\nmetal_count = 2\ncap_element = O\n"
        "cap_metal_neighbors = 2\ncap_count = 2\nprotonate_count = 1\n"
    )
    (rule,) = load_rules(str(path))
    assert rule.name == "custom" and rule.metal == "Cu"
    assert rule.protonate_count == 1


# ---------------------------------------------------------------------------
# the full pipeline

def test_repair_all_clean_input_untouched():
    s = geometry.dmf_box()
    outcome = repair_all(s, reference_for("2(DMF)"))
    assert outcome.kind == "none"
    assert outcome.corrected.element_counts() == s.element_counts()
    assert not outcome.flags


def test_repair_all_committed_store_round_trip():
    store = RecordStore(DATA / "curate_store")
    expected = {"QQBND": "bond", "QQHYD": "hydrogen", "QQDIS": "disorder"}
    for refcode in store.refcodes():
        if not store.has_cif("csd", refcode):
            continue
        record = store.lookup_refcode(refcode)
        structure = parse_cif(store.cif_path("csd", refcode).read_text())
        ref = reference_for(record.structural_formula)
        outcome = repair_all(structure, ref)
        assert expected[refcode[:5]] in outcome.kind.split("+"), refcode
        assert "uncorrected" not in outcome.flags, (refcode, outcome.log)
        final = diagnose(outcome.corrected, ref, outcome.policy)
        assert final.clean, (refcode, final.to_text())


def test_repair_all_uncorrectable_flags():
    # wrong reference entirely: nothing the stages do can make this clean
    outcome = repair_all(geometry.water_box(n=2), reference_for("2(DMF)"))
    assert "uncorrected" in outcome.flags
    assert outcome.corrected.element_counts() == {"O": 2, "H": 4}


def test_repair_all_disorder_keeps_candidate_list():
    s = errorgen.duplicate_fragment(geometry.dmf_box(), component_index=0)
    ref = reference_for("2(DMF)")
    outcome = repair_all(s, ref)
    assert outcome.kind == "disorder"
    assert len(outcome.candidates) == 2
    # the winner is the first candidate
    assert structure_hash(outcome.corrected) == structure_hash(outcome.candidates[0][0])


def test_repair_all_deterministic():
    s = errorgen.duplicate_fragment(geometry.dmf_box(), component_index=0)
    ref = reference_for("2(DMF)")
    hashes = {structure_hash(repair_all(s, ref).corrected) for _ in range(3)}
    assert len(hashes) == 1
