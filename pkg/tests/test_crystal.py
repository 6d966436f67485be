"""Bond graph construction, components, and free-solvent removal."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import geometry
from conftest import kinds, reference_for
from mofcurator.cif import CrystalStructure, Lattice, Site
from mofcurator.crystal import (
    BondPolicy,
    build_graph,
    canonical_edge,
    component_molgraph,
    connected_components,
    min_image_distance,
    pair_key,
    remove_free_solvent,
)
from mofcurator.refgraph import solvent_library


def brute_min_image(structure, i, j):
    """Oracle: scan all 27 images directly from cartesian coordinates."""
    lat = structure.lattice
    a = np.array(lat.frac_to_cart(structure.sites[i].frac))
    best = math.inf
    for sx, sy, sz in itertools.product((-1, 0, 1), repeat=3):
        fj = np.array(structure.sites[j].frac) + (sx, sy, sz)
        b = np.array(lat.frac_to_cart(tuple(fj)))
        best = min(best, float(np.linalg.norm(b - a)))
    return best


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(min_value=0.0, max_value=0.999),
            st.floats(min_value=0.0, max_value=0.999),
            st.floats(min_value=0.0, max_value=0.999),
        ),
        min_size=2,
        max_size=6,
    ),
    st.floats(min_value=70.0, max_value=110.0),
)
def test_min_image_distance_matches_brute_force(fracs, alpha):
    lat = Lattice(9.0, 11.0, 13.0, alpha, 90.0, 90.0)
    sites = [
        Site(label=f"C{i}", element="C", frac=f) for i, f in enumerate(fracs)
    ]
    s = CrystalStructure(lattice=lat, sites=sites)
    for i in range(len(fracs)):
        for j in range(len(fracs)):
            assert min_image_distance(s, i, j) == pytest.approx(
                brute_min_image(s, i, j), abs=1e-9
            )


def test_threshold_covalent_sum():
    p = BondPolicy()
    # C-C: 1.15 * (0.75 + 0.75) with the shipped single-bond radii
    assert p.threshold("C", "C") == pytest.approx(1.15 * 1.50)
    assert p.threshold("H", "H") is None
    assert p.threshold("He", "C") is None
    assert p.threshold("Zn", "Dy") is None  # metal-metal needs an override


def test_threshold_overrides_and_forbidden():
    p = BondPolicy(
        pair_overrides={pair_key("Zn", "Zn"): 3.0},
        forbidden_pairs=frozenset({pair_key("C", "O")}),
    )
    assert p.threshold("Zn", "Zn") == 3.0
    assert p.threshold("O", "C") is None


def test_pair_key_symmetry():
    assert pair_key("O", "C") == pair_key("C", "O")


def test_water_graph():
    g = build_graph(geometry.water_box(n=1), BondPolicy())
    assert g.species_counts() == {"O": 1, "H": 2}
    assert g.degree(0) == 2 and g.degree(1) == 1


def test_benzoic_graph_bond_count():
    g = build_graph(geometry.benzoic_box(with_water=False), BondPolicy())
    # C6H5-COOH: 15 atoms, 15 bonds (one ring)
    assert len(g.vertices) == 15
    assert len(g.edges) == 15


def test_canonical_edge_orientation():
    assert canonical_edge(3, 1, (1, 0, 0)) == (1, 3, (-1, 0, 0))
    assert canonical_edge(2, 2, (-1, 0, 1)) == (2, 2, (1, 0, -1))
    assert canonical_edge(1, 3, (0, 1, 0)) == (1, 3, (0, 1, 0))


def test_explicit_bonds_trusted():
    s = geometry.water_box(n=1)
    s.explicit_bonds = [(0, 1, (0, 0, 0))]  # drop one O-H on purpose
    g = build_graph(s, BondPolicy())
    assert len(g.edges) == 1
    g2 = build_graph(s, BondPolicy(trust_explicit=False))
    assert len(g2.edges) == 2


@settings(max_examples=25, deadline=None)
@given(
    st.tuples(
        st.floats(min_value=-0.4, max_value=0.4),
        st.floats(min_value=-0.4, max_value=0.4),
        st.floats(min_value=-0.4, max_value=0.4),
    )
)
def test_graph_translation_invariance(shift):
    """Rigid translation (mod 1) never changes the bond multiset."""
    base = geometry.dmf_box()
    moved = base.copy()
    for site in moved.sites:
        site.frac = tuple((x + d) % 1.0 for x, d in zip(site.frac, shift))
    g0 = build_graph(base, BondPolicy())
    g1 = build_graph(moved, BondPolicy())
    pairs0 = sorted((min(i, j), max(i, j)) for i, j, _ in g0.edges)
    pairs1 = sorted((min(i, j), max(i, j)) for i, j, _ in g1.edges)
    assert pairs0 == pairs1


def test_components_and_spanning():
    s = geometry.zno_framework()
    g = build_graph(s, BondPolicy())
    comps = connected_components(g)
    spanning = [c for c in comps if c.spanning]
    finite = [c for c in comps if not c.spanning]
    assert len(spanning) == 1
    assert len(spanning[0].site_indices) == 8  # the Zn4O4 chain
    # guests: one DMF and two waters
    assert sorted(len(c.site_indices) for c in finite) == [3, 3, 12]


def test_component_molgraph_drops_shifts():
    s = geometry.dmf_box()
    g = build_graph(s, BondPolicy())
    comp = connected_components(g)[0]
    mol = component_molgraph(g, comp)
    assert sorted(mol.atoms) == sorted(["N", "C", "C", "C", "O", "H"] + ["H"] * 6)
    assert len(mol.bonds) == 11


def test_remove_free_solvent_names_and_counts():
    s = geometry.zno_framework()
    cleaned, report = remove_free_solvent(s, solvent_library(), BondPolicy())
    assert report.removed == {"dimethylformamide": 1, "water": 2}
    assert report.kept_unmatched == []
    assert cleaned.element_counts() == {"Zn": 4, "O": 4}


def test_remove_free_solvent_keeps_unknown_guests():
    s = geometry.benzoic_box(with_water=True)
    cleaned, report = remove_free_solvent(s, solvent_library(), BondPolicy())
    assert report.removed == {"water": 1}
    # benzoic acid is not in the solvent library, so it stays, flagged
    assert report.kept_unmatched == ["C7H6O2"]
    assert cleaned.element_counts()["C"] == 7


def test_remove_free_solvent_idempotent():
    s = geometry.zno_framework()
    once, _ = remove_free_solvent(s, solvent_library(), BondPolicy())
    twice, report = remove_free_solvent(once, solvent_library(), BondPolicy())
    assert report.removed == {}
    assert twice.element_counts() == once.element_counts()


def test_remove_free_solvent_remaps_explicit_bonds():
    s = geometry.zno_framework()
    g = build_graph(s, BondPolicy())
    s.explicit_bonds = sorted(g.edges)
    cleaned, _ = remove_free_solvent(s, solvent_library(), BondPolicy())
    cleaned.validate()
    assert len(cleaned.explicit_bonds) == 8  # Zn-O ring bonds only
    for i, j, _ in cleaned.explicit_bonds:
        pair = {cleaned.sites[i].element, cleaned.sites[j].element}
        assert pair == {"Zn", "O"}
