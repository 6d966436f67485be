"""Repairs for bond, hydrogen, and disorder errors.

Each corrector takes a structure plus its reference graph and returns a
RepairOutcome whose corrected structure no longer shows the error it fixed.
Multi-solution repairs return every consistent candidate ranked by energy;
the first candidate is the chosen repair. repair_all chains the stages in
severity order (disorder, bonds, chemical rules, hydrogens) and re-diagnoses
at the end.
"""

import hashlib
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .cif import CrystalStructure, Site, write_cif
from .crystal import (
    BondPolicy,
    PeriodicGraph,
    build_graph,
    connected_components,
    pair_key,
)
from .elements import covalent_radius
from .energy import EnergyModel, LennardJonesModel, ModelFailure
from .inspection import (
    MatchTimeout,
    choose_anchor,
    coordination_env_test,
    diagnose,
    is_free_role,
    spanning_sites,
    species_scaling_test,
    subgraph_match_test,
)
from .matching import find_embeddings, heavy_view, maximum_disjoint
from .refgraph import ReferenceGraph
from .rules import load_rules

BOND_SCALE_GRID = [1.00, 1.05, 1.10, 1.15, 1.20, 1.25, 1.30]
BOND_MARGIN_GRID = [0.0, 0.1, 0.2, 0.3]
STERIC_FACTOR = 0.7  # fraction of the covalent-radius sum counting as a clash
PROXIMITY_RADIUS = 4.0  # centroid distance pairing alternative orientations, Å
CANDIDATE_CAP = 256
ASSIGNMENT_CAP = 64
_OCC_EPS = 1e-9


class BondSearchExhausted(Exception):
    """No bond parameterization reproduces the reference connectivity."""


class AmbiguousPlacement(Exception):
    """Multiple chemically valid hydrogen assignments exist.

    The default flow does not raise this: ambiguity is reported through
    RepairOutcome.candidates, ranked by energy.
    """


class NoConsistentSelection(Exception):
    """Disorder enumeration produced no candidate at all."""


class CandidateExplosion(Exception):
    """Candidate cap exceeded; carries the truncated best-effort list."""

    def __init__(self, candidates):
        super().__init__(f"candidate cap exceeded ({len(candidates)} kept)")
        self.candidates = candidates


@dataclass
class RepairOutcome:
    corrected: CrystalStructure
    kind: str
    candidates: list[tuple[CrystalStructure, float]]
    log: list[str]
    flags: list[str] = field(default_factory=list)
    policy: BondPolicy | None = None  # effective bond policy after repair


def structure_hash(structure: CrystalStructure) -> str:
    return hashlib.sha256(write_cif(structure).encode()).hexdigest()


def rank_candidates(
    cands: list[CrystalStructure], model: EnergyModel
) -> list[tuple[CrystalStructure, float]]:
    """Ascending energy; ties broken by structure hash; failed evaluations
    rank last with infinite energy. The ordering does not depend on the
    input order."""
    entries = []
    for c in cands:
        try:
            e = model.energy(c)
            failed = False
        except ModelFailure:
            e = math.inf
            failed = True
        entries.append((failed, e, structure_hash(c), c))
    entries.sort(key=lambda t: t[:3])
    return [(c, e) for _, e, _, c in entries]


# ---------------------------------------------------------------------------
# shared structure editing helpers

def _delete_sites(structure: CrystalStructure, drop: set[int]):
    """New structure without the dropped sites; explicit bonds remapped.
    Returns (structure, old index -> new index map)."""
    keep = [i for i in range(len(structure.sites)) if i not in drop]
    remap = {old: new for new, old in enumerate(keep)}
    out = structure.copy()
    out.sites = [out.sites[i] for i in keep]
    out.explicit_bonds = [
        (remap[i], remap[j], s)
        for i, j, s in structure.explicit_bonds
        if i in remap and j in remap
    ]
    return out, remap


def _perpendicular(v: np.ndarray) -> np.ndarray:
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(v)))] = 1.0
    p = axis - v * float(np.dot(axis, v))
    return p / np.linalg.norm(p)


_TETRAHEDRAL = [
    np.array([0.0, 0.0, 1.0]),
    np.array([2.0 * math.sqrt(2.0) / 3.0, 0.0, -1.0 / 3.0]),
    np.array([-math.sqrt(2.0) / 3.0, math.sqrt(2.0 / 3.0), -1.0 / 3.0]),
    np.array([-math.sqrt(2.0) / 3.0, -math.sqrt(2.0 / 3.0), -1.0 / 3.0]),
]


def _placement_directions(existing: list[np.ndarray], n_new: int) -> list[np.ndarray]:
    """Unit vectors for new substituents, spread away from existing ones:
    a single addition points opposite the neighbor-vector sum, multiple
    additions complete an idealized trigonal or tetrahedral arrangement."""
    if not existing:
        return [_TETRAHEDRAL[i % 4] for i in range(n_new)]
    total = np.sum(existing, axis=0)
    norm = float(np.linalg.norm(total))
    if norm > 1e-6:
        b = -total / norm
    else:
        b = _perpendicular(existing[0])
    if n_new == 1:
        return [b]
    coordination = len(existing) + n_new
    if len(existing) == 2 and n_new == 2:
        w = np.cross(existing[0], existing[1])
        wn = float(np.linalg.norm(w))
        if wn > 1e-6:
            w /= wn
            half = math.radians(54.7356)
            return [
                b * math.cos(half) + w * math.sin(half),
                b * math.cos(half) - w * math.sin(half),
            ]
    half = math.radians(60.0 if coordination == 3 else 70.5288)
    u = _perpendicular(existing[0]) if abs(float(np.dot(existing[0], b))) > 0.9999 else None
    if u is None:
        u = existing[0] - b * float(np.dot(existing[0], b))
        un = float(np.linalg.norm(u))
        u = u / un if un > 1e-6 else _perpendicular(b)
    v = np.cross(b, u)
    out = []
    for j in range(n_new):
        az = math.pi + 2.0 * math.pi * j / n_new
        out.append(
            b * math.cos(half) + (u * math.cos(az) + v * math.sin(az)) * math.sin(half)
        )
    return out


def _fresh_h_labels(structure: CrystalStructure, n: int) -> list[str]:
    used = {s.label for s in structure.sites}
    labels = []
    counter = 1
    while len(labels) < n:
        cand = f"H{counter}"
        if cand not in used:
            used.add(cand)
            labels.append(cand)
        counter += 1
    return labels


def _add_hydrogens(
    structure: CrystalStructure,
    graph: PeriodicGraph,
    additions: list[tuple[int, int]],
) -> CrystalStructure:
    """Append n new H sites bonded to each listed heavy atom. Heavy-atom
    coordinates are untouched; graph must describe `structure`."""
    if not additions:
        return structure
    mat = np.array(structure.lattice.matrix, dtype=float)
    inv = np.linalg.inv(mat)
    out = structure.copy()
    total_new = sum(n for _, n in additions)
    labels = iter(_fresh_h_labels(structure, total_new))
    for site_idx, n_new in additions:
        site = structure.sites[site_idx]
        origin = np.array(site.frac, dtype=float)
        existing = []
        for u, shift in graph.neighbors(site_idx):
            delta = (
                np.array(structure.sites[u].frac, dtype=float)
                + np.array(shift, dtype=float)
                - origin
            ) @ mat
            norm = float(np.linalg.norm(delta))
            if norm > 1e-6:
                existing.append(delta / norm)
        length = covalent_radius("H") + covalent_radius(site.element)
        for direction in _placement_directions(existing, n_new):
            raw = origin + (direction * length) @ inv
            wrapped = raw % 1.0
            bond_shift = tuple(int(round(r - w)) for r, w in zip(raw, wrapped))
            new_idx = len(out.sites)
            out.sites.append(
                Site(
                    label=next(labels),
                    element="H",
                    frac=(float(wrapped[0]), float(wrapped[1]), float(wrapped[2])),
                    occupancy=1.0,
                )
            )
            if out.explicit_bonds:
                out.explicit_bonds.append((site_idx, new_idx, bond_shift))
    return out


def _set_h_counts(
    structure: CrystalStructure,
    policy: BondPolicy,
    targets: dict[int, int],
    graph: PeriodicGraph | None = None,
) -> CrystalStructure:
    """Adjust hydrogen neighbor counts of the targeted heavy sites."""
    graph = graph or build_graph(structure, policy)
    dels: set[int] = set()
    adds: list[tuple[int, int]] = []
    for site_idx in sorted(targets):
        want = targets[site_idx]
        hs = sorted(
            u for u, _ in graph.neighbors(site_idx) if graph.element(u) == "H"
        )
        if len(hs) > want:
            dels.update(hs[want:])
        elif len(hs) < want:
            adds.append((site_idx, want - len(hs)))
    work, remap = _delete_sites(structure, dels)
    if adds:
        graph2 = build_graph(work, policy)
        adds = [(remap[i], n) for i, n in adds]
        work = _add_hydrogens(work, graph2, adds)
    return work


# ---------------------------------------------------------------------------
# bond correction

def _scale_factor(structure: CrystalStructure, ref: ReferenceGraph):
    counts = structure.element_counts()
    ref_counts = ref.integral_species_counts()
    anchor = choose_anchor(counts, ref_counts)
    return species_scaling_test(counts, ref_counts, anchor).factor


def _graph_passes(graph: PeriodicGraph, ref: ReferenceGraph, k) -> bool:
    try:
        if coordination_env_test(graph, ref, k):
            return False
        framework = spanning_sites(graph)
        for comp in ref.components:
            mult = comp.spec.multiplicity * k
            if mult.denominator != 1:
                return False
            result = subgraph_match_test(
                graph,
                comp.graph,
                int(mult),
                name=comp.spec.name,
                excluded_sites=framework if is_free_role(comp.spec.role) else None,
            )
            if result.found != result.expected:
                return False
    except MatchTimeout:
        return False
    return True


def _pair_distances(structure: CrystalStructure, pair) -> list[float]:
    el_a, el_b = pair
    idx_a = [i for i, s in enumerate(structure.sites) if s.element == el_a]
    idx_b = [i for i, s in enumerate(structure.sites) if s.element == el_b]
    if not idx_a or not idx_b:
        return []
    mat = np.array(structure.lattice.matrix, dtype=float)
    fa = np.array([structure.sites[i].frac for i in idx_a], dtype=float)
    fb = np.array([structure.sites[i].frac for i in idx_b], dtype=float)
    dmin = _cross_min_distances(mat, fa, fb)
    if el_a == el_b:
        np.fill_diagonal(dmin, np.inf)
    window = 2.2 * (covalent_radius(el_a) + covalent_radius(el_b)) + 0.5
    values = sorted({round(float(d), 4) for d in dmin.ravel() if 0.05 < d <= window})
    return values


def correct_bonds(
    s: CrystalStructure, ref: ReferenceGraph, policy: BondPolicy | None = None
) -> RepairOutcome:
    """Grid-search bond thresholds, then single per-pair overrides for pairs
    implicated in the coordination mismatches; first passing parameterization
    wins and its bond list is baked into explicit_bonds."""
    policy = policy or BondPolicy()
    k = _scale_factor(s, ref)

    base_graph = build_graph(s, policy)
    if _graph_passes(base_graph, ref, k):
        return RepairOutcome(s.copy(), "bond", [], [], policy=policy)

    def trial_policy(scale, margin, overrides):
        return BondPolicy(
            scale=scale,
            margin=margin,
            pair_overrides=overrides,
            forbidden_pairs=set(policy.forbidden_pairs),
            trust_explicit=False,
        )

    for scale in BOND_SCALE_GRID:
        for margin in BOND_MARGIN_GRID:
            trial = trial_policy(scale, margin, dict(policy.pair_overrides))
            graph = build_graph(s, trial)
            if _graph_passes(graph, ref, k):
                return _bake_bonds(s, graph, trial, f"scale={scale} margin={margin}")

    diffs = coordination_env_test(base_graph, ref, k)
    implicated = set()
    for d in diffs:
        for nb in d.label.neighbor_elements:
            implicated.add(pair_key(d.label.element, nb))
    for pair in sorted(implicated):
        distances = _pair_distances(s, pair)
        thresholds = [0.0]
        thresholds += [
            (a + b) / 2.0 for a, b in zip(distances, distances[1:])
        ]
        if distances:
            thresholds.append(distances[-1] + 0.1)
        for threshold in thresholds:
            overrides = dict(policy.pair_overrides)
            overrides[pair] = threshold
            trial = trial_policy(policy.scale, policy.margin, overrides)
            graph = build_graph(s, trial)
            if _graph_passes(graph, ref, k):
                desc = f"override {pair[0]}-{pair[1]} <= {threshold:.3f} A"
                return _bake_bonds(s, graph, trial, desc)

    raise BondSearchExhausted("no bond parameterization satisfies the reference")


def _bake_bonds(s, graph, trial, desc) -> RepairOutcome:
    corrected = s.copy()
    corrected.explicit_bonds = list(graph.edges)
    log = [f"bond correction: {desc}; {len(graph.edges)} bonds rebuilt"]
    return RepairOutcome(
        corrected, "bond", [], log, policy=replace(trial, trust_explicit=True)
    )


# ---------------------------------------------------------------------------
# hydrogen correction

def _heavy_label(graph: PeriodicGraph, v: int, wildcard_metals: bool):
    from .elements import is_metal

    neigh = []
    for u, _ in graph.neighbors(v):
        el = graph.element(u)
        if el == "H":
            continue
        if wildcard_metals and is_metal(el):
            continue
        neigh.append(el)
    return (graph.element(v), tuple(sorted(neigh)))


def _reference_h_table(
    ref: ReferenceGraph, wildcard_metals: bool, free: bool
) -> dict[tuple, set[int]]:
    """Heavy-neighbor label -> set of hydrogen counts seen in the reference.
    Built separately for free components (solvent/guest/counterion) and
    framework-capable ones, so a framework site never inherits hydrogen
    counts from a free molecule of coincidentally matching label."""
    from .elements import is_metal

    table: dict[tuple, set[int]] = {}
    for comp in ref.components:
        if is_free_role(comp.spec.role) != free:
            continue
        g = comp.graph
        for i, el in enumerate(g.atoms):
            if el == "H" or is_metal(el):
                continue
            heavy = []
            h = 0
            for j in g.neighbors(i):
                nb = g.atoms[j]
                if nb == "H":
                    h += 1
                elif not (wildcard_metals and is_metal(nb)):
                    heavy.append(nb)
            table.setdefault((el, tuple(sorted(heavy))), set()).add(h)
    return table


def _h_neighbor_count(graph: PeriodicGraph, v: int) -> int:
    return sum(1 for u, _ in graph.neighbors(v) if graph.element(u) == "H")


def _hydrogen_need(structure: CrystalStructure, graph, ref, k) -> bool:
    counts = structure.element_counts()
    expected_h = k * ref.integral_species_counts().get("H", 0)
    if counts.get("H", 0) != expected_h:
        return True
    diffs = coordination_env_test(graph, ref, k)
    return bool(diffs)


def correct_hydrogens(
    s: CrystalStructure,
    ref: ReferenceGraph,
    policy: BondPolicy | None = None,
    model: EnergyModel | None = None,
) -> RepairOutcome:
    """Two complementary stages. Identity mapping fixes atoms whose
    heavy-neighbor label has one possible hydrogen count in the reference;
    graph matching then imposes reference hydrogen counts through heavy-atom
    skeleton embeddings, emitting one candidate per distinct assignment.
    Heavy atoms are never moved or deleted."""
    policy = policy or BondPolicy()
    model = model or LennardJonesModel()
    k = _scale_factor(s, ref)
    wildcard = ref.kind == "component_set"

    log: list[str] = []
    flags: list[str] = []
    work = s.copy()
    graph = build_graph(work, policy)

    orphans = {
        v
        for v in range(len(graph.vertices))
        if graph.element(v) == "H" and not graph.neighbors(v)
    }
    if orphans:
        work, _ = _delete_sites(work, orphans)
        graph = build_graph(work, policy)
        log.append(f"removed {len(orphans)} unbonded hydrogen sites")

    # stage 1: identity mapping over unambiguous labels
    from .elements import is_metal

    bound_table = _reference_h_table(ref, wildcard, free=False)
    free_table = _reference_h_table(ref, wildcard, free=True)
    framework = spanning_sites(graph)
    targets: dict[int, int] = {}
    for v in range(len(graph.vertices)):
        el = graph.element(v)
        if el == "H" or is_metal(el):
            continue
        label = _heavy_label(graph, v, wildcard)
        options = set(bound_table.get(label, set()))
        if v not in framework:
            options |= free_table.get(label, set())
        if len(options) != 1:
            continue
        want = next(iter(options))
        if _h_neighbor_count(graph, v) != want:
            targets[v] = want
    if targets:
        added = sum(targets.values()) - sum(
            _h_neighbor_count(graph, v) for v in targets
        )
        work = _set_h_counts(work, policy, targets, graph)
        graph = build_graph(work, policy)
        verb = f"{added:+d} hydrogens over {len(targets)} sites"
        log.append(f"identity mapping: {verb}")

    candidates_out: list[tuple[CrystalStructure, float]] = []
    if _hydrogen_need(work, graph, ref, k):
        # stage 2: impose reference H counts through skeleton embeddings
        view = heavy_view(graph)
        framework = spanning_sites(graph)
        base_targets: dict[int, int] = {}
        ambiguous: list[list[dict[int, int]]] = []
        claimed: set[int] = set()
        for comp in ref.components:
            skeleton, _, h_counts = comp.graph.heavy_skeleton()
            if not skeleton.atoms or sum(h_counts.values()) == 0:
                continue
            mappings = find_embeddings(view, skeleton, collapse_automorphic=False)
            if is_free_role(comp.spec.role):
                mappings = [
                    m for m in mappings if not (set(m.values()) & framework)
                ]
            by_sites: dict[frozenset, list[dict[int, int]]] = {}
            for m in mappings:
                by_sites.setdefault(frozenset(m.values()), []).append(m)
            reps = [ms[0] for ms in by_sites.values()]
            for idx in maximum_disjoint(reps):
                sites = frozenset(reps[idx].values())
                if sites & claimed:
                    continue
                claimed |= sites
                variants = []
                seen = set()
                for m in by_sites[sites]:
                    assignment = {site: h_counts[p] for p, site in m.items()}
                    key = tuple(sorted(assignment.items()))
                    if key not in seen:
                        seen.add(key)
                        variants.append(assignment)
                if len(variants) == 1:
                    base_targets.update(variants[0])
                else:
                    ambiguous.append(variants)

        if not base_targets and not ambiguous:
            log.append("graph matching found no reference embedding to impose")
            flags.append("hydrogen-unresolved")
        else:
            combo_count = 1
            for variants in ambiguous:
                combo_count *= len(variants)
            if combo_count > ASSIGNMENT_CAP:
                flags.append("assignment-cap")
            raw = []
            for combo in itertools.islice(
                itertools.product(*ambiguous), ASSIGNMENT_CAP
            ):
                merged = dict(base_targets)
                for assignment in combo:
                    merged.update(assignment)
                raw.append(_set_h_counts(work, policy, merged, graph))
            unique = []
            seen_hashes = set()
            for c in raw:
                h = structure_hash(c)
                if h not in seen_hashes:
                    seen_hashes.add(h)
                    unique.append(c)
            if len(unique) == 1:
                if structure_hash(unique[0]) != structure_hash(work):
                    work = unique[0]
                    log.append("graph matching: imposed reference hydrogen counts")
                else:
                    flags.append("hydrogen-unresolved")
            else:
                candidates_out = rank_candidates(unique, model)
                work = candidates_out[0][0]
                log.append(
                    f"graph matching: {len(unique)} hydrogen assignments,"
                    " selected lowest energy"
                )

    return RepairOutcome(work, "hydrogen", candidates_out, log, flags, policy=policy)


# ---------------------------------------------------------------------------
# chemical rules

def apply_chemical_rules(
    s: CrystalStructure,
    ref: ReferenceGraph | None = None,
    policy: BondPolicy | None = None,
    rules=None,
) -> CrystalStructure:
    """Rule-forced hydrogen assignment on recognized motifs; identity when
    nothing matches."""
    structure, _ = _chemical_rules_logged(s, policy, rules)
    return structure


def _chemical_rules_logged(s, policy, rules):
    policy = policy or BondPolicy()
    rules = rules if rules is not None else load_rules()
    if not rules:
        return s, []
    from .rules import find_motifs

    graph = build_graph(s, policy)
    log: list[str] = []
    dels: set[int] = set()
    additions: list[tuple[int, int]] = []
    for rule in rules:
        for motif in find_motifs(graph, rule):
            cap_h = {
                cap: sorted(
                    u for u, _ in graph.neighbors(cap) if graph.element(u) == "H"
                )
                for cap in motif.cap_sites
            }
            already = all(len(cap_h[c]) == 1 for c in motif.protonate) and all(
                len(cap_h[c]) == 0 for c in motif.bare
            )
            if already:
                continue
            for hs in cap_h.values():
                dels.update(hs)
            additions.extend((cap, 1) for cap in motif.protonate)
            log.append(
                f"chemical rule {rule.name}: protonated"
                f" {len(motif.protonate)} of {len(motif.cap_sites)} caps"
            )
    if not log:
        return s, []
    work, remap = _delete_sites(s, dels)
    graph2 = build_graph(work, policy)
    work = _add_hydrogens(work, graph2, [(remap[c], n) for c, n in additions])
    return work, log


# ---------------------------------------------------------------------------
# disorder

def _frac_min_distance(mat: np.ndarray, fa, fb) -> float:
    d0 = np.asarray(fb, dtype=float) - np.asarray(fa, dtype=float)
    d0 -= np.round(d0)
    shifts = np.array(
        list(itertools.product((-1, 0, 1), repeat=3)), dtype=float
    )
    vecs = (d0 + shifts) @ mat
    return float(np.sqrt((vecs**2).sum(axis=1).min()))


def _cross_min_distances(mat: np.ndarray, fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    d = fb[None, :, :] - fa[:, None, :]
    d -= np.round(d)
    best = None
    for shift in itertools.product((-1, 0, 1), repeat=3):
        vecs = (d + np.array(shift, dtype=float)) @ mat
        dist = np.sqrt((vecs**2).sum(axis=2))
        best = dist if best is None else np.minimum(best, dist)
    return best


def _components_clash(structure, mat, comp_a, comp_b) -> bool:
    fa = np.array([structure.sites[i].frac for i in comp_a], dtype=float)
    fb = np.array([structure.sites[i].frac for i in comp_b], dtype=float)
    dmin = _cross_min_distances(mat, fa, fb)
    ra = np.array([covalent_radius(structure.sites[i].element) for i in comp_a])
    rb = np.array([covalent_radius(structure.sites[i].element) for i in comp_b])
    threshold = STERIC_FACTOR * (ra[:, None] + rb[None, :])
    return bool((dmin < threshold).any())


def _unwrapped_centroid(structure, graph, members: list[int]) -> np.ndarray:
    offsets = {members[0]: np.zeros(3)}
    queue = [members[0]]
    member_set = set(members)
    while queue:
        v = queue.pop(0)
        for u, shift in graph.neighbors(v):
            if u in member_set and u not in offsets:
                offsets[u] = offsets[v] + np.array(shift, dtype=float)
                queue.append(u)
    pts = [
        np.array(structure.sites[v].frac, dtype=float) + offsets.get(v, np.zeros(3))
        for v in members
    ]
    return np.mean(pts, axis=0)


def _heavy_formula(structure, members) -> tuple:
    c = Counter(
        structure.sites[i].element for i in members if structure.sites[i].element != "H"
    )
    return tuple(sorted(c.items()))


def _maximal_independent_sets(nodes: list[int], edges: set[frozenset]) -> list[tuple]:
    """All maximal independent sets of a small conflict graph, sorted."""
    if len(nodes) > 16:
        # fall back to one greedy selection on oversized clusters
        chosen = []
        blocked: set[int] = set()
        for v in nodes:
            if v not in blocked:
                chosen.append(v)
                blocked.update(u for e in edges if v in e for u in e)
        return [tuple(chosen)]
    result = []
    n = len(nodes)
    for bits in range(1 << n):
        subset = [nodes[i] for i in range(n) if bits >> i & 1]
        ok = all(
            frozenset((a, b)) not in edges
            for i, a in enumerate(subset)
            for b in subset[i + 1 :]
        )
        if not ok:
            continue
        maximal = all(
            any(frozenset((v, u)) in edges for u in subset)
            for v in nodes
            if v not in subset
        )
        if maximal:
            result.append(tuple(sorted(subset)))
    result.sort()
    return result


def _normalize(structure: CrystalStructure) -> CrystalStructure:
    out = structure.copy()
    for i, site in enumerate(out.sites):
        out.sites[i] = replace(site, occupancy=1.0, disorder_group=None)
    return out


def enumerate_disorder_candidates(
    s: CrystalStructure,
    ref: ReferenceGraph | None = None,
    policy: BondPolicy | None = None,
    cap: int = CANDIDATE_CAP,
) -> list[CrystalStructure]:
    """Candidates consistent with one resolved configuration.

    Generator (a) keeps one disorder group value at a time. Generator (b)
    resolves duplicated fragments: finite components enter a conflict pool
    when partially occupied or sterically clashing; conflict edges join
    clashing pairs and partially occupied same-formula components whose
    centroids sit within a fragment radius (alternative orientations of one
    site). Every combination of maximal conflict-free selections becomes a
    candidate with losers deleted, occupancies reset to 1, and tags cleared.
    """
    policy = policy or BondPolicy()
    groups = sorted(
        {site.disorder_group for site in s.sites if site.disorder_group is not None}
    )
    bases: list[CrystalStructure] = []
    if groups:
        for g in groups:
            drop = {
                i
                for i, site in enumerate(s.sites)
                if site.disorder_group is not None and site.disorder_group != g
            }
            base, _ = _delete_sites(s, drop)
            bases.append(base)
    else:
        bases = [s]

    candidates: list[CrystalStructure] = []
    truncated = False
    for base in bases:
        remaining = cap + 1 - len(candidates)
        if remaining <= 0:
            truncated = True
            break
        got = _resolve_overlaps(base, policy, remaining)
        candidates.extend(got)
    if len(candidates) > cap:
        raise CandidateExplosion(candidates[:cap])
    if truncated:
        raise CandidateExplosion(candidates)
    if not candidates:
        raise NoConsistentSelection("no disorder resolution found")
    return candidates


def _resolve_overlaps(
    base: CrystalStructure, policy: BondPolicy, limit: int
) -> list[CrystalStructure]:
    graph = build_graph(base, policy)
    comps = connected_components(graph)
    mat = np.array(base.lattice.matrix, dtype=float)

    finite = [c for c in comps if not c.spanning]
    spanning = [c for c in comps if c.spanning]

    def min_occ(comp):
        return min(base.sites[i].occupancy for i in comp.site_indices)

    movable = [i for i, c in enumerate(finite) if min_occ(c) < 1.0 - _OCC_EPS]

    clash_edges: set[frozenset] = set()
    in_clash: set[int] = set()
    for i in range(len(finite)):
        for j in range(i + 1, len(finite)):
            if _components_clash(
                base, mat, finite[i].site_indices, finite[j].site_indices
            ):
                clash_edges.add(frozenset((i, j)))
                in_clash.update((i, j))

    # fragments overlapping the framework can never be kept
    forced_delete: set[int] = set()
    for i, c in enumerate(finite):
        for sp in spanning:
            if _components_clash(base, mat, c.site_indices, sp.site_indices):
                forced_delete.add(i)
                break

    pool = sorted((set(movable) | in_clash) - forced_delete)
    edges = {e for e in clash_edges if not (e & forced_delete)}

    movable_set = set(movable)
    centroids = {
        i: _unwrapped_centroid(base, graph, finite[i].site_indices) for i in pool
    }
    formulas = {i: _heavy_formula(base, finite[i].site_indices) for i in pool}
    for a_pos, i in enumerate(pool):
        for j in pool[a_pos + 1 :]:
            if i in movable_set and j in movable_set and formulas[i] == formulas[j]:
                if _frac_min_distance(mat, centroids[i], centroids[j]) < PROXIMITY_RADIUS:
                    edges.add(frozenset((i, j)))

    # split the pool into conflict clusters
    cluster_of = {v: v for v in pool}

    def find(x):
        while cluster_of[x] != x:
            cluster_of[x] = cluster_of[cluster_of[x]]
            x = cluster_of[x]
        return x

    for e in edges:
        a, b = tuple(e)
        ra, rb = find(a), find(b)
        if ra != rb:
            cluster_of[rb] = ra
    clusters: dict[int, list[int]] = {}
    for v in pool:
        clusters.setdefault(find(v), []).append(v)

    selections_per_cluster = []
    for root in sorted(clusters):
        members = sorted(clusters[root])
        cluster_edges = {e for e in edges if e <= set(members)}
        selections_per_cluster.append(
            _maximal_independent_sets(members, cluster_edges)
        )

    out = []
    for selection in itertools.product(*selections_per_cluster):
        kept = set(itertools.chain.from_iterable(selection))
        drop_sites: set[int] = set()
        for i in forced_delete | (set(pool) - kept):
            drop_sites.update(finite[i].site_indices)
        candidate, _ = _delete_sites(base, drop_sites)
        out.append(_normalize(candidate))
        if len(out) >= limit:
            break
    return out


# ---------------------------------------------------------------------------
# pipeline

def repair_all(
    s: CrystalStructure,
    ref: ReferenceGraph,
    policy: BondPolicy | None = None,
    model: EnergyModel | None = None,
    rules=None,
) -> RepairOutcome:
    """diagnose -> disorder -> bonds -> chemical rules -> hydrogens ->
    re-diagnose. Stage failures are logged, never swallowed; a final
    diagnosis that is not clean flags the outcome uncorrected."""
    policy = policy or BondPolicy()
    model = model or LennardJonesModel()

    log: list[str] = []
    flags: list[str] = []
    kinds: list[str] = []
    candidates: list[tuple[CrystalStructure, float]] = []

    report = diagnose(s, ref, policy)
    if report.clean:
        return RepairOutcome(s.copy(), "none", [], [], policy=policy)

    work = s
    eff_policy = policy

    def has(kind):
        return any(e.kind == kind for e in report.errors)

    if has("disorder"):
        try:
            cands = enumerate_disorder_candidates(work, ref, eff_policy)
        except CandidateExplosion as exc:
            cands = exc.candidates
            flags.append("candidate-cap")
            log.append("disorder: candidate cap exceeded, truncated enumeration")
        except NoConsistentSelection as exc:
            cands = []
            flags.append("disorder-unresolved")
            log.append(f"disorder: {exc}")
        if cands:
            ranked = rank_candidates(cands, model)
            candidates = ranked
            work = ranked[0][0]
            kinds.append("disorder")
            log.append(
                f"disorder: selected 1 of {len(ranked)} candidates"
                f" (energy={ranked[0][1]:.4f})"
            )
        report = diagnose(work, ref, eff_policy)

    if has("bond"):
        try:
            outcome = correct_bonds(work, ref, eff_policy)
            if outcome.log:
                if candidates and outcome.corrected is not candidates[0][0]:
                    candidates = []
                work = outcome.corrected
                eff_policy = outcome.policy or eff_policy
                kinds.append("bond")
                log.extend(outcome.log)
                report = diagnose(work, ref, eff_policy)
        except BondSearchExhausted as exc:
            flags.append("bond-unresolved")
            log.append(f"bond: {exc}")

    ruled, rule_log = _chemical_rules_logged(work, eff_policy, rules)
    if rule_log:
        if candidates:
            candidates = []
        work = ruled
        log.extend(rule_log)
        report = diagnose(work, ref, eff_policy)

    if has("hydrogen"):
        outcome = correct_hydrogens(work, ref, eff_policy, model)
        if outcome.log:
            if outcome.candidates:
                candidates = outcome.candidates
            elif candidates:
                candidates = []
            work = outcome.corrected
            kinds.append("hydrogen")
            log.extend(outcome.log)
            flags.extend(outcome.flags)

    final = diagnose(work, ref, eff_policy)
    if not final.clean:
        flags.append("uncorrected")
        remaining = ", ".join(sorted({e.kind for e in final.errors}))
        log.append(f"re-diagnosis still reports errors: {remaining}")

    if candidates and candidates[0][0] is not work:
        candidates = []
    return RepairOutcome(
        corrected=work,
        kind="+".join(kinds) if kinds else "none",
        candidates=candidates,
        log=log,
        flags=flags,
        policy=eff_policy,
    )
