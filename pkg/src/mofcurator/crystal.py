"""Periodic bond graphs over crystal structures.

Bond perception follows a covalent-radius criterion: sites i, j are bonded
through image shift s when the Cartesian distance satisfies
d <= scale * (r_i + r_j) + margin. H-H contacts, noble-gas contacts, and
metal-metal contacts are never bonded unless an explicit per-pair override
supplies a threshold. Minimum-image distances scan the 27 neighboring cells.
"""

import itertools
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .cif import CrystalStructure
from .elements import NOBLE_GASES, covalent_radii, is_metal
from .molgraph import MolecularGraph, is_isomorphic

_SHIFTS = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=float)

PairKey = tuple[str, str]


def pair_key(e1: str, e2: str) -> PairKey:
    return (e1, e2) if e1 <= e2 else (e2, e1)


@dataclass
class BondPolicy:
    scale: float = 1.15
    margin: float = 0.0
    pair_overrides: dict[PairKey, float] = field(default_factory=dict)
    forbidden_pairs: set[PairKey] = field(default_factory=set)
    # explicit bond lists (from a file or a bond correction) take precedence
    # over geometric thresholds unless this is switched off
    trust_explicit: bool = True

    def __post_init__(self):
        if not 0.7 <= self.scale <= 1.5:
            raise ValueError("bond scale outside [0.7, 1.5]")
        self.pair_overrides = {pair_key(*k): v for k, v in self.pair_overrides.items()}
        self.forbidden_pairs = {pair_key(*k) for k in self.forbidden_pairs}

    def threshold(self, e1: str, e2: str) -> float | None:
        """Maximum bonding distance for an element pair, or None if forbidden."""
        key = pair_key(e1, e2)
        if key in self.pair_overrides:
            return self.pair_overrides[key]
        if key in self.forbidden_pairs:
            return None
        if e1 == "H" and e2 == "H":
            return None
        if e1 in NOBLE_GASES or e2 in NOBLE_GASES:
            return None
        if is_metal(e1) and is_metal(e2):
            return None
        radii = covalent_radii()
        return self.scale * (radii[e1] + radii[e2]) + self.margin


Edge = tuple[int, int, tuple[int, int, int]]


@dataclass
class PeriodicGraph:
    """Quotient bond graph: vertices are sites, edges carry image shifts.

    Edges are stored canonically: i < j, or i == j with the first nonzero
    shift component positive; (u, v, s) and (v, u, -s) are the same edge.
    """

    vertices: list[tuple[str, int]]
    edges: list[Edge]
    _adj: dict[int, list[tuple[int, tuple[int, int, int]]]] | None = field(
        default=None, repr=False, compare=False)

    def neighbors(self, u: int) -> list[tuple[int, tuple[int, int, int]]]:
        if self._adj is None:
            adj: dict[int, list] = {i: [] for i in range(len(self.vertices))}
            for i, j, s in self.edges:
                adj[i].append((j, s))
                adj[j].append((i, tuple(-x for x in s)))
            self._adj = adj
        return self._adj[u]

    def degree(self, u: int) -> int:
        return len(self.neighbors(u))

    def species_counts(self) -> Counter:
        return Counter(el for el, _ in self.vertices)

    def element(self, u: int) -> str:
        return self.vertices[u][0]


def canonical_edge(i: int, j: int, shift: tuple[int, int, int]) -> Edge:
    if j < i:
        return (j, i, tuple(-x for x in shift))
    if i == j:
        for x in shift:
            if x > 0:
                return (i, j, shift)
            if x < 0:
                return (i, j, tuple(-y for y in shift))
    return (i, j, shift)


def min_image_distance(structure: CrystalStructure, i: int, j: int) -> float:
    """Minimum Cartesian distance between sites over the 27 neighboring images."""
    if i == j:
        return 0.0
    mat = structure.lattice.matrix
    d0 = np.array(structure.sites[j].frac) - np.array(structure.sites[i].frac)
    vecs = (d0 + _SHIFTS) @ mat
    return float(np.sqrt((vecs**2).sum(axis=1).min()))


def _distance_matrices(structure: CrystalStructure):
    """Yield (shift, full NxN Cartesian distance matrix) for all 27 shifts."""
    mat = structure.lattice.matrix
    frac = np.array([s.frac for s in structure.sites], dtype=float).reshape(-1, 3)
    diff = frac[None, :, :] - frac[:, None, :]
    for shift in _SHIFTS:
        cart = (diff + shift) @ mat
        yield tuple(int(x) for x in shift), np.sqrt((cart**2).sum(axis=2))


def build_graph(structure: CrystalStructure, policy: BondPolicy | None = None) -> PeriodicGraph:
    """Perceive bonds (or trust the file's bond list when the policy says so)."""
    policy = policy or BondPolicy()
    vertices = [(s.element, idx) for idx, s in enumerate(structure.sites)]

    if policy.trust_explicit and structure.explicit_bonds:
        edges = sorted({canonical_edge(i, j, s) for i, j, s in structure.explicit_bonds})
        return PeriodicGraph(vertices, edges)

    elements = sorted({s.element for s in structure.sites})
    n = len(structure.sites)
    thr = np.zeros((n, n))
    lookup = {}
    for e1 in elements:
        for e2 in elements:
            lookup[(e1, e2)] = policy.threshold(e1, e2) or -1.0
    el = [s.element for s in structure.sites]
    for i in range(n):
        for j in range(n):
            thr[i, j] = lookup[(el[i], el[j])]

    edges: set[Edge] = set()
    for shift, dist in _distance_matrices(structure):
        hits = (dist <= thr) & (dist > 1e-9)
        for i, j in zip(*np.nonzero(hits)):
            i, j = int(i), int(j)
            if i < j or (i == j and shift > (0, 0, 0)):
                edges.add(canonical_edge(i, j, shift))
    return PeriodicGraph(vertices, sorted(edges))


@dataclass
class Component:
    site_indices: list[int]
    spanning: bool

    def formula(self, graph: PeriodicGraph) -> str:
        counts = Counter(graph.element(i) for i in self.site_indices)
        return "".join(f"{e}{counts[e] if counts[e] > 1 else ''}" for e in sorted(counts))


def connected_components(graph: PeriodicGraph) -> list[Component]:
    """Connected components; a component is periodic-spanning when some cycle
    accumulates a nonzero net image shift."""
    n = len(graph.vertices)
    seen: dict[int, tuple[int, int, int]] = {}
    components: list[Component] = []
    for root in range(n):
        if root in seen:
            continue
        seen[root] = (0, 0, 0)
        members = [root]
        spanning = False
        queue = [root]
        while queue:
            u = queue.pop()
            ou = seen[u]
            for v, s in graph.neighbors(u):
                ov = (ou[0] + s[0], ou[1] + s[1], ou[2] + s[2])
                if v not in seen:
                    seen[v] = ov
                    members.append(v)
                    queue.append(v)
                elif seen[v] != ov:
                    spanning = True
        components.append(Component(sorted(members), spanning))
    return components


def component_molgraph(graph: PeriodicGraph, component: Component) -> MolecularGraph:
    """Finite component as a molecular graph (image shifts dropped)."""
    remap = {site: k for k, site in enumerate(component.site_indices)}
    bonds = set()
    for i, j, _ in graph.edges:
        if i in remap and j in remap and i != j:
            bonds.add((min(remap[i], remap[j]), max(remap[i], remap[j])))
    atoms = [graph.element(i) for i in component.site_indices]
    return MolecularGraph(atoms, sorted(bonds))


@dataclass
class RemovalReport:
    removed: dict[str, int]
    kept_unmatched: list[str]


def remove_free_solvent(
    structure: CrystalStructure,
    solvents: list[MolecularGraph],
    policy: BondPolicy | None = None,
) -> tuple[CrystalStructure, RemovalReport]:
    """Delete finite components isomorphic to a library solvent graph.

    Periodic-spanning components and unmatched finite components are kept; the
    latter are reported by formula. Idempotent by construction.
    """
    graph = build_graph(structure, policy)
    components = connected_components(graph)
    removed_sites: set[int] = set()
    removed: dict[str, int] = {}
    kept: list[str] = []
    for comp in components:
        if comp.spanning:
            continue
        mol = component_molgraph(graph, comp)
        match = next((s for s in solvents if is_isomorphic(mol, s)), None)
        if match is not None:
            removed[match.name or "solvent"] = removed.get(match.name or "solvent", 0) + 1
            removed_sites.update(comp.site_indices)
        else:
            kept.append(comp.formula(graph))
    keep = [i for i in range(len(structure.sites)) if i not in removed_sites]
    remap = {old: new for new, old in enumerate(keep)}
    out = structure.copy()
    out.sites = [out.sites[i] for i in keep]
    out.explicit_bonds = [
        (remap[i], remap[j], s)
        for i, j, s in structure.explicit_bonds
        if i in remap and j in remap
    ]
    return out, RemovalReport(removed, sorted(kept))
