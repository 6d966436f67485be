"""Structural-motif rules driving deterministic hydrogen assignment.

The shipped table holds the Zr6 node rule: eight capping oxygens sit on the
faces of a Zr6 octahedron, and charge balance wants four of them protonated
in an alternating pattern. Detection is purely graph-based; the repair layer
performs the actual hydrogen edits.

Rule files are INI-style. Each section is one rule:

    [rule zr6_oxo_hydroxo]
    metal = Zr
    metal_count = 6
    cap_element = O
    cap_metal_neighbors = 3
    cap_count = 8
    protonate_count = 4
"""

import configparser
from dataclasses import dataclass
from importlib import resources

from .crystal import PeriodicGraph
from .elements import is_metal


@dataclass(frozen=True)
class MotifRule:
    name: str
    metal: str
    metal_count: int
    cap_element: str
    cap_metal_neighbors: int
    cap_count: int
    protonate_count: int


@dataclass
class Motif:
    rule: MotifRule
    metal_sites: list[int]
    cap_sites: list[int]
    protonate: list[int]  # caps the rule wants protonated
    bare: list[int]


def load_rules(path: str | None = None) -> list[MotifRule]:
    parser = configparser.ConfigParser()
    if path is None:
        text = (
            resources.files("mofcurator").joinpath("data/chemical_rules.txt").read_text()
        )
        parser.read_string(text)
    else:
        with open(path) as fh:
            parser.read_file(fh)
    rules = []
    for section in parser.sections():
        if not section.startswith("rule"):
            continue
        name = section.split(None, 1)[1] if " " in section else section
        sec = parser[section]
        rules.append(
            MotifRule(
                name=name,
                metal=sec["metal"],
                metal_count=sec.getint("metal_count"),
                cap_element=sec["cap_element"],
                cap_metal_neighbors=sec.getint("cap_metal_neighbors"),
                cap_count=sec.getint("cap_count"),
                protonate_count=sec.getint("protonate_count"),
            )
        )
    return rules


def _cap_sites(graph: PeriodicGraph, rule: MotifRule) -> dict[int, set[int]]:
    """Candidate caps: right element, exactly the required count of rule-metal
    neighbors, and no heavy non-metal neighbors."""
    caps: dict[int, set[int]] = {}
    for v in range(len(graph.vertices)):
        if graph.element(v) != rule.cap_element:
            continue
        metals = set()
        ok = True
        for u, _ in graph.neighbors(v):
            el = graph.element(u)
            if el == rule.metal:
                metals.add(u)
            elif el == "H":
                continue
            elif is_metal(el):
                ok = False
                break
            else:
                ok = False
                break
        if ok and len(metals) == rule.cap_metal_neighbors:
            caps[v] = metals
    return caps


def find_motifs(graph: PeriodicGraph, rule: MotifRule) -> list[Motif]:
    caps = _cap_sites(graph, rule)
    if not caps:
        return []

    # caps sharing a metal belong to the same node
    parent = {v: v for v in caps}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    by_metal: dict[int, list[int]] = {}
    for v, metals in caps.items():
        for m in metals:
            by_metal.setdefault(m, []).append(v)
    for group in by_metal.values():
        for other in group[1:]:
            ra, rb = find(group[0]), find(other)
            if ra != rb:
                parent[rb] = ra

    clusters: dict[int, list[int]] = {}
    for v in caps:
        clusters.setdefault(find(v), []).append(v)

    motifs = []
    for members in clusters.values():
        members.sort()
        metals = sorted(set().union(*(caps[v] for v in members)))
        if len(metals) != rule.metal_count or len(members) != rule.cap_count:
            continue
        coloring = _bipartition(members, caps)
        if coloring is None:
            continue
        class_a = sorted(v for v in members if coloring[v] == 0)
        class_b = sorted(v for v in members if coloring[v] == 1)
        if len(class_a) != rule.protonate_count or len(class_b) != (
            rule.cap_count - rule.protonate_count
        ):
            continue
        chosen = _choose_class(graph, class_a, class_b)
        other = class_b if chosen is class_a else class_a
        motifs.append(Motif(rule, metals, members, list(chosen), list(other)))
    motifs.sort(key=lambda m: m.cap_sites[0])
    return motifs


def _bipartition(members: list[int], caps: dict[int, set[int]]):
    """Two-color caps under 'shares at least two metals' adjacency; on the
    octahedral node this is the cube graph, whose classes alternate."""
    adj: dict[int, list[int]] = {v: [] for v in members}
    for i, a in enumerate(members):
        for b in members[i + 1 :]:
            if len(caps[a] & caps[b]) >= 2:
                adj[a].append(b)
                adj[b].append(a)
    color: dict[int, int] = {}
    for start in members:
        if start in color:
            continue
        color[start] = 0
        queue = [start]
        while queue:
            v = queue.pop(0)
            for u in adj[v]:
                if u not in color:
                    color[u] = 1 - color[v]
                    queue.append(u)
                elif color[u] == color[v]:
                    return None
    return color


def _choose_class(graph: PeriodicGraph, class_a: list[int], class_b: list[int]):
    """Prefer the class that already carries hydrogens; fall back to the one
    holding the lowest site index."""

    def h_count(sites):
        n = 0
        for v in sites:
            n += sum(1 for u, _ in graph.neighbors(v) if graph.element(u) == "H")
        return n

    ha, hb = h_count(class_a), h_count(class_b)
    if ha > hb:
        return class_a
    if hb > ha:
        return class_b
    return class_a if min(class_a) < min(class_b) else class_b
