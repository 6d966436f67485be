"""Subgraph embedding search on periodic bond graphs.

Patterns are heavy-atom component skeletons; targets are heavy-atom views of
a periodic graph. An embedding maps pattern vertices to distinct sites such
that every pattern edge lands on a bond, image shifts are consistent around
cycles (a molecule cannot close through a net lattice translation), and
non-metal pattern vertices match sites whose heavy non-metal degree is exactly
the pattern degree. Metal neighbors are invisible to the degree rule, so
framework coordination does not disturb component matching.

The search backtracks from the rarest-element vertex outward and counts node
expansions against a budget.
"""

from dataclasses import dataclass

from .crystal import PeriodicGraph
from .elements import is_metal
from .molgraph import MolecularGraph

DEFAULT_BUDGET = 10_000_000
DEFAULT_EMBEDDING_LIMIT = 20_000

Shift = tuple[int, int, int]


class MatchTimeout(Exception):
    """Raised when the node-expansion budget is exhausted."""


@dataclass
class TargetView:
    sites: list[int]  # original site index per view vertex
    elements: list[str]
    adj: list[dict[int, list[Shift]]]
    eff_degree: list[int]  # heavy, non-metal incident edge count


def heavy_view(graph: PeriodicGraph) -> TargetView:
    keep = [i for i, (el, _) in enumerate(graph.vertices) if el != "H"]
    remap = {orig: k for k, orig in enumerate(keep)}
    elements = [graph.element(i) for i in keep]
    adj: list[dict[int, list[Shift]]] = [dict() for _ in keep]
    for i, j, s in graph.edges:
        if i in remap and j in remap:
            vi, vj = remap[i], remap[j]
            adj[vi].setdefault(vj, []).append(s)
            # a self-image bond touches the site from both directions
            adj[vj].setdefault(vi, []).append(tuple(-x for x in s))
    eff = []
    for k in range(len(keep)):
        n = 0
        for other, shifts in adj[k].items():
            if not is_metal(elements[other]):
                n += len(shifts)
        eff.append(n)
    return TargetView([graph.vertices[i][1] for i in keep], elements, adj, eff)


def _pattern_order(pattern: MolecularGraph, element_rarity: dict[str, int]):
    """BFS order rooted at the rarest pattern element; every later vertex is
    reached through an already-mapped neighbor."""
    n = len(pattern.atoms)
    root = min(
        range(n),
        key=lambda i: (element_rarity.get(pattern.atoms[i], 0), -pattern.degree(i), i),
    )
    order: list[tuple[int, int | None]] = [(root, None)]
    seen = {root}
    queue = [root]
    while queue:
        u = queue.pop(0)
        for v in sorted(pattern.neighbors(u)):
            if v not in seen:
                seen.add(v)
                order.append((v, u))
                queue.append(v)
    if len(order) != n:
        raise ValueError("pattern graph must be connected")
    return order


def find_embeddings(
    target: TargetView,
    pattern: MolecularGraph,
    budget: int = DEFAULT_BUDGET,
    limit: int = DEFAULT_EMBEDDING_LIMIT,
    collapse_automorphic: bool = True,
) -> list[dict[int, int]]:
    """All embeddings as {pattern index -> site index} maps.

    By default embeddings that use the same site set (automorphic
    re-labelings) are collapsed to the first mapping found; pass
    collapse_automorphic=False to keep every distinct mapping, which matters
    when pattern vertices carry extra payload such as hydrogen counts.
    """
    n = len(pattern.atoms)
    if n == 0:
        return []
    rarity: dict[str, int] = {}
    for el in target.elements:
        rarity[el] = rarity.get(el, 0) + 1
    if any(el not in rarity for el in pattern.atoms):
        return []
    order = _pattern_order(pattern, rarity)

    view_of_site = {s: k for k, s in enumerate(target.sites)}
    budget_left = budget
    results: list[dict[int, int]] = []
    seen_site_sets: set[frozenset[int]] = set()

    # the degree rule ignores metal neighbors on both sides, so a pattern
    # vertex bonded only to metals (a bridging oxide, say) has degree 0
    pattern_eff = [
        sum(1 for q in pattern.neighbors(p) if not is_metal(pattern.atoms[q]))
        for p in range(n)
    ]

    def degree_ok(p: int, view_idx: int) -> bool:
        if is_metal(pattern.atoms[p]):
            return True
        return target.eff_degree[view_idx] == pattern_eff[p]

    assignment: dict[int, int] = {}  # pattern -> view index
    offsets: dict[int, tuple[int, int, int]] = {}
    used: set[int] = set()

    def consistent(p: int, view_idx: int, offset) -> bool:
        for q in pattern.neighbors(p):
            if q not in assignment or q == _parent_of[p]:
                continue
            shifts = target.adj[view_idx].get(assignment[q])
            if not shifts:
                return False
            oq = offsets[q]
            if not any(
                (offset[0] + s[0], offset[1] + s[1], offset[2] + s[2]) == oq
                for s in shifts
            ):
                return False
        return True

    _parent_of = {p: parent for p, parent in order}

    def extend(k: int) -> bool:
        """Returns False when a global stop (budget/limit) is hit."""
        nonlocal budget_left
        if k == n:
            sites = frozenset(target.sites[v] for v in assignment.values())
            if not collapse_automorphic or sites not in seen_site_sets:
                seen_site_sets.add(sites)
                results.append({p: target.sites[v] for p, v in assignment.items()})
            return len(results) < limit
        p, parent = order[k]
        el = pattern.atoms[p]
        if parent is None:
            candidates = [
                (v, (0, 0, 0))
                for v in range(len(target.elements))
                if target.elements[v] == el
            ]
        else:
            pv = assignment[parent]
            po = offsets[parent]
            candidates = []
            for v, shifts in target.adj[pv].items():
                if target.elements[v] != el:
                    continue
                for s in shifts:
                    candidates.append((v, (po[0] + s[0], po[1] + s[1], po[2] + s[2])))
        for v, off in sorted(candidates):
            budget_left -= 1
            if budget_left < 0:
                raise MatchTimeout("node-expansion budget exhausted")
            if v in used or not degree_ok(p, v) or not consistent(p, v, off):
                continue
            assignment[p] = v
            offsets[p] = off
            used.add(v)
            ok = extend(k + 1)
            del assignment[p]
            del offsets[p]
            used.discard(v)
            if not ok:
                return False
        return True

    extend(0)
    results.sort(key=lambda m: tuple(sorted(m.values())))
    return results


def maximum_disjoint(embeddings: list[dict[int, int]]) -> list[int]:
    """Indices of a maximum site-disjoint subset, greedy then exactly maximized
    when the overlap graph is small."""
    site_sets = [frozenset(m.values()) for m in embeddings]
    n = len(site_sets)
    overlap = [set() for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if site_sets[i] & site_sets[j]:
                overlap[i].add(j)
                overlap[j].add(i)

    greedy: list[int] = []
    taken_sites: set[int] = set()
    for i in range(n):
        if not (site_sets[i] & taken_sites):
            greedy.append(i)
            taken_sites |= site_sets[i]

    if n > 40 or not any(overlap):
        return greedy

    best = list(greedy)

    def search(idx: int, chosen: list[int], banned: set[int]):
        nonlocal best
        if len(chosen) + (n - idx) <= len(best):
            return
        if idx == n:
            if len(chosen) > len(best):
                best = list(chosen)
            return
        if idx not in banned:
            search(idx + 1, chosen + [idx], banned | overlap[idx])
        search(idx + 1, chosen, banned)

    search(0, [], set())
    return best
