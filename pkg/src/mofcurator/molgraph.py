"""Finite molecular graphs: element-labeled vertices plus an undirected bond list."""

from collections import Counter
from dataclasses import dataclass, field

from .elements import ATOMIC_NUMBERS


@dataclass
class MolecularGraph:
    """A molecule as element symbols plus undirected bonds between atom indices.

    Hydrogens are explicit vertices unless implicit_h is set (parsers in this
    package always expand them). bond_orders, when present, parallels bonds and
    records integer orders for writers and tests; comparison logic ignores it.
    """

    atoms: list[str]
    bonds: list[tuple[int, int]]
    bond_orders: list[int] | None = None
    charge: int = 0
    implicit_h: bool = False
    name: str = ""
    _adj: dict[int, list[int]] | None = field(default=None, repr=False, compare=False)

    def validate(self) -> None:
        for a in self.atoms:
            if a not in ATOMIC_NUMBERS:
                raise ValueError(f"unknown element {a!r}")
        n = len(self.atoms)
        seen = set()
        for i, j in self.bonds:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ValueError(f"bad bond ({i}, {j})")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate bond ({i}, {j})")
            seen.add(key)
        if self.bond_orders is not None and len(self.bond_orders) != len(self.bonds):
            raise ValueError("bond_orders length mismatch")

    def neighbors(self, i: int) -> list[int]:
        if self._adj is None:
            adj: dict[int, list[int]] = {k: [] for k in range(len(self.atoms))}
            for a, b in self.bonds:
                adj[a].append(b)
                adj[b].append(a)
            self._adj = adj
        return self._adj[i]

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    def element_counts(self) -> Counter:
        return Counter(self.atoms)

    def is_connected(self) -> bool:
        if not self.atoms:
            return True
        seen = {0}
        stack = [0]
        while stack:
            for nb in self.neighbors(stack.pop()):
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == len(self.atoms)

    def heavy_skeleton(self) -> tuple["MolecularGraph", list[int], dict[int, int]]:
        """Strip hydrogens.

        Returns (skeleton, old index per skeleton atom, hydrogen count per
        skeleton index).
        """
        keep = [i for i, a in enumerate(self.atoms) if a != "H"]
        remap = {old: new for new, old in enumerate(keep)}
        h_counts = {remap[i]: 0 for i in keep}
        bonds = []
        for a, b in self.bonds:
            ea, eb = self.atoms[a], self.atoms[b]
            if ea != "H" and eb != "H":
                bonds.append((remap[a], remap[b]))
            elif ea == "H" and eb != "H":
                h_counts[remap[b]] += 1
            elif eb == "H" and ea != "H":
                h_counts[remap[a]] += 1
        skel = MolecularGraph([self.atoms[i] for i in keep], bonds, name=self.name)
        return skel, keep, h_counts


def is_isomorphic(a: MolecularGraph, b: MolecularGraph) -> bool:
    """Exact element-labeled graph isomorphism, meant for small molecules."""
    if len(a.atoms) != len(b.atoms) or len(a.bonds) != len(b.bonds):
        return False
    if a.element_counts() != b.element_counts():
        return False
    sig_a = Counter((el, a.degree(i)) for i, el in enumerate(a.atoms))
    sig_b = Counter((el, b.degree(i)) for i, el in enumerate(b.atoms))
    if sig_a != sig_b:
        return False

    counts = a.element_counts()
    order = sorted(range(len(a.atoms)), key=lambda i: (counts[a.atoms[i]], -a.degree(i), i))
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def candidates(i: int):
        mapped_nbrs = [mapping[nb] for nb in a.neighbors(i) if nb in mapping]
        if mapped_nbrs:
            pool = set(b.neighbors(mapped_nbrs[0]))
            for m in mapped_nbrs[1:]:
                pool &= set(b.neighbors(m))
        else:
            pool = set(range(len(b.atoms)))
        for j in sorted(pool):
            if j in used:
                continue
            if b.atoms[j] != a.atoms[i] or b.degree(j) != a.degree(i):
                continue
            if all(mapping.get(nb) is None or mapping[nb] in b.neighbors(j)
                   for nb in a.neighbors(i)):
                yield j

    def extend(pos: int) -> bool:
        if pos == len(order):
            return True
        i = order[pos]
        for j in candidates(i):
            mapping[i] = j
            used.add(j)
            if extend(pos + 1):
                return True
            del mapping[i]
            used.discard(j)
        return False

    return extend(0)
