"""SMILES subset parser producing explicit-hydrogen molecular graphs.

Supported: organic-subset atoms (B C N O P S F Cl Br I and aromatic
b c n o p s), bracket atoms with explicit H counts and charges, single/double/
triple/aromatic bonds, branches, and ring closures (digits and %nn). Aromatic
systems are kekulized deterministically, pairing the lowest-index atom first.
Implicit hydrogens follow standard valences (N 3/5, S 2/4/6, P 3/5).

Rejected with UnsupportedSmiles: stereo markers, isotopes, wildcards, atom
classes, and dot-disconnected fragments.
"""

import re

from .elements import ATOMIC_NUMBERS
from .molgraph import MolecularGraph


class UnsupportedSmiles(Exception):
    """Raised for syntax errors or constructs outside the supported subset."""


_ORGANIC = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
_AROMATIC_ORGANIC = ("b", "c", "n", "o", "p", "s")
_VALENCES = {
    "B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5),
    "S": (2, 4, 6), "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,),
}

_BRACKET_RE = re.compile(
    r"\[(?P<isotope>\d+)?(?P<symbol>[A-Z][a-z]?|[bcnops])(?P<stereo>@{1,2})?"
    r"(?P<hcount>H\d*)?(?P<charge>\+\d+|-\d+|\++|-+)?(?P<cls>:\d+)?\]"
)

_BOND_ORDER = {"-": 1, "=": 2, "#": 3}


class _Atom:
    __slots__ = ("element", "aromatic", "h_explicit", "charge")

    def __init__(self, element, aromatic, h_explicit, charge):
        self.element = element
        self.aromatic = aromatic
        self.h_explicit = h_explicit  # None means "fill by valence"
        self.charge = charge


def _parse_bracket(body: str) -> _Atom:
    m = _BRACKET_RE.fullmatch(body)
    if not m:
        raise UnsupportedSmiles(f"bad bracket atom {body!r}")
    if m.group("isotope"):
        raise UnsupportedSmiles("isotopes not supported")
    if m.group("stereo"):
        raise UnsupportedSmiles("stereochemistry not supported")
    if m.group("cls"):
        raise UnsupportedSmiles("atom classes not supported")
    raw = m.group("symbol")
    aromatic = raw[0].islower()
    if aromatic and raw not in _AROMATIC_ORGANIC:
        raise UnsupportedSmiles(f"aromatic symbol {raw!r} not supported")
    element = raw.capitalize() if aromatic else raw
    if element not in ATOMIC_NUMBERS:
        raise UnsupportedSmiles(f"unknown element {raw!r}")
    h = m.group("hcount")
    h_count = 0 if h is None else (1 if h == "H" else int(h[1:]))
    ch = m.group("charge") or ""
    if ch in ("", "+", "-"):
        charge = {"": 0, "+": 1, "-": -1}[ch]
    elif set(ch) <= {"+"}:
        charge = len(ch)
    elif set(ch) <= {"-"}:
        charge = -len(ch)
    else:
        charge = int(ch)
    return _Atom(element, aromatic, h_count, charge)


def parse_smiles(smiles: str) -> MolecularGraph:
    """Parse a SMILES string to a connected MolecularGraph with explicit H."""
    atoms: list[_Atom] = []
    bonds: list[list] = []  # [i, j, symbol-or-None]
    stack: list[int] = []
    prev: int | None = None
    pending: str | None = None
    rings: dict[int, tuple[int, str | None]] = {}

    def add_atom(atom: _Atom):
        nonlocal prev, pending
        atoms.append(atom)
        idx = len(atoms) - 1
        if prev is not None:
            bonds.append([prev, idx, pending])
        elif pending is not None:
            raise UnsupportedSmiles("dangling bond symbol")
        pending = None
        prev = idx

    def close_ring(num: int):
        nonlocal pending
        if prev is None:
            raise UnsupportedSmiles("ring closure before any atom")
        if num in rings:
            other, other_bond = rings.pop(num)
            if pending and other_bond and pending != other_bond:
                raise UnsupportedSmiles(f"conflicting bond symbols on ring {num}")
            if other == prev:
                raise UnsupportedSmiles("ring closure to the same atom")
            bonds.append([other, prev, pending or other_bond])
        else:
            rings[num] = (prev, pending)
        pending = None

    i = 0
    n = len(smiles)
    while i < n:
        ch = smiles[i]
        if ch in "/\\@*~":
            raise UnsupportedSmiles(f"{ch!r} not supported")
        if ch == ".":
            raise UnsupportedSmiles("disconnected fragments not supported")
        if ch in "-=#:":
            if pending is not None:
                raise UnsupportedSmiles("two consecutive bond symbols")
            pending = ch
            i += 1
            continue
        if ch == "(":
            if prev is None:
                raise UnsupportedSmiles("branch before any atom")
            stack.append(prev)
            i += 1
            continue
        if ch == ")":
            if not stack:
                raise UnsupportedSmiles("unbalanced parentheses")
            prev = stack.pop()
            i += 1
            continue
        if ch == "%":
            if i + 2 >= n or not smiles[i + 1:i + 3].isdigit():
                raise UnsupportedSmiles("bad %nn ring number")
            close_ring(int(smiles[i + 1:i + 3]))
            i += 3
            continue
        if ch.isdigit():
            close_ring(int(ch))
            i += 1
            continue
        if ch == "[":
            end = smiles.find("]", i)
            if end < 0:
                raise UnsupportedSmiles("unterminated bracket atom")
            add_atom(_parse_bracket(smiles[i:end + 1]))
            i = end + 1
            continue
        matched = False
        for sym in _ORGANIC:
            if smiles.startswith(sym, i):
                add_atom(_Atom(sym, False, None, 0))
                i += len(sym)
                matched = True
                break
        if matched:
            continue
        if ch in _AROMATIC_ORGANIC:
            add_atom(_Atom(ch.capitalize(), True, None, 0))
            i += 1
            continue
        raise UnsupportedSmiles(f"unexpected character {ch!r}")

    if stack:
        raise UnsupportedSmiles("unbalanced parentheses")
    if rings:
        raise UnsupportedSmiles(f"unclosed ring numbers {sorted(rings)}")
    if pending is not None:
        raise UnsupportedSmiles("dangling bond symbol")
    if not atoms:
        raise UnsupportedSmiles("empty SMILES")

    orders = _assign_orders(atoms, bonds)
    return _expand_hydrogens(atoms, bonds, orders)


def _assign_orders(atoms, bonds) -> list[int]:
    """Resolve bond orders, kekulizing aromatic systems deterministically."""
    orders = [0] * len(bonds)
    aromatic_bonds = []
    for k, (i, j, sym) in enumerate(bonds):
        if sym in _BOND_ORDER:
            orders[k] = _BOND_ORDER[sym]
        elif sym == ":" or (sym is None and atoms[i].aromatic and atoms[j].aromatic):
            aromatic_bonds.append(k)
            orders[k] = 1
        else:
            orders[k] = 1

    adj: dict[int, list[int]] = {}
    for k in aromatic_bonds:
        i, j, _ = bonds[k]
        adj.setdefault(i, []).append(k)
        adj.setdefault(j, []).append(k)

    degree = [0] * len(atoms)
    for i, j, _ in bonds:
        degree[i] += 1
        degree[j] += 1

    def needs_pi(idx: int) -> bool:
        atom = atoms[idx]
        if not atom.aromatic:
            return False
        if atom.element == "C":
            return True
        if atom.element in ("N", "P"):
            has_h = bool(atom.h_explicit)
            return degree[idx] == 2 and not has_h and atom.charge == 0
        return False  # aromatic O, S, B contribute lone pairs

    need = sorted(idx for idx in range(len(atoms)) if needs_pi(idx))
    if not need and not aromatic_bonds:
        return orders

    matched: dict[int, int] = {}

    def backtrack() -> bool:
        free = next((a for a in need if a not in matched), None)
        if free is None:
            return True
        for k in adj.get(free, []):
            i, j, _ = bonds[k]
            other = j if i == free else i
            if other in matched or other not in matched and not _is_need(other):
                continue
            matched[free] = other
            matched[other] = free
            if backtrack():
                return True
            del matched[free]
            del matched[other]
        return False

    need_set = set(need)

    def _is_need(a):
        return a in need_set

    if need and not backtrack():
        raise UnsupportedSmiles("cannot kekulize aromatic system")

    for k in aromatic_bonds:
        i, j, _ = bonds[k]
        if matched.get(i) == j:
            orders[k] = 2
    return orders


def _expand_hydrogens(atoms, bonds, orders) -> MolecularGraph:
    bondsum = [0] * len(atoms)
    for k, (i, j, _) in enumerate(bonds):
        bondsum[i] += orders[k]
        bondsum[j] += orders[k]

    h_counts = []
    for idx, atom in enumerate(atoms):
        if atom.h_explicit is not None:
            h_counts.append(atom.h_explicit)
            continue
        valences = _VALENCES.get(atom.element)
        if valences is None:
            h_counts.append(0)
            continue
        fill = next((v for v in valences if v >= bondsum[idx]), None)
        h_counts.append(fill - bondsum[idx] if fill is not None else 0)

    elements = [a.element for a in atoms]
    out_bonds = [(i, j) for i, j, _ in bonds]
    out_orders = list(orders)
    for idx, count in enumerate(h_counts):
        for _ in range(count):
            elements.append("H")
            out_bonds.append((idx, len(elements) - 1))
            out_orders.append(1)

    graph = MolecularGraph(
        atoms=elements,
        bonds=out_bonds,
        bond_orders=out_orders,
        charge=sum(a.charge for a in atoms),
    )
    graph.validate()
    if not graph.is_connected():
        raise UnsupportedSmiles("graph is not connected")
    return graph


def write_smiles(graph: MolecularGraph) -> str:
    """Emit a fully explicit SMILES for a parsed graph (test support).

    Every atom is written, hydrogens included, so parse(write(g)) is
    isomorphic to g for the supported subset.
    """
    if not graph.atoms:
        raise UnsupportedSmiles("empty graph")
    orders = {}
    for k, (i, j) in enumerate(graph.bonds):
        orders[(i, j)] = orders[(j, i)] = (graph.bond_orders[k] if graph.bond_orders else 1)

    visited: set[int] = set()
    ring_bonds: list[tuple[int, int]] = []
    ring_seen: set[tuple[int, int]] = set()
    tree: dict[int, list[int]] = {i: [] for i in range(len(graph.atoms))}

    def dfs(u: int, parent: int):
        visited.add(u)
        for v in sorted(graph.neighbors(u)):
            if v not in visited:
                tree[u].append(v)
                dfs(v, u)
            elif v != parent:
                key = (min(u, v), max(u, v))
                if key not in ring_seen:
                    ring_seen.add(key)
                    ring_bonds.append((u, v))

    dfs(0, -1)
    if len(visited) != len(graph.atoms):
        raise UnsupportedSmiles("graph is not connected")

    ring_digits: dict[tuple[int, int], int] = {}
    atom_rings: dict[int, list[int]] = {}
    for num, (u, v) in enumerate(ring_bonds, start=1):
        if num > 99:
            raise UnsupportedSmiles("too many rings")
        ring_digits[(u, v)] = num
        atom_rings.setdefault(u, []).append(num)
        atom_rings.setdefault(v, []).append(num)

    bond_sym = {1: "", 2: "=", 3: "#"}
    ring_first_seen: set[int] = set()
    ring_order_by_num = {ring_digits[(u, v)]: orders[(u, v)] for u, v in ring_bonds}

    def atom_token(u: int) -> str:
        el = graph.atoms[u]
        if graph.charge == 0 and el in _ORGANIC and el != "H":
            token = el
        else:
            token = f"[{el}]"
        digits = ""
        for num in atom_rings.get(u, []):
            prefix = ""
            if num not in ring_first_seen:
                ring_first_seen.add(num)
                prefix = bond_sym[ring_order_by_num[num]]
            digits += prefix + (str(num) if num < 10 else f"%{num:02d}")
        return token + digits

    def emit(u: int) -> str:
        parts = [atom_token(u)]
        children = tree[u]
        for idx, v in enumerate(children):
            seg = bond_sym[orders[(u, v)]] + emit(v)
            if idx < len(children) - 1:
                parts.append(f"({seg})")
            else:
                parts.append(seg)
        return "".join(parts)

    return emit(0)
