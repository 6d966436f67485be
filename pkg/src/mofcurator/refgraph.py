"""Literature-derived reference graphs.

A reference is a set of molecular-graph components with rational
multiplicities (component_set) or, when a full chemical diagram is available,
a single combined graph with explicit attachment edges (combined_diagram).

Name resolution order: the paper's abbreviation table, then the built-in
name -> SMILES table, then an optional pluggable resolver with an on-disk
cache (cache-only and therefore offline by default). A name written as an
acid ("H2bdc") whose deprotonated form appears in the formula has the stated
number of acidic hydrogens stripped from carboxylic/hydroxyl oxygens.
"""

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol

from .formula import ComponentRole, ComponentSpec
from .molgraph import MolecularGraph
from .smiles import parse_smiles


class UnresolvedName(Exception):
    """Raised when no resolution route knows the component name."""


class InconsistentDiagram(Exception):
    """Raised when combined-diagram attachment edges do not type-check."""


@dataclass
class ReferenceComponent:
    spec: ComponentSpec
    graph: MolecularGraph


@dataclass
class ReferenceGraph:
    components: list[ReferenceComponent]
    kind: str = "component_set"  # or "combined_diagram"
    attachments: list[tuple[int, int, int, int]] = field(default_factory=list)
    # attachment edge: (component_a, atom_a, component_b, atom_b)

    def species_counts(self) -> dict[str, Fraction]:
        counts: dict[str, Fraction] = {}
        for comp in self.components:
            for el, n in comp.graph.element_counts().items():
                counts[el] = counts.get(el, Fraction(0)) + comp.spec.multiplicity * n
        return counts

    def integral_species_counts(self) -> dict[str, int]:
        out = {}
        for el, n in self.species_counts().items():
            if n.denominator != 1:
                raise ValueError(f"species count for {el} is fractional; scale the formula")
            out[el] = int(n)
        return out


# ---------------------------------------------------------------------------
# name resolution

def _load_table(filename: str) -> dict[str, str]:
    table = {}
    text = resources.files("mofcurator.data").joinpath(filename).read_text()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, smiles = line.split()
        table[name] = smiles
    return table


_BUILTIN: dict[str, str] | None = None


def builtin_name_table() -> dict[str, str]:
    global _BUILTIN
    if _BUILTIN is None:
        _BUILTIN = _load_table("name_smiles.txt")
    return _BUILTIN


def _normalize_name(name: str) -> str:
    return name.strip().lower().replace(" ", "_")


class NameResolver(Protocol):
    def __call__(self, name: str) -> str | None:
        """Return a SMILES for the chemical name, or None when unknown."""


class CachedResolver:
    """Wraps a remote resolver with a JSON on-disk cache.

    With fetch=None the resolver is cache-only and never touches the network,
    which is the offline default.
    """

    def __init__(self, cache_path: str | Path, fetch: Callable[[str], str | None] | None = None):
        self.cache_path = Path(cache_path)
        self.fetch = fetch
        if self.cache_path.exists():
            self._cache = json.loads(self.cache_path.read_text())
        else:
            self._cache = {}

    def __call__(self, name: str) -> str | None:
        key = _normalize_name(name)
        if key in self._cache:
            return self._cache[key]
        if self.fetch is None:
            return None
        smiles = self.fetch(name)
        if smiles is not None:
            self._cache[key] = smiles
            self.cache_path.parent.mkdir(parents=True, exist_ok=True)
            self.cache_path.write_text(json.dumps(self._cache, indent=0, sort_keys=True))
        return smiles


_ACID_PREFIX_RE = re.compile(r"^H(\d*)(?=[a-zA-Z])")


def resolve_name(
    name: str,
    abbreviations: dict[str, str] | None = None,
    resolver: NameResolver | None = None,
) -> MolecularGraph:
    """Resolve a component name to a molecular graph.

    The abbreviation table maps short names to full chemical names. A name
    found only through its acid form ("btpdc" via "H2btpdc") is deprotonated
    by the acid's hydrogen count.
    """
    abbreviations = {k: v for k, v in (abbreviations or {}).items()}
    candidates: list[tuple[str, int]] = [(name, 0)]  # (name to look up, H to strip)
    if name in abbreviations:
        candidates = [(abbreviations[name], 0)]
    else:
        lowered = {k.lower(): v for k, v in abbreviations.items()}
        if name.lower() in lowered:
            candidates = [(lowered[name.lower()], 0)]
        else:
            for n in range(1, 7):
                prefix = "H" + ("" if n == 1 else str(n))
                acid = prefix + name
                if acid in abbreviations:
                    candidates = [(abbreviations[acid], n)]
                    break
                if acid.lower() in lowered:
                    candidates = [(lowered[acid.lower()], n)]
                    break

    lookup_name, strip = candidates[0]
    smiles = _lookup_smiles(lookup_name, resolver)
    if smiles is None and strip == 0:
        # the name itself may be an acid alias in the builtin table
        m = _ACID_PREFIX_RE.match(name)
        if m:
            base = name[m.end():]
            got = _lookup_smiles(base, resolver)
            if got is not None:
                smiles, strip = got, 0
    if smiles is None:
        raise UnresolvedName(name)
    graph = parse_smiles(smiles)
    graph.name = name
    if strip:
        graph = deprotonate(graph, strip)
        graph.name = name
    return graph


def _lookup_smiles(name: str, resolver: NameResolver | None) -> str | None:
    table = builtin_name_table()
    key = _normalize_name(name)
    if key in table:
        return table[key]
    if resolver is not None:
        return resolver(name)
    return None


def deprotonate(graph: MolecularGraph, n: int) -> MolecularGraph:
    """Remove n acidic hydrogens: carboxylic O-H first, then any other O-H,
    lowest atom index first."""
    def carboxylic(h_idx: int) -> bool:
        (o_idx,) = graph.neighbors(h_idx)
        heavies = [a for a in graph.neighbors(o_idx) if graph.atoms[a] != "H"]
        if len(heavies) != 1 or graph.atoms[heavies[0]] != "C":
            return False
        c = heavies[0]
        oxygens = [a for a in graph.neighbors(c) if graph.atoms[a] == "O"]
        return len(oxygens) >= 2

    acidic = [
        i for i, el in enumerate(graph.atoms)
        if el == "H" and len(graph.neighbors(i)) == 1
        and graph.atoms[graph.neighbors(i)[0]] == "O"
    ]
    acidic.sort(key=lambda i: (not carboxylic(i), i))
    if len(acidic) < n:
        raise UnresolvedName(f"cannot strip {n} acidic H from {graph.name or 'molecule'}")
    drop = set(acidic[:n])
    keep = [i for i in range(len(graph.atoms)) if i not in drop]
    remap = {old: new for new, old in enumerate(keep)}
    bonds = []
    orders = []
    for k, (i, j) in enumerate(graph.bonds):
        if i in remap and j in remap:
            bonds.append((remap[i], remap[j]))
            if graph.bond_orders:
                orders.append(graph.bond_orders[k])
    return MolecularGraph(
        atoms=[graph.atoms[i] for i in keep],
        bonds=bonds,
        bond_orders=orders if graph.bond_orders else None,
        charge=graph.charge - n,
        name=graph.name,
    )


# ---------------------------------------------------------------------------
# reference building

def build_reference_graph(
    specs: list[ComponentSpec],
    abbreviations: dict[str, str] | None = None,
    resolver: NameResolver | None = None,
    attachments: list[tuple[int, int, int, int]] | None = None,
) -> ReferenceGraph:
    """Resolve every component; merge duplicate names by summing multiplicity.

    With attachment edges a combined_diagram is produced after validating that
    every edge references existing components/atoms and the diagram is
    connected across components.
    """
    merged: dict[tuple[str, ComponentRole], ComponentSpec] = {}
    order: list[tuple[str, ComponentRole]] = []
    for spec in specs:
        key = (spec.name, spec.role)
        if key in merged:
            merged[key].multiplicity += spec.multiplicity
        else:
            merged[key] = ComponentSpec(spec.name, spec.multiplicity, spec.role, spec.charge_hint)
            order.append(key)

    components = []
    for key in order:
        spec = merged[key]
        if spec.name in _single_elements():
            graph = MolecularGraph([spec.name], [], name=spec.name)
        else:
            graph = resolve_name(spec.name, abbreviations, resolver)
        components.append(ReferenceComponent(spec, graph))

    ref = ReferenceGraph(components)
    if attachments:
        ref.kind = "combined_diagram"
        ref.attachments = list(attachments)
        _validate_diagram(ref)
    return ref


def _single_elements() -> set[str]:
    from .elements import ATOMIC_NUMBERS
    return set(ATOMIC_NUMBERS)


def _validate_diagram(ref: ReferenceGraph) -> None:
    n = len(ref.components)
    for ca, aa, cb, ab in ref.attachments:
        for c, a in ((ca, aa), (cb, ab)):
            if not 0 <= c < n:
                raise InconsistentDiagram(f"attachment references component {c}")
            if not 0 <= a < len(ref.components[c].graph.atoms):
                raise InconsistentDiagram(f"attachment references atom {a} of component {c}")
        if ca == cb:
            raise InconsistentDiagram("attachment must join two different components")
        if ref.components[ca].spec.multiplicity.denominator != 1 or \
                ref.components[cb].spec.multiplicity.denominator != 1:
            raise InconsistentDiagram("combined diagrams need integral multiplicities")
    linked = {0} if n else set()
    changed = True
    while changed:
        changed = False
        for ca, _, cb, _ in ref.attachments:
            if (ca in linked) != (cb in linked):
                linked.update((ca, cb))
                changed = True
    if n > 1 and linked != set(range(n)):
        raise InconsistentDiagram("diagram does not connect all components")


def solvent_library() -> list[MolecularGraph]:
    """Named solvent graphs from the shipped library file."""
    graphs = []
    for name, smiles in _load_table("solvents.txt").items():
        g = parse_smiles(smiles)
        g.name = name
        graphs.append(g)
    return graphs
