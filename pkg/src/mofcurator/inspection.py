"""Validation of a crystal bond graph against a reference graph.

Three tests run in a fixed order. The species test checks that element
counts are a single rational multiple k of the reference counts. The
coordination test compares the multiset of per-atom environment labels
against the k-scaled reference multiset. The subgraph test counts
vertex-disjoint embeddings of every reference component. Their outcomes are
classified into hydrogen, bond, and disorder errors with severity
disorder > bond > hydrogen.
"""

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from .crystal import BondPolicy, PeriodicGraph, build_graph, connected_components
from .cif import CrystalStructure
from .elements import atomic_number, is_metal
from .matching import (
    DEFAULT_BUDGET,
    MatchTimeout,
    find_embeddings,
    heavy_view,
    maximum_disjoint,
)
from .molgraph import MolecularGraph
from .refgraph import ReferenceGraph

OCCUPANCY_EPS = 1e-9

SEVERITY_ORDER = {"hydrogen": 1, "bond": 2, "disorder": 3}


class MissingAnchor(Exception):
    """No element shared by structure and reference can fix the scale factor."""


@dataclass(frozen=True, order=True)
class CoordinationLabel:
    element: str
    neighbor_elements: tuple[str, ...]

    def __str__(self):
        return f"{self.element}({','.join(self.neighbor_elements)})"


@dataclass
class ScalingResult:
    anchor_element: str
    factor: Fraction
    scaled_reference: dict[str, Fraction]
    mismatches: list[tuple[str, Fraction, int]]  # element, expected, found

    @property
    def passed(self) -> bool:
        return not self.mismatches


@dataclass
class LabelDiff:
    label: CoordinationLabel
    expected: Fraction
    found: int


@dataclass
class SubgraphMatchResult:
    name: str
    expected: int | None
    found: int | None  # None when the search timed out
    matches: list[frozenset[int]] = field(default_factory=list)


@dataclass
class DiagnosisError:
    kind: str  # bond | hydrogen | disorder
    detail: str


@dataclass
class DiagnosisReport:
    scaling: ScalingResult
    coordination_diffs: list[LabelDiff]
    coordination_ran: bool
    subgraph_counts: list[SubgraphMatchResult]
    errors: list[DiagnosisError]
    severity: str | None
    notes: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.errors

    def to_text(self) -> str:
        lines = []
        lines.append(f"status: {'clean' if self.clean else 'errors'}")
        if self.severity:
            lines.append(f"severity: {self.severity}")
        s = self.scaling
        lines.append(
            f"species: {'pass' if s.passed else 'fail'}"
            f" anchor={s.anchor_element} k={s.factor}"
        )
        for el, expected, found in s.mismatches:
            lines.append(f"  mismatch {el} expected={expected} found={found}")
        if not self.coordination_ran:
            lines.append("coordination: skipped (species test failed)")
        elif not self.coordination_diffs:
            lines.append("coordination: pass")
        else:
            lines.append(f"coordination: {len(self.coordination_diffs)} label differences")
            for d in self.coordination_diffs:
                lines.append(f"  {d.label} expected={d.expected} found={d.found}")
        for r in self.subgraph_counts:
            found = "timeout" if r.found is None else r.found
            expected = "?" if r.expected is None else r.expected
            lines.append(f"subgraph: {r.name} expected={expected} found={found}")
        for e in self.errors:
            lines.append(f"error: {e.kind}: {e.detail}")
        for n in self.notes:
            lines.append(f"note: {n}")
        return "\n".join(lines) + "\n"


def choose_anchor(cif_counts: dict[str, int], ref_counts: dict[str, int]) -> str:
    """Element fixing the scale factor: the rarest in the structure among
    elements the reference also contains, ties broken by heavier atomic
    number. Rarity on the structure side keeps the choice stable when the
    reference lists a trace element the deposit multiplies differently."""
    common = [el for el, n in cif_counts.items() if n > 0 and ref_counts.get(el, 0) > 0]
    if not common:
        raise MissingAnchor("no element shared between structure and reference")
    return min(common, key=lambda el: (cif_counts[el], -atomic_number(el)))


def species_scaling_test(
    cif_counts: dict[str, int],
    ref_counts: dict[str, int],
    anchor: str,
) -> ScalingResult:
    if cif_counts.get(anchor, 0) <= 0 or ref_counts.get(anchor, 0) <= 0:
        raise MissingAnchor(f"anchor {anchor} absent from structure or reference")
    k = Fraction(cif_counts[anchor], ref_counts[anchor])
    scaled = {el: k * n for el, n in ref_counts.items()}
    mismatches = []
    for el in sorted(set(scaled) | set(cif_counts)):
        expected = scaled.get(el, Fraction(0))
        found = cif_counts.get(el, 0)
        if expected != found:
            mismatches.append((el, expected, found))
    return ScalingResult(anchor, k, scaled, mismatches)


def _graph_labels(graph: PeriodicGraph, wildcard_metals: bool) -> Counter:
    labels: Counter = Counter()
    for v in range(len(graph.vertices)):
        el = graph.element(v)
        if wildcard_metals and is_metal(el):
            labels[CoordinationLabel(el, ())] += 1
            continue
        neigh = [graph.element(u) for u, _ in graph.neighbors(v)]
        if wildcard_metals:
            neigh = [x for x in neigh if not is_metal(x)]
        labels[CoordinationLabel(el, tuple(sorted(neigh)))] += 1
    return labels


def _reference_labels(
    ref: ReferenceGraph, wildcard_metals: bool
) -> dict[CoordinationLabel, Fraction]:
    extra: dict[tuple[int, int], list[str]] = {}
    if ref.kind == "combined_diagram":
        for ca, aa, cb, ab in ref.attachments:
            extra.setdefault((ca, aa), []).append(ref.components[cb].graph.atoms[ab])
            extra.setdefault((cb, ab), []).append(ref.components[ca].graph.atoms[aa])
    out: dict[CoordinationLabel, Fraction] = {}
    for ci, comp in enumerate(ref.components):
        g = comp.graph
        for i, el in enumerate(g.atoms):
            if wildcard_metals and is_metal(el):
                label = CoordinationLabel(el, ())
            else:
                neigh = [g.atoms[j] for j in g.neighbors(i)]
                neigh.extend(extra.get((ci, i), []))
                if wildcard_metals:
                    neigh = [x for x in neigh if not is_metal(x)]
                label = CoordinationLabel(el, tuple(sorted(neigh)))
            out[label] = out.get(label, Fraction(0)) + comp.spec.multiplicity
    return out


def coordination_env_test(
    graph: PeriodicGraph, ref: ReferenceGraph, k: Fraction
) -> list[LabelDiff]:
    """Symmetric difference between the structure's label multiset and the
    k-scaled reference multiset. With a component_set reference, metal
    neighbors are wildcards: the formula does not say what a metal binds."""
    wildcard = ref.kind == "component_set"
    found = _graph_labels(graph, wildcard)
    expected = {label: k * n for label, n in _reference_labels(ref, wildcard).items()}
    diffs = []
    for label in sorted(set(found) | set(expected)):
        e = expected.get(label, Fraction(0))
        f = found.get(label, 0)
        if e != f:
            diffs.append(LabelDiff(label, e, f))
    return diffs


def _h_stripped(labels) -> Counter:
    out: Counter = Counter()
    for label, n in labels.items():
        if label.element == "H":
            continue
        heavy = CoordinationLabel(
            label.element,
            tuple(x for x in label.neighbor_elements if x != "H"),
        )
        out[heavy] += n
    return out


def _diffs_h_only(diffs: list[LabelDiff]) -> bool:
    """True when every label difference disappears once hydrogens are ignored."""
    balance: Counter = Counter()
    for d in diffs:
        if d.label.element == "H":
            continue
        heavy = CoordinationLabel(
            d.label.element,
            tuple(x for x in d.label.neighbor_elements if x != "H"),
        )
        balance[heavy] += d.found - d.expected
    return all(v == 0 for v in balance.values())


FREE_ROLES = frozenset({"solvent", "guest", "counterion"})


def is_free_role(role) -> bool:
    """Roles naming free (non-framework) molecules: they may only occupy
    finite components, never sites of the periodic net."""
    return getattr(role, "value", role) in FREE_ROLES


def spanning_sites(graph: PeriodicGraph) -> set[int]:
    out: set[int] = set()
    for comp in connected_components(graph):
        if comp.spanning:
            out.update(comp.site_indices)
    return out


def subgraph_match_test(
    graph: PeriodicGraph,
    component: MolecularGraph,
    expected: int | None,
    budget: int = DEFAULT_BUDGET,
    name: str = "",
    excluded_sites: set[int] | None = None,
) -> SubgraphMatchResult:
    """Counts vertex-disjoint heavy-atom embeddings of the component."""
    skeleton, heavy_idx, _ = component.heavy_skeleton()
    if not skeleton.atoms:
        # a pure-hydrogen component carries no heavy skeleton to search for
        return SubgraphMatchResult(name or component.name, expected, expected or 0)
    view = heavy_view(graph)
    embeddings = find_embeddings(view, skeleton, budget=budget)
    if excluded_sites:
        embeddings = [
            m for m in embeddings if not (set(m.values()) & excluded_sites)
        ]
    chosen = maximum_disjoint(embeddings)
    matches = [frozenset(embeddings[i].values()) for i in chosen]
    return SubgraphMatchResult(name or component.name, expected, len(matches), matches)


def diagnose(
    structure: CrystalStructure,
    ref: ReferenceGraph,
    policy: BondPolicy | None = None,
    budget: int = DEFAULT_BUDGET,
) -> DiagnosisReport:
    """Runs the three tests and classifies errors.

    Hydrogen: every discrepancy involves only H counts or labels.
    Bond: species counts pass but heavy-atom connectivity deviates.
    Disorder: counts exceed the scaled reference, or occupancies below 1,
    or disorder group tags are present.
    """
    policy = policy or BondPolicy()
    counts = structure.element_counts()
    ref_counts = ref.integral_species_counts()
    anchor = choose_anchor(counts, ref_counts)
    scaling = species_scaling_test(counts, ref_counts, anchor)
    k = scaling.factor
    notes: list[str] = []

    graph = build_graph(structure, policy)

    coordination_ran = scaling.passed
    coordination_diffs: list[LabelDiff] = []
    if coordination_ran:
        coordination_diffs = coordination_env_test(graph, ref, k)

    framework = spanning_sites(graph)
    subgraph_counts: list[SubgraphMatchResult] = []
    for comp in ref.components:
        mult = comp.spec.multiplicity * k
        expected = int(mult) if mult.denominator == 1 else None
        if expected is None:
            notes.append(f"non-integral expected count for {comp.spec.name}")
        try:
            result = subgraph_match_test(
                graph,
                comp.graph,
                expected,
                budget=budget,
                name=comp.spec.name,
                excluded_sites=framework if is_free_role(comp.spec.role) else None,
            )
        except MatchTimeout:
            result = SubgraphMatchResult(comp.spec.name, expected, None)
            notes.append(f"subgraph search budget exhausted on {comp.spec.name}")
        subgraph_counts.append(result)

    low_occupancy = sum(
        1 for site in structure.sites if site.occupancy < 1.0 - OCCUPANCY_EPS
    )
    tagged = sum(1 for site in structure.sites if site.disorder_group is not None)

    exceeded = [el for el, exp, found in scaling.mismatches if found > exp]
    over = [
        r.name
        for r in subgraph_counts
        if r.expected is not None and r.found is not None and r.found > r.expected
    ]
    under = [
        r.name
        for r in subgraph_counts
        if r.expected is not None and r.found is not None and r.found < r.expected
    ]

    errors: list[DiagnosisError] = []

    if exceeded or over or low_occupancy or tagged:
        parts = []
        if exceeded:
            parts.append(f"element counts exceed scaled reference: {', '.join(exceeded)}")
        if over:
            parts.append(f"components over-represented: {', '.join(over)}")
        if low_occupancy:
            parts.append(f"{low_occupancy} sites with occupancy below 1")
        if tagged:
            parts.append(f"{tagged} sites carry disorder group tags")
        errors.append(DiagnosisError("disorder", "; ".join(parts)))

    species_h_only = bool(scaling.mismatches) and all(
        el == "H" for el, _, _ in scaling.mismatches
    )
    coord_h_only = bool(coordination_diffs) and _diffs_h_only(coordination_diffs)
    h_discrepancy = species_h_only or coord_h_only
    non_h_species = any(el != "H" for el, _, _ in scaling.mismatches)
    if (
        h_discrepancy
        and not non_h_species
        and (not coordination_diffs or _diffs_h_only(coordination_diffs))
        and not over
        and not under
    ):
        detail = []
        if species_h_only:
            detail.append("hydrogen counts deviate")
        if coord_h_only:
            detail.append("labels differ only in hydrogen neighbors")
        errors.append(DiagnosisError("hydrogen", "; ".join(detail)))

    if scaling.passed:
        heavy_coord = bool(coordination_diffs) and not _diffs_h_only(coordination_diffs)
        if heavy_coord or under:
            parts = []
            if heavy_coord:
                parts.append("heavy-atom coordination labels deviate")
            if under:
                parts.append(f"components under-matched: {', '.join(under)}")
            errors.append(DiagnosisError("bond", "; ".join(parts)))
    elif non_h_species and not errors:
        # element deficits with full occupancy fit none of the narrower
        # categories; surface them as connectivity damage
        errors.append(
            DiagnosisError("bond", "element counts fall short of scaled reference")
        )

    severity = None
    if errors:
        severity = max((e.kind for e in errors), key=lambda kind: SEVERITY_ORDER[kind])
    return DiagnosisReport(
        scaling=scaling,
        coordination_diffs=coordination_diffs,
        coordination_ran=coordination_ran,
        subgraph_counts=subgraph_counts,
        errors=errors,
        severity=severity,
        notes=notes,
    )
