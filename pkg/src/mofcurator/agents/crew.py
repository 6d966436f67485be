"""The Supervisor and its five specialized agents.

Node implementations are closures over a shared SessionContext: bulky data
(structures, paper text, reference graphs) stays in the session while the
heads only ever see bounded text summaries. File paths in summaries are
relative to the session root so recorded transcripts replay from any
checkout location.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path

from ..cif import CrystalStructure, parse_cif, write_cif
from ..crystal import BondPolicy
from ..energy import EnergyModel, LennardJonesModel
from ..inspection import diagnose
from ..refgraph import ReferenceGraph, build_reference_graph, resolve_name
from ..repair import (
    CandidateExplosion,
    correct_bonds,
    correct_hydrogens,
    enumerate_disorder_candidates,
    rank_candidates,
)
from ..sources import (
    MatchScore,
    MissingMofRecord,
    MofRecord,
    PaperInfo,
    RecordStore,
    extract_paper_info,
    find_and_parse_paper,
    find_missing_mofs,
    match_refcodes,
)
from ..formula import parse_structural_formula
from .runtime import AgentSpec, NotSupported


@dataclass
class SessionContext:
    store: RecordStore | None = None
    corpus_dir: Path | None = None
    out_dir: Path = Path(".")
    root: Path = Path(".")
    policy: BondPolicy = field(default_factory=BondPolicy)
    model: EnergyModel = field(default_factory=LennardJonesModel)
    backend: object = None  # ChatBackend for extraction/reasoning nodes
    # working state filled in by nodes
    doi: str = ""
    records: dict[str, MofRecord] = field(default_factory=dict)
    cif_presence: dict[str, dict[str, bool]] = field(default_factory=dict)
    paper_text: str = ""
    paper_info: PaperInfo | None = None
    matches: list[MatchScore] = field(default_factory=list)
    missing: list[MissingMofRecord] = field(default_factory=list)
    refs: dict[str, ReferenceGraph] = field(default_factory=dict)
    structures: dict[str, CrystalStructure] = field(default_factory=dict)
    policies: dict[str, BondPolicy] = field(default_factory=dict)
    reports: dict[str, object] = field(default_factory=dict)
    written: dict[str, str] = field(default_factory=dict)

    def rel(self, path: Path | str) -> str:
        return os.path.relpath(Path(path), self.root)

    def policy_for(self, refcode: str) -> BondPolicy:
        return self.policies.get(refcode, self.policy)


def _require(condition, message):
    if not condition:
        raise ValueError(message)


# ---------------------------------------------------------------------------
# Database Reader

def build_database_reader(session: SessionContext) -> AgentSpec:
    def csd_retrieval(params: dict) -> str:
        doi = params.get("doi") or session.doi
        _require(doi, "no DOI given")
        _require(session.store is not None, "no record store configured")
        session.doi = doi
        refcodes = session.store.lookup_doi(doi)
        lines = []
        for refcode in refcodes:
            record = session.store.lookup_refcode(refcode)
            session.records[refcode] = record
            if session.store.has_cif("csd", refcode):
                text = session.store.cif_path("csd", refcode).read_text()
                session.structures[refcode] = parse_cif(text)
                lines.append(f"{refcode}: record + CIF loaded")
            else:
                lines.append(f"{refcode}: record loaded, no CSD CIF")
        if not refcodes:
            return f"no deposited structures under {doi}"
        return f"{len(refcodes)} structures under {doi}. " + "; ".join(lines)

    def _presence(source: str, params: dict) -> str:
        _require(session.store is not None, "no record store configured")
        refcodes = params.get("refcodes") or sorted(session.records)
        _require(refcodes, "no refcodes known yet; run csd_retrieval first")
        table = session.cif_presence.setdefault(source, {})
        parts = []
        for refcode in refcodes:
            present = session.store.has_cif(source, refcode)
            table[refcode] = present
            parts.append(f"{refcode}: {'present' if present else 'absent'}")
        return f"{source} CIFs — " + "; ".join(parts)

    return AgentSpec(
        name="database_reader",
        prompt=(
            "Retrieve MOF records and CIFs for a DOI from the CSD store, then "
            "check CoRE and MOSAEC mirrors for existing curated CIFs."
        ),
        nodes={
            "csd_retrieval": csd_retrieval,
            "coremof_retrieval": lambda p: _presence("coremof", p),
            "mosaec_retrieval": lambda p: _presence("mosaec", p),
        },
    )


# ---------------------------------------------------------------------------
# Paper Reader

def build_paper_reader(session: SessionContext) -> AgentSpec:
    def find_paper(params: dict) -> str:
        doi = params.get("doi") or session.doi
        _require(doi, "no DOI given")
        _require(session.corpus_dir is not None, "no paper corpus configured")
        session.paper_text = find_and_parse_paper(doi, session.corpus_dir)
        from ..sources import doi_to_filename

        stem = doi_to_filename(doi)
        match = sorted(Path(session.corpus_dir).glob(stem + ".*"))[0]
        return f"parsed {len(session.paper_text)} characters from {session.rel(match)}"

    def paper_read(params: dict) -> str:
        _require(session.paper_text, "no paper text; run find_paper first")
        _require(session.backend is not None, "no chat backend configured")
        session.paper_info = extract_paper_info(session.paper_text, session.backend)
        names = [m.identifier_in_text for m in session.paper_info.mofs]
        abbr = sorted(session.paper_info.abbreviations)
        return (
            f"extracted {len(names)} MOFs: {', '.join(names) or 'none'};"
            f" abbreviations: {', '.join(abbr) or 'none'}"
        )

    def paper_match(params: dict) -> str:
        _require(session.paper_info is not None, "no extraction; run paper_read first")
        session.matches = match_refcodes(
            list(session.records.values()), session.paper_info
        )
        if not session.matches:
            return "no refcode matched any extracted MOF"
        return "; ".join(
            f"{m.refcode} <- {m.mof_id} (score {m.score:.2f})"
            for m in session.matches
        )

    def paper_missing_mof(params: dict) -> str:
        _require(session.paper_info is not None, "no extraction; run paper_read first")
        _require(session.backend is not None, "no chat backend configured")
        matched = {m.mof_id for m in session.matches} | {
            m.refcode for m in session.matches
        }
        session.missing = find_missing_mofs(
            session.paper_info, matched, session.backend
        )
        if not session.missing:
            return "every extracted MOF matched a deposited structure"
        return "; ".join(
            f"{r.identifier_in_text}: parent {r.parent_mof}, {r.transformation}"
            for r in session.missing
        )

    def reasoning(params: dict) -> str:
        _require(session.backend is not None, "no chat backend configured")
        state = {
            "records": sorted(session.records),
            "extracted": [
                m.identifier_in_text for m in (session.paper_info.mofs if session.paper_info else [])
            ],
            "matches": [(m.refcode, m.mof_id) for m in session.matches],
            "question": params.get("question", "check the previous steps for mistakes"),
        }
        answer = session.backend.complete_json(
            f"Review this paper-reading state and point out mistakes: {state}",
            schema_hint="reasoning",
        )
        return answer if isinstance(answer, str) else repr(answer)

    return AgentSpec(
        name="paper_reader",
        prompt=(
            "Locate and parse the paper for the DOI, extract every synthesized "
            "MOF, match them to deposited refcodes, and record MOFs that were "
            "never deposited."
        ),
        nodes={
            "find_paper": find_paper,
            "paper_read": paper_read,
            "paper_match": paper_match,
            "paper_missing_mof": paper_missing_mof,
            "reasoning": reasoning,
        },
    )


# ---------------------------------------------------------------------------
# Reference Builder

def build_reference_builder(session: SessionContext) -> AgentSpec:
    def _abbreviations(refcode: str) -> dict:
        out = {}
        if session.paper_info:
            out.update(session.paper_info.abbreviations)
        record = session.records.get(refcode)
        if record is not None:
            out.update(record.abbreviations)
        return out

    def name_to_structure(params: dict) -> str:
        name = params.get("name", "")
        _require(name, "no component name given")
        abbr = {}
        if session.paper_info:
            abbr.update(session.paper_info.abbreviations)
        graph = resolve_name(name, abbr)
        counts = graph.element_counts()
        formula = "".join(
            f"{el}{counts[el] if counts[el] > 1 else ''}" for el in sorted(counts)
        )
        return f"{name}: {formula}, {len(graph.atoms)} atoms, {len(graph.bonds)} bonds"

    def _formula_for(refcode: str) -> str:
        for m in session.matches:
            if m.refcode == refcode and session.paper_info:
                for entry in session.paper_info.mofs:
                    if entry.identifier_in_text == m.mof_id and entry.structural_formula:
                        return entry.structural_formula
        record = session.records.get(refcode)
        if record is not None and record.structural_formula:
            return record.structural_formula
        raise ValueError(f"no structural formula known for {refcode}")

    def build_ref_graph(params: dict) -> str:
        refcode = params.get("refcode", "")
        _require(refcode, "no refcode given")
        formula = params.get("formula") or _formula_for(refcode)
        specs = parse_structural_formula(formula)
        ref = build_reference_graph(specs, _abbreviations(refcode))
        session.refs[refcode] = ref
        parts = [
            f"{comp.spec.multiplicity} x {comp.spec.name} ({comp.spec.role.value})"
            for comp in ref.components
        ]
        return f"reference for {refcode}: " + "; ".join(parts)

    return AgentSpec(
        name="reference_builder",
        prompt=(
            "Resolve component names to molecular graphs and assemble the "
            "reference graph for a refcode from its structural formula."
        ),
        nodes={
            "name_to_structure": name_to_structure,
            "build_ref_graph": build_ref_graph,
        },
    )


# ---------------------------------------------------------------------------
# Inspector & Editor

def build_inspector_editor(session: SessionContext) -> AgentSpec:
    def _structure_and_ref(params: dict):
        refcode = params.get("refcode", "")
        _require(refcode, "no refcode given")
        _require(refcode in session.structures, f"no structure loaded for {refcode}")
        _require(refcode in session.refs, f"no reference graph built for {refcode}")
        return refcode, session.structures[refcode], session.refs[refcode]

    def _write_corrected(refcode: str) -> str:
        session.out_dir.mkdir(parents=True, exist_ok=True)
        path = session.out_dir / f"{refcode}_corrected.cif"
        path.write_text(write_cif(session.structures[refcode]))
        rel = session.rel(path)
        session.written[refcode] = rel
        return rel

    def diagnose_node(params: dict) -> str:
        refcode, s, ref = _structure_and_ref(params)
        report = diagnose(s, ref, session.policy_for(refcode))
        session.reports[refcode] = report
        status = "clean" if report.clean else f"errors: {[e.kind for e in report.errors]}"
        corrected = session.written.get(refcode)
        tail = f"; corrected CIF at {corrected}" if corrected else ""
        return f"{refcode} {status}\n{report.to_text()}{tail}"

    def correct_disorder_node(params: dict) -> str:
        refcode, s, ref = _structure_and_ref(params)
        policy = session.policy_for(refcode)
        try:
            candidates = enumerate_disorder_candidates(s, ref, policy)
            truncated = ""
        except CandidateExplosion as exc:
            candidates = exc.candidates
            truncated = " (cap hit, truncated)"
        ranked = rank_candidates(candidates, session.model)
        session.structures[refcode] = ranked[0][0]
        rel = _write_corrected(refcode)
        return (
            f"{len(ranked)} disorder candidates{truncated}; kept the lowest "
            f"energy ({ranked[0][1]:.4f}); wrote {rel}"
        )

    def correct_bond_node(params: dict) -> str:
        refcode, s, ref = _structure_and_ref(params)
        outcome = correct_bonds(s, ref, session.policy_for(refcode))
        session.structures[refcode] = outcome.corrected
        if outcome.policy is not None:
            session.policies[refcode] = outcome.policy
        rel = _write_corrected(refcode)
        note = outcome.log[0] if outcome.log else "bond graph already consistent"
        return f"{note}; wrote {rel}"

    def correct_hydrogen_node(params: dict) -> str:
        refcode, s, ref = _structure_and_ref(params)
        outcome = correct_hydrogens(
            s, ref, session.policy_for(refcode), session.model
        )
        session.structures[refcode] = outcome.corrected
        rel = _write_corrected(refcode)
        note = "; ".join(outcome.log) if outcome.log else "hydrogens already consistent"
        extra = f"; {len(outcome.candidates)} candidates" if outcome.candidates else ""
        return f"{note}{extra}; wrote {rel}"

    return AgentSpec(
        name="inspector_editor",
        prompt=(
            "Diagnose a structure against its reference graph and apply "
            "disorder, bond, or hydrogen corrections as the diagnosis demands "
            "(severity order: disorder, bond, hydrogen). Re-diagnose after "
            "each correction."
        ),
        nodes={
            "diagnose": diagnose_node,
            "correct_disorder": correct_disorder_node,
            "correct_bond": correct_bond_node,
            "correct_hydrogen": correct_hydrogen_node,
        },
    )


# ---------------------------------------------------------------------------
# Simulation Runner

def build_simulation_runner(session: SessionContext) -> AgentSpec:
    def _not_supported(kind: str):
        def node(params: dict) -> str:
            raise NotSupported(
                f"{kind} requires an external simulation backend, which this "
                "installation does not provide"
            )

        return node

    return AgentSpec(
        name="simulation_runner",
        prompt="Run simulations on corrected structures (not available here).",
        nodes={
            "dft_optimization": _not_supported("DFT optimization"),
            "dft_single_point": _not_supported("DFT single-point energy"),
            "pore_analysis": _not_supported("pore analysis"),
        },
    )


# ---------------------------------------------------------------------------
# Supervisor

def build_supervisor(session: SessionContext, backend=None) -> AgentSpec:
    """The Supervisor's nodes are exactly the five specialized agents."""
    if backend is not None:
        session.backend = backend
    return AgentSpec(
        name="supervisor",
        prompt=(
            "Answer MOF curation queries by planning and delegating to the "
            "specialized agents: database_reader, paper_reader, "
            "reference_builder, inspector_editor, simulation_runner. Pass "
            "each sub-agent a focused query describing its task."
        ),
        nodes={
            "database_reader": build_database_reader(session),
            "paper_reader": build_paper_reader(session),
            "reference_builder": build_reference_builder(session),
            "inspector_editor": build_inspector_editor(session),
            "simulation_runner": build_simulation_runner(session),
        },
    )
