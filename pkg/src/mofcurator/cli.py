"""Command-line surface: validate, repair, curate, ask.

Exit codes partition outcomes the same way everywhere: 0 for a clean result,
1 when structural errors were found (or left uncorrected), 2 for operational
failure (missing files, unparseable input, no backend).
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .agents import (
    LiveBackend,
    ReplayBackend,
    SessionContext,
    build_supervisor,
    run_agent,
    trace_text,
)
from .cif import CrystalStructure, MalformedCif, parse_cif, write_cif
from .config import Config, load_config, make_energy_model
from .crystal import RemovalReport, build_graph, remove_free_solvent
from .formula import parse_structural_formula
from .inspection import diagnose
from .refgraph import ReferenceGraph, UnresolvedName, build_reference_graph, solvent_library
from .repair import repair_all
from .sources import RecordStore


class UsageError(Exception):
    pass


def _load_reference(ref_spec: str, abbreviations: dict | None = None) -> ReferenceGraph:
    """A structural formula string, or a path to a JSON file with keys
    "formula" and optional "abbreviations"."""
    abbr = dict(abbreviations or {})
    formula = ref_spec
    path = Path(ref_spec)
    if path.suffix.lower() == ".json":
        if not path.is_file():
            raise UsageError(f"reference file not found: {ref_spec}")
        data = json.loads(path.read_text())
        formula = data.get("formula", "")
        if not formula:
            raise UsageError(f"reference file {ref_spec} has no formula")
        abbr.update(data.get("abbreviations", {}))
    specs = parse_structural_formula(formula)
    return build_reference_graph(specs, abbr)


def _load_structure(cif_path: str) -> CrystalStructure:
    path = Path(cif_path)
    if not path.is_file():
        raise UsageError(f"CIF not found: {cif_path}")
    return parse_cif(path.read_text())


def _with_bonds(structure: CrystalStructure, policy) -> CrystalStructure:
    out = structure.copy()
    if not out.explicit_bonds:
        out.explicit_bonds = list(build_graph(out, policy).edges)
    return out


# ---------------------------------------------------------------------------
# validate

def cmd_validate(args, cfg: Config) -> int:
    policy = cfg.bond_policy()
    structure = _load_structure(args.cif)
    ref = _load_reference(args.reference)
    report = diagnose(structure, ref, policy)
    print(report.to_text())
    return 0 if report.clean else 1


# ---------------------------------------------------------------------------
# repair

def cmd_repair(args, cfg: Config) -> int:
    policy = cfg.bond_policy()
    try:
        model = (
            make_energy_model(args.energy_backend, timeout=cfg.energy_timeout)
            if args.energy_backend
            else cfg.energy_model()
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    structure = _load_structure(args.cif)
    ref = _load_reference(args.reference)
    outcome = repair_all(structure, ref, policy, model)
    for line in outcome.log:
        print(line)

    if outcome.kind == "none" and not outcome.flags:
        print("structure already clean; nothing to correct")
        return 0
    if "uncorrected" in outcome.flags:
        final = diagnose(outcome.corrected, ref, outcome.policy or policy)
        print(final.to_text())
        print("repair failed; no CIF written")
        return 1

    out_dir = Path(args.out) if args.out else Path(args.cif).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.cif).stem
    write_policy = outcome.policy or policy
    if args.all_candidates and outcome.candidates:
        for rank, (candidate, energy) in enumerate(outcome.candidates, start=1):
            path = out_dir / f"{stem}_corrected_{rank:02d}.cif"
            path.write_text(write_cif(_with_bonds(candidate, write_policy)))
            print(f"candidate {rank}: energy {energy:.4f} -> {path}")
    else:
        path = out_dir / f"{stem}_corrected.cif"
        path.write_text(write_cif(_with_bonds(outcome.corrected, write_policy)))
        print(f"corrected ({outcome.kind}) -> {path}")
        if len(outcome.candidates) > 1:
            print(
                f"note: {len(outcome.candidates)} candidates exist;"
                " rerun with --all-candidates to write all of them"
            )
    return 0


# ---------------------------------------------------------------------------
# curate

def _curate_one(store: RecordStore, refcode: str, out_dir: Path, cfg: Config):
    """Returns (refcode, detected kinds, corrected kinds, status line, written name)."""
    policy = cfg.bond_policy()
    model = cfg.energy_model()
    record = store.lookup_refcode(refcode)
    if not store.has_cif("csd", refcode):
        return refcode, [], [], f"{refcode}: no CIF deposited, skipped", None
    structure = parse_cif(store.cif_path("csd", refcode).read_text())
    formula = record.structural_formula or record.formula
    if not formula:
        raise UsageError(f"{refcode}: record carries no structural formula")
    specs = parse_structural_formula(formula)
    ref = build_reference_graph(specs, record.abbreviations)

    report = diagnose(structure, ref, policy)
    detected = sorted({e.kind for e in report.errors})
    outcome = repair_all(structure, ref, policy, model)
    corrected = [] if outcome.kind == "none" else sorted(outcome.kind.split("+"))
    if "uncorrected" in outcome.flags:
        kinds = ",".join(detected) or "unknown"
        return refcode, detected, corrected, f"{refcode}: uncorrected ({kinds})", None

    write_policy = outcome.policy or policy
    cleaned, removal = remove_free_solvent(outcome.corrected, solvent_library(), write_policy)
    if not cleaned.sites:
        # purely molecular deposit: there is no framework to activate
        cleaned, removal = outcome.corrected, RemovalReport({}, [])
    final = _with_bonds(cleaned, write_policy)
    final.name = refcode
    out_path = out_dir / f"{refcode}.cif"
    out_path.write_text(write_cif(final))
    removed = (
        " removed " + ", ".join(f"{n} {name}" for name, n in sorted(removal.removed.items()))
        if removal.removed
        else ""
    )
    status = (
        f"{refcode}: detected [{', '.join(detected) or 'none'}]"
        f" corrected [{', '.join(corrected) or 'none'}]{removed} -> {out_path.name}"
    )
    return refcode, detected, corrected, status, out_path.name


def cmd_curate(args, cfg: Config) -> int:
    store_dir = Path(args.store_dir)
    if not store_dir.is_dir():
        raise UsageError(f"store directory not found: {args.store_dir}")
    store = RecordStore(store_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    refcodes = store.refcodes()

    def safe(refcode):
        try:
            return _curate_one(store, refcode, out_dir, cfg)
        except Exception as exc:
            if args.fail_fast:
                raise
            return refcode, [], [], f"{refcode}: failed ({exc})", None

    if args.jobs > 1 and refcodes:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(safe, refcodes))
    else:
        results = [safe(r) for r in refcodes]
    results.sort(key=lambda r: r[0])

    totals_detected: dict[str, int] = {}
    totals_corrected: dict[str, int] = {}
    status_lines = []
    manifest = []
    for _, detected, corrected, status, written in results:
        for kind in detected:
            totals_detected[kind] = totals_detected.get(kind, 0) + 1
        for kind in corrected:
            totals_corrected[kind] = totals_corrected.get(kind, 0) + 1
        status_lines.append(status)
        if written:
            manifest.append(written)

    lines = [f"structures: {len(refcodes)}"]
    for kind in ("bond", "hydrogen", "disorder"):
        det = totals_detected.get(kind, 0)
        cor = totals_corrected.get(kind, 0)
        lines.append(f"{kind}: detected {det} corrected {cor}")
    lines.extend(status_lines)
    lines.append("manifest: " + (", ".join(manifest) if manifest else "(empty)"))
    summary = "\n".join(lines) + "\n"
    print(summary, end="")
    (out_dir / "summary.txt").write_text(summary)
    return 0


# ---------------------------------------------------------------------------
# ask

def cmd_ask(args, cfg: Config) -> int:
    if not args.replay and not (args.endpoint or cfg.endpoint):
        print(
            "no agent backend configured: pass --replay TRANSCRIPT or"
            " --endpoint URL (or set [agents] endpoint in the config file)",
            file=sys.stderr,
        )
        return 2
    if args.replay:
        transcript = Path(args.replay)
        if not transcript.is_file():
            raise UsageError(f"transcript not found: {args.replay}")
        backend = ReplayBackend(transcript)
    else:
        backend = LiveBackend(
            endpoint=args.endpoint or cfg.endpoint,
            model=cfg.model,
            temperature=cfg.temperature,
        )

    root = Path.cwd()
    session = SessionContext(
        store=RecordStore(args.store) if args.store else None,
        corpus_dir=Path(args.corpus) if args.corpus else None,
        out_dir=Path(args.out) if args.out else root,
        root=root,
        policy=cfg.bond_policy(),
        model=cfg.energy_model(),
        backend=backend,
    )
    supervisor = build_supervisor(session)
    response, trace = run_agent(supervisor, args.query, backend)
    if args.trace:
        Path(args.trace).write_text(trace_text(trace))
    print(response)
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mofcurator",
        description="Validate and repair MOF crystal structures against "
        "literature-derived reference graphs.",
    )
    parser.add_argument("--config", help="INI config file (flags override it)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="diagnose a CIF against a reference")
    p.add_argument("cif")
    p.add_argument("reference", help="structural formula or JSON reference file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("repair", help="repair a CIF and write corrected output")
    p.add_argument("cif")
    p.add_argument("reference", help="structural formula or JSON reference file")
    p.add_argument("--out", help="output directory (default: next to the input)")
    p.add_argument(
        "--all-candidates",
        action="store_true",
        help="write every candidate, energy-ordered filenames",
    )
    p.add_argument(
        "--energy-backend",
        help='"lj" or "subprocess:<command>" for candidate ranking',
    )
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("curate", help="batch-curate a record store")
    p.add_argument("store_dir")
    p.add_argument("out_dir")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.add_argument(
        "--fail-fast",
        action="store_true",
        help="abort on the first per-structure failure instead of recording it",
    )
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("ask", help="run the curation agent on a query")
    p.add_argument("query")
    p.add_argument("--replay", help="recorded transcript to replay deterministically")
    p.add_argument("--endpoint", help="chat-completions URL for a live session")
    p.add_argument("--store", help="record store directory")
    p.add_argument("--corpus", help="paper corpus directory")
    p.add_argument("--out", help="directory for corrected CIFs")
    p.add_argument("--trace", help="write the decision trace to this file")
    p.set_defaults(func=cmd_ask)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (MalformedCif, UnresolvedName, FileNotFoundError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
