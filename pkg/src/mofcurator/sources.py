"""Local database stores, paper parsing, refcode matching, missing-MOF records.

A record store is a directory with one subdirectory per source (csd/,
coremof/, mosaec/). Each source holds <REFCODE>.json metadata files and
optional sibling <REFCODE>.cif files; csd/doi_index.json maps DOI ->
refcode list. Paper files live in a corpus directory named by the DOI with
'/' and ':' replaced by '_' plus a format extension.
"""

import json
import math
import re
import threading
from dataclasses import asdict, dataclass, field
from html.parser import HTMLParser
from pathlib import Path

from scipy.optimize import linear_sum_assignment

from .cif import CrystalStructure
from .crystal import BondPolicy, remove_free_solvent
from .elements import ATOMIC_NUMBERS, is_metal
from .refgraph import solvent_library


class NotFound(Exception):
    """Refcode absent from the store."""


class PaperNotFound(Exception):
    pass


class PdfNeedsOcr(Exception):
    """PDF corpora require OCR, which is out of scope."""


class UnsupportedFormat(Exception):
    pass


class ExtractionSchemaFailure(Exception):
    """Backend never produced a schema-valid extraction within the retry bound."""


class Unsupported(Exception):
    """Transformation kind outside the supported set."""


class UnparseableTransformationDetails(Exception):
    pass


TRANSFORMATIONS = (
    "metal_substitution",
    "linker_exchange",
    "solvent_exchange",
    "linker_functionalization",
    "other",
)


@dataclass
class MofRecord:
    refcode: str
    doi: str = ""
    chemical_name: str = ""
    formula: str = ""
    synonyms: list[str] = field(default_factory=list)
    crystal_system: str = ""
    space_group: str = ""
    a: float | None = None
    b: float | None = None
    c: float | None = None
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    volume: float | None = None
    has_disorder: bool = False
    disorder_details: str = ""
    remarks: str = ""
    cif_path: str = ""
    structural_formula: str = ""
    abbreviations: dict[str, str] = field(default_factory=dict)

    def cell(self):
        values = (self.a, self.b, self.c, self.alpha, self.beta, self.gamma)
        if any(v is None for v in values):
            return None
        return tuple(float(v) for v in values)


@dataclass
class MofPaperEntry:
    identifier_in_text: str
    structural_formula: str = ""
    chemical_formula: str = ""
    crystal_system: str = ""
    space_group: str = ""
    cell_parameters: dict = field(default_factory=dict)
    volume: float | None = None
    metal_node: str = ""
    metal_oxidation_state: str = ""
    organic_linker: str = ""
    solvent: str = ""
    important_notes: str = ""

    def cell(self):
        p = self.cell_parameters or {}
        keys = ("a", "b", "c", "alpha", "beta", "gamma")
        if isinstance(p, (list, tuple)) and len(p) == 6:
            return tuple(float(v) for v in p)
        if all(k in p for k in keys):
            return tuple(float(p[k]) for k in keys)
        return None


@dataclass
class PaperInfo:
    mofs: list[MofPaperEntry] = field(default_factory=list)
    abbreviations: dict[str, str] = field(default_factory=dict)


@dataclass
class MissingMofRecord:
    identifier_in_text: str
    parent_mof: str
    transformation: str
    transformation_details: str = ""
    reason_no_cif: str = ""


@dataclass
class MatchScore:
    refcode: str
    mof_id: str
    score: float
    evidence: dict[str, float] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# record store

class RecordStore:
    SOURCES = ("csd", "coremof", "mosaec")

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()

    def _record_path(self, source: str, refcode: str) -> Path:
        if source not in self.SOURCES:
            raise ValueError(f"unknown source {source!r}")
        return self.root / source / f"{refcode}.json"

    def lookup_refcode(self, refcode: str, source: str = "csd") -> MofRecord:
        path = self._record_path(source, refcode)
        if not path.exists():
            raise NotFound(f"{refcode} not in {source} store")
        data = json.loads(path.read_text())
        known = {f for f in MofRecord.__dataclass_fields__}
        return MofRecord(**{k: v for k, v in data.items() if k in known})

    def lookup_doi(self, doi: str) -> list[str]:
        """Refcodes deposited under the DOI; empty when none (not an error)."""
        index = self.root / "csd" / "doi_index.json"
        if not index.exists():
            return []
        return list(json.loads(index.read_text()).get(doi, []))

    def has_cif(self, source: str, refcode: str) -> bool:
        if source not in self.SOURCES:
            raise ValueError(f"unknown source {source!r}")
        return (self.root / source / f"{refcode}.cif").exists()

    def cif_path(self, source: str, refcode: str) -> Path:
        return self.root / source / f"{refcode}.cif"

    def refcodes(self, source: str = "csd") -> list[str]:
        directory = self.root / source
        if not directory.exists():
            return []
        return sorted(p.stem for p in directory.glob("*.json") if p.stem != "doi_index")

    def save_record(self, record: MofRecord, source: str = "csd") -> Path:
        path = self._record_path(source, record.refcode)
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(asdict(record), indent=1, sort_keys=True))
        return path

    def add_doi(self, doi: str, refcodes: list[str]) -> None:
        index = self.root / "csd" / "doi_index.json"
        with self._lock:
            index.parent.mkdir(parents=True, exist_ok=True)
            table = json.loads(index.read_text()) if index.exists() else {}
            table[doi] = sorted(set(table.get(doi, [])) | set(refcodes))
            index.write_text(json.dumps(table, indent=1, sort_keys=True))


# ---------------------------------------------------------------------------
# paper corpus

def doi_to_filename(doi: str) -> str:
    return doi.replace("/", "_").replace(":", "_")


_BLOCK_TAGS = {
    "p", "div", "section", "title", "li", "tr", "table", "abstract",
    "h1", "h2", "h3", "h4", "h5", "h6", "head", "caption", "br",
}


class _TagStripper(HTMLParser):
    def __init__(self):
        super().__init__()
        self.parts: list[str] = []
        self._skip = 0

    def handle_starttag(self, tag, attrs):
        if tag in ("script", "style"):
            self._skip += 1
        if tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_endtag(self, tag):
        if tag in ("script", "style") and self._skip:
            self._skip -= 1
        if tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_data(self, data):
        if not self._skip:
            self.parts.append(data)


def strip_markup(text: str) -> str:
    parser = _TagStripper()
    parser.feed(text)
    out = "".join(parser.parts)
    out = re.sub(r"[ \t]+", " ", out)
    out = re.sub(r" ?\n ?", "\n", out)
    out = re.sub(r"\n{3,}", "\n\n", out)
    return out.strip() + "\n"


def find_and_parse_paper(doi: str, corpus_dir: str | Path) -> str:
    corpus = Path(corpus_dir)
    stem = doi_to_filename(doi)
    matches = sorted(corpus.glob(stem + ".*"))
    if not matches:
        raise PaperNotFound(f"no file for {doi} under {corpus}")
    path = matches[0]
    suffix = path.suffix.lower()
    if suffix == ".pdf":
        raise PdfNeedsOcr(f"{path.name} is a PDF; OCR is out of scope")
    if suffix in (".xml", ".html", ".htm"):
        return strip_markup(path.read_text())
    if suffix in (".md", ".txt"):
        return path.read_text()
    raise UnsupportedFormat(f"cannot parse {path.name}")


# ---------------------------------------------------------------------------
# schema-constrained extraction

_EXTRACTION_SCHEMA = """{
 "mofs": [
  {"identifier_in_text": str, "structural_formula": str, "chemical_formula": str,
   "crystal_system": str, "space_group": str,
   "cell_parameters": {"a": num, "b": num, "c": num, "alpha": num, "beta": num, "gamma": num},
   "volume": num or null, "metal_node": str, "metal_oxidation_state": str,
   "organic_linker": str, "solvent": str, "important_notes": str}
 ],
 "abbreviations": {str: str}
}"""

_ENTRY_FIELDS = set(MofPaperEntry.__dataclass_fields__)


def _validate_paper_info(data) -> PaperInfo:
    if not isinstance(data, dict):
        raise ValueError("extraction is not an object")
    mofs_raw = data.get("mofs")
    if not isinstance(mofs_raw, list):
        raise ValueError("missing 'mofs' list")
    abbreviations = data.get("abbreviations", {})
    if not isinstance(abbreviations, dict) or any(not k for k in abbreviations):
        raise ValueError("abbreviation keys must be nonempty strings")
    entries = []
    seen = set()
    for raw in mofs_raw:
        if not isinstance(raw, dict):
            raise ValueError("mof entry is not an object")
        ident = raw.get("identifier_in_text")
        if not ident or not isinstance(ident, str):
            raise ValueError("mof entry lacks identifier_in_text")
        if ident in seen:
            raise ValueError(f"duplicate identifier {ident!r}")
        seen.add(ident)
        entries.append(
            MofPaperEntry(**{k: v for k, v in raw.items() if k in _ENTRY_FIELDS})
        )
    return PaperInfo(entries, dict(abbreviations))


def extract_paper_info(text: str, backend, retries: int = 3) -> PaperInfo:
    """Schema-constrained extraction through the chat backend."""
    if not text.strip():
        raise ValueError("empty paper text")
    prompt = (
        "Extract every synthesized MOF from the paper below as JSON matching "
        f"this schema.\n{_EXTRACTION_SCHEMA}\n"
        "Include an 'abbreviations' map for every shorthand used in the "
        "formulas. Use [] when the paper reports no MOF.\n\n" + text
    )
    last_error = None
    for _ in range(retries + 1):
        try:
            data = backend.complete_json(prompt, schema_hint="paper_info")
            return _validate_paper_info(data)
        except (ValueError, TypeError, KeyError) as exc:
            last_error = exc
            prompt = f"Previous answer was invalid ({exc}). " + prompt
    raise ExtractionSchemaFailure(str(last_error))


# ---------------------------------------------------------------------------
# refcode matching

_FORMULA_TOKEN = re.compile(r"([A-Z][a-z]?)(\d*\.?\d*)")

WEIGHTS = {
    "formula": 0.4,
    "cell": 0.3,
    "space_group": 0.1,
    "metal": 0.1,
    "volume": 0.1,
}
MATCH_THRESHOLD = 0.5
CELL_LENGTH_RTOL = 0.01
CELL_ANGLE_ATOL = 0.5
VOLUME_RTOL = 0.02


def formula_element_counts(text: str) -> dict[str, float]:
    counts: dict[str, float] = {}
    for symbol, number in _FORMULA_TOKEN.findall(text or ""):
        if symbol not in ATOMIC_NUMBERS:
            continue
        counts[symbol] = counts.get(symbol, 0.0) + float(number or 1)
    return counts


def _formula_similarity(a: str, b: str) -> float:
    ca, cb = formula_element_counts(a), formula_element_counts(b)
    if not ca or not cb:
        return 0.0
    ta, tb = sum(ca.values()), sum(cb.values())
    # overlap of composition fractions: 1.0 iff identical normalized formulas
    return sum(min(ca.get(el, 0.0) / ta, cb.get(el, 0.0) / tb) for el in set(ca) | set(cb))


def _cell_agreement(cell_a, cell_b) -> float:
    if cell_a is None or cell_b is None:
        return 0.0
    agree = 0
    for i in range(3):
        if cell_b[i] and math.isclose(cell_a[i], cell_b[i], rel_tol=CELL_LENGTH_RTOL):
            agree += 1
    for i in range(3, 6):
        if abs(cell_a[i] - cell_b[i]) <= CELL_ANGLE_ATOL:
            agree += 1
    return agree / 6.0


def _space_group_match(a: str, b: str) -> float:
    na, nb = (re.sub(r"\s+", "", x or "").lower() for x in (a, b))
    return 1.0 if na and na == nb else 0.0


def _metal_match(record_formula: str, metal_node: str) -> float:
    rec = {el for el in formula_element_counts(record_formula) if is_metal(el)}
    txt = {
        m.group(1)
        for m in re.finditer(r"\b([A-Z][a-z]?)\b", metal_node or "")
        if m.group(1) in ATOMIC_NUMBERS and is_metal(m.group(1))
    }
    return 1.0 if rec and txt and rec & txt else 0.0


def _volume_match(va, vb) -> float:
    if not va or not vb:
        return 0.0
    return 1.0 if math.isclose(va, vb, rel_tol=VOLUME_RTOL) else 0.0


def score_pair(
    record: MofRecord, mof: MofPaperEntry, weights: dict | None = None
) -> MatchScore:
    w = dict(WEIGHTS)
    w.update(weights or {})
    evidence = {
        "formula": w["formula"]
        * _formula_similarity(record.formula, mof.chemical_formula or mof.structural_formula),
        "cell": w["cell"] * _cell_agreement(record.cell(), mof.cell()),
        "space_group": w["space_group"]
        * _space_group_match(record.space_group, mof.space_group),
        "metal": w["metal"] * _metal_match(record.formula, mof.metal_node),
        "volume": w["volume"] * _volume_match(record.volume, mof.volume),
    }
    return MatchScore(record.refcode, mof.identifier_in_text, sum(evidence.values()), evidence)


def match_refcodes(
    records: list[MofRecord],
    info: PaperInfo,
    weights: dict | None = None,
    threshold: float | None = None,
) -> list[MatchScore]:
    """Optimal one-to-one assignment by weighted metadata evidence; pairs
    scoring below the threshold stay unmatched. Input order never matters:
    rows and columns are sorted before assignment."""
    cutoff = MATCH_THRESHOLD if threshold is None else threshold
    records = sorted(records, key=lambda r: r.refcode)
    mofs = sorted(info.mofs, key=lambda m: m.identifier_in_text)
    if not records or not mofs:
        return []
    table = [[score_pair(r, m, weights) for m in mofs] for r in records]
    cost = [[-cell.score for cell in row] for row in table]
    rows, cols = linear_sum_assignment(cost)
    out = [
        table[i][j]
        for i, j in zip(rows, cols)
        if table[i][j].score >= cutoff
    ]
    out.sort(key=lambda s: s.refcode)
    return out


# ---------------------------------------------------------------------------
# missing MOFs

_MISSING_SCHEMA = """[
 {"identifier_in_text": str, "parent_mof": str (a matched identifier or refcode),
  "transformation": one of ["metal_substitution", "linker_exchange",
  "solvent_exchange", "linker_functionalization", "other"],
  "transformation_details": str, "reason_no_cif": str}
]"""


def find_missing_mofs(
    info: PaperInfo, matched: set[str], backend, retries: int = 3
) -> list[MissingMofRecord]:
    """Unmatched paper MOFs become records naming a parent among the matched
    set and the transformation relating them."""
    unmatched = [m for m in info.mofs if m.identifier_in_text not in matched]
    if not unmatched:
        return []
    listing = "\n".join(
        f"- {m.identifier_in_text}: {m.structural_formula or m.chemical_formula}"
        f" (notes: {m.important_notes})"
        for m in unmatched
    )
    prompt = (
        "These MOFs appear in the paper but match no deposited structure:\n"
        f"{listing}\n"
        f"Deposited/matched identifiers: {sorted(matched)}\n"
        "For each, name the most similar matched MOF as parent_mof and the "
        f"transformation relating them, as JSON:\n{_MISSING_SCHEMA}"
    )
    expected = {m.identifier_in_text for m in unmatched}
    last_error = None
    for _ in range(retries + 1):
        try:
            data = backend.complete_json(prompt, schema_hint="missing_mofs")
            return _validate_missing(data, expected, matched)
        except (ValueError, TypeError, KeyError) as exc:
            last_error = exc
            prompt = f"Previous answer was invalid ({exc}). " + prompt
    raise ExtractionSchemaFailure(str(last_error))


def _validate_missing(data, expected: set, matched: set) -> list[MissingMofRecord]:
    if not isinstance(data, list):
        raise ValueError("missing-MOF answer is not a list")
    out = []
    for raw in data:
        ident = raw.get("identifier_in_text")
        if ident not in expected:
            raise ValueError(f"unknown identifier {ident!r}")
        parent = raw.get("parent_mof")
        if parent not in matched:
            raise ValueError(f"parent {parent!r} does not resolve to a matched MOF")
        kind = raw.get("transformation")
        if kind not in TRANSFORMATIONS:
            raise ValueError(f"transformation {kind!r} not recognized")
        out.append(
            MissingMofRecord(
                identifier_in_text=ident,
                parent_mof=parent,
                transformation=kind,
                transformation_details=raw.get("transformation_details", ""),
                reason_no_cif=raw.get("reason_no_cif", ""),
            )
        )
    out.sort(key=lambda r: r.identifier_in_text)
    return out


# ---------------------------------------------------------------------------
# transformations

GENERATED_PROVENANCE = "generated-by-transformation"


def apply_transformation(
    parent: CrystalStructure,
    rec: MissingMofRecord,
    policy: BondPolicy | None = None,
) -> CrystalStructure:
    """Derive the undeposited structure from its parent. Only metal
    substitution and solvent exchange are constructive; the output carries a
    provenance tag because its positions are not experimentally validated."""
    if rec.transformation == "metal_substitution":
        source, target = _parse_substitution(parent, rec.transformation_details)
        out = parent.copy()
        for i, site in enumerate(out.sites):
            if site.element == source:
                out.sites[i] = _with_element(site, target)
        out.provenance = GENERATED_PROVENANCE
        return out
    if rec.transformation == "solvent_exchange":
        names = _named_solvents(rec.transformation_details)
        if not names:
            raise UnparseableTransformationDetails(
                f"no known solvent named in {rec.transformation_details!r}"
            )
        library = [g for g in solvent_library() if g.name in names]
        out, _ = remove_free_solvent(parent, library, policy)
        # insertion of the replacement solvent is intentionally skipped:
        # generated positions would be pure guesswork
        out.provenance = GENERATED_PROVENANCE
        return out
    raise Unsupported(
        f"transformation {rec.transformation!r} cannot be applied constructively"
    )


def _with_element(site, element):
    from dataclasses import replace

    return replace(site, element=element)


def _parse_substitution(parent: CrystalStructure, details: str) -> tuple[str, str]:
    symbols = [
        m.group(1)
        for m in re.finditer(r"\b([A-Z][a-z]?)(?=\b|\d)", details or "")
        if m.group(1) in ATOMIC_NUMBERS
    ]
    present = {site.element for site in parent.sites}
    for i, source in enumerate(symbols):
        if source in present and is_metal(source):
            for target in symbols[i + 1 :]:
                if target != source and is_metal(target):
                    return source, target
    raise UnparseableTransformationDetails(
        f"cannot read a metal substitution from {details!r}"
    )


def _named_solvents(details: str) -> set[str]:
    lowered = (details or "").lower()
    names = {g.name for g in solvent_library() if g.name}
    return {n for n in names if re.search(rf"\b{re.escape(n)}\b", lowered)}
