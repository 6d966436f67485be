"""Record store, paper corpus parsing, schema extraction, refcode matching,
and constructive transformations."""

import pytest

import geometry
from agent_script import DOI, MISSING_MOFS, PAPER_INFO, ScriptedBackend
from conftest import DATA
from mofcurator.sources import (
    ExtractionSchemaFailure,
    GENERATED_PROVENANCE,
    MATCH_THRESHOLD,
    MissingMofRecord,
    MofPaperEntry,
    MofRecord,
    NotFound,
    PaperInfo,
    PaperNotFound,
    PdfNeedsOcr,
    RecordStore,
    Unsupported,
    UnsupportedFormat,
    UnparseableTransformationDetails,
    apply_transformation,
    doi_to_filename,
    extract_paper_info,
    find_and_parse_paper,
    find_missing_mofs,
    formula_element_counts,
    match_refcodes,
    score_pair,
    strip_markup,
)

CORPUS = DATA / "corpus"
STORE = DATA / "store"


def paper_info():
    return extract_paper_info("x", _Canned())


class _Canned:
    def complete_json(self, prompt, schema_hint=""):
        return {"paper_info": PAPER_INFO, "missing_mofs": MISSING_MOFS}[schema_hint]


# ---------------------------------------------------------------------------
# store

def test_store_save_and_lookup(tmp_path):
    store = RecordStore(tmp_path)
    rec = MofRecord(refcode="ABCDEF", doi="10.1/x", formula="C2 H6 O",
                    space_group="P21/c", a=5.0, b=6.0, c=7.0,
                    alpha=90.0, beta=95.0, gamma=90.0)
    store.save_record(rec)
    back = store.lookup_refcode("ABCDEF")
    assert back == rec
    assert back.cell() == (5.0, 6.0, 7.0, 90.0, 95.0, 90.0)
    assert store.refcodes() == ["ABCDEF"]


def test_store_missing_and_bad_source(tmp_path):
    store = RecordStore(tmp_path)
    with pytest.raises(NotFound):
        store.lookup_refcode("NOPE")
    with pytest.raises(ValueError):
        store.lookup_refcode("NOPE", source="wikipedia")
    with pytest.raises(ValueError):
        store.has_cif("wikipedia", "NOPE")
    assert store.refcodes("coremof") == []


def test_store_doi_index(tmp_path):
    store = RecordStore(tmp_path)
    assert store.lookup_doi("10.1/x") == []
    store.add_doi("10.1/x", ["BBB"])
    store.add_doi("10.1/x", ["AAA", "BBB"])
    assert store.lookup_doi("10.1/x") == ["AAA", "BBB"]


def test_committed_store():
    store = RecordStore(STORE)
    assert store.refcodes() == ["PICLAS", "PICLEW"]
    assert store.lookup_doi(DOI) == ["PICLAS", "PICLEW"]
    rec = store.lookup_refcode("PICLAS")
    assert rec.has_disorder
    assert rec.structural_formula == geometry.PICLAS_FORMULA
    assert store.has_cif("csd", "PICLAS")
    assert store.has_cif("coremof", "PICLEW")
    assert not store.has_cif("coremof", "PICLAS")


# ---------------------------------------------------------------------------
# corpus

def test_doi_to_filename():
    assert doi_to_filename("10.9999/jx.2024.0117") == "10.9999_jx.2024.0117"
    assert doi_to_filename("doi:10.1/a/b") == "doi_10.1_a_b"


def test_strip_markup():
    html = (
        "<head><title>A MOF</title><style>p {color: red}</style></head>"
        "<p>cell  a = 5.0</p><script>alert(1)</script><p>V = 125</p>"
    )
    text = strip_markup(html)
    assert "A MOF" in text and "cell a = 5.0" in text and "V = 125" in text
    assert "color" not in text and "alert" not in text
    assert "\n\n\n" not in text


def test_find_and_parse_paper_formats(tmp_path):
    text = find_and_parse_paper(DOI, CORPUS)
    assert "H2btpdc" in text and "PICLAS" not in text
    with pytest.raises(PdfNeedsOcr):
        find_and_parse_paper("10.9999/jx.2024.0999", CORPUS)
    with pytest.raises(PaperNotFound):
        find_and_parse_paper("10.1/absent", CORPUS)
    (tmp_path / "10.1_weird.docx").write_text("x")
    with pytest.raises(UnsupportedFormat):
        find_and_parse_paper("10.1/weird", tmp_path)
    (tmp_path / "10.1_page.html").write_text("<p>a body</p>")
    assert find_and_parse_paper("10.1/page", tmp_path).strip() == "a body"


# ---------------------------------------------------------------------------
# extraction

def test_extract_paper_info_canned():
    info = paper_info()
    assert [m.identifier_in_text for m in info.mofs] == ["1", "2", "3"]
    assert info.abbreviations == {"H2btpdc": "benzo[b]thiophene-2,6-dicarboxylic acid"}
    one = info.mofs[0]
    assert one.cell() == (40.0,) * 3 + (90.0,) * 3
    assert info.mofs[2].cell() is None  # compound 3 has no cell


def test_extract_paper_info_scripted_backend():
    info = extract_paper_info("paper text", ScriptedBackend())
    assert len(info.mofs) == 3


def test_extract_retries_then_succeeds():
    class Flaky:
        calls = 0

        def complete_json(self, prompt, schema_hint=""):
            self.calls += 1
            if self.calls == 1:
                return {"mofs": "not-a-list"}
            assert "Previous answer was invalid" in prompt
            return PAPER_INFO

    backend = Flaky()
    info = extract_paper_info("x", backend)
    assert backend.calls == 2 and len(info.mofs) == 3


def test_extract_gives_up_after_retries():
    class Broken:
        calls = 0

        def complete_json(self, prompt, schema_hint=""):
            self.calls += 1
            return {"mofs": [{"identifier_in_text": "1"}, {"identifier_in_text": "1"}]}

    backend = Broken()
    with pytest.raises(ExtractionSchemaFailure, match="duplicate"):
        extract_paper_info("x", backend)
    assert backend.calls == 4  # first try plus three retries


def test_extract_rejects_empty_text():
    with pytest.raises(ValueError):
        extract_paper_info("  \n", _Canned())


# ---------------------------------------------------------------------------
# matching

def test_score_pair_perfect_and_degraded():
    store = RecordStore(STORE)
    rec = store.lookup_refcode("PICLAS")
    mof = paper_info().mofs[0]
    perfect = score_pair(rec, mof)
    assert perfect.score == pytest.approx(1.0)
    assert set(perfect.evidence) == {"formula", "cell", "space_group", "metal", "volume"}

    import dataclasses

    worse = dataclasses.replace(rec, a=55.0, volume=1.0)
    degraded = score_pair(worse, mof)
    assert degraded.evidence["cell"] < perfect.evidence["cell"]
    assert degraded.evidence["volume"] == 0.0
    assert degraded.score < perfect.score


def test_match_refcodes_committed_pair():
    store = RecordStore(STORE)
    records = [store.lookup_refcode(r) for r in store.refcodes()]
    matches = match_refcodes(records, paper_info())
    assert [(m.refcode, m.mof_id) for m in matches] == [("PICLAS", "1"), ("PICLEW", "2")]
    assert all(m.score >= MATCH_THRESHOLD for m in matches)
    # input order cannot matter
    again = match_refcodes(list(reversed(records)), paper_info())
    assert [(m.refcode, m.mof_id) for m in again] == [("PICLAS", "1"), ("PICLEW", "2")]


def test_match_refcodes_threshold_filters():
    store = RecordStore(STORE)
    records = [store.lookup_refcode(r) for r in store.refcodes()]
    assert match_refcodes(records, paper_info(), threshold=1.01) == []
    assert match_refcodes([], paper_info()) == []
    assert match_refcodes(records, PaperInfo()) == []


def test_formula_element_counts():
    counts = formula_element_counts("C33 H23 Dy2 N O15 S3")
    assert counts == {"C": 33.0, "H": 23.0, "Dy": 2.0, "N": 1.0, "O": 15.0, "S": 3.0}


# ---------------------------------------------------------------------------
# missing MOFs

def test_find_missing_mofs_scripted():
    (rec,) = find_missing_mofs(paper_info(), {"1", "2"}, ScriptedBackend())
    assert rec.identifier_in_text == "3"
    assert rec.parent_mof == "1"
    assert rec.transformation == "solvent_exchange"


def test_find_missing_mofs_none_unmatched():
    class Untouchable:
        def complete_json(self, prompt, schema_hint=""):
            raise AssertionError("backend must not be consulted")

    assert find_missing_mofs(paper_info(), {"1", "2", "3"}, Untouchable()) == []


def test_find_missing_mofs_rejects_bad_parent():
    class BadParent:
        def complete_json(self, prompt, schema_hint=""):
            return [dict(MISSING_MOFS[0], parent_mof="99")]

    with pytest.raises(ExtractionSchemaFailure, match="parent"):
        find_missing_mofs(paper_info(), {"1", "2"}, BadParent())


# ---------------------------------------------------------------------------
# transformations

def _missing(transformation, details):
    return MissingMofRecord(
        identifier_in_text="x", parent_mof="1",
        transformation=transformation, transformation_details=details,
    )


def test_metal_substitution():
    parent = geometry.zno_framework()
    out = apply_transformation(parent, _missing("metal_substitution", "Zn replaced by Co"))
    assert out.element_counts()["Co"] == parent.element_counts()["Zn"]
    assert "Zn" not in out.element_counts()
    assert out.provenance == GENERATED_PROVENANCE
    assert parent.element_counts()["Zn"] == 4  # parent untouched


def test_solvent_exchange_removes_named_guest():
    parent = geometry.zno_framework()  # DMF + 2 water guests
    out = apply_transformation(
        parent, _missing("solvent_exchange", "lattice water exchanged for ethanol")
    )
    assert out.provenance == GENERATED_PROVENANCE
    before = parent.element_counts()
    after = out.element_counts()
    assert before["O"] - after["O"] == 2 and before["H"] - after["H"] == 4
    assert after["N"] == before["N"]  # DMF stays


def test_transformation_error_paths():
    parent = geometry.zno_framework()
    with pytest.raises(UnparseableTransformationDetails):
        apply_transformation(parent, _missing("metal_substitution", "nothing metallic"))
    with pytest.raises(UnparseableTransformationDetails):
        apply_transformation(parent, _missing("solvent_exchange", "swapped for plasma"))
    with pytest.raises(Unsupported):
        apply_transformation(parent, _missing("linker_exchange", "bdc for btpdc"))
