import json
import logging
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clusterlink.corpus import (
    CorpusSplit,
    Document,
    Entity,
    KnowledgeBase,
    Mention,
    export_iob2,
    iob_spans,
    parse_kb,
    parse_pubtator,
    read_documents,
    read_iob2,
    resolve_overlaps,
    split_sentences,
    split_stats,
    token_spans,
    write_documents,
    write_kb,
)
from clusterlink.corpus.preprocess import has_overlaps
from clusterlink.errors import ConflictError, DocumentError, OverlapError, ParseError

from synth import random_document, random_kb


def _write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


# -- knowledge base ------------------------------------------------------------------

def test_parse_kb_three_rows(tmp_path):
    path = tmp_path / "kb.jsonl"
    _write_jsonl(path, [
        {"entity_id": f"C00{i}", "canonical_name": f"name {i}", "types": ["T1"], "aliases": [f"a{i}"]}
        for i in range(1, 4)
    ])
    kb = parse_kb(path)
    assert len(kb) == 3
    assert kb["C002"].aliases == ("a2",)
    assert kb["C002"].types == frozenset({"T1"})


def test_parse_kb_empty(tmp_path):
    path = tmp_path / "kb.jsonl"
    path.write_text("", encoding="utf-8")
    assert len(parse_kb(path)) == 0


def test_parse_kb_duplicate_id(tmp_path):
    path = tmp_path / "kb.jsonl"
    _write_jsonl(path, [{"entity_id": "C001", "canonical_name": "x"}, {"entity_id": "C001", "canonical_name": "y"}])
    with pytest.raises(ConflictError) as info:
        parse_kb(path)
    assert "C001" in str(info.value)


def test_parse_kb_malformed_reports_line(tmp_path):
    path = tmp_path / "kb.jsonl"
    path.write_text('{"entity_id": "C1", "canonical_name": "x"}\n{not json\n', encoding="utf-8")
    with pytest.raises(ParseError) as info:
        parse_kb(path)
    assert info.value.line == 2


def test_kb_tsv_round_trip(tmp_path):
    kb = random_kb(random.Random(0), 15)
    path = tmp_path / "kb.tsv"
    write_kb(kb.values(), path, format="tsv")
    back = parse_kb(path)
    assert dict(back) == dict(kb)


# -- PubTator ------------------------------------------------------------------------

PUBTATOR = (
    "100|t|Aspirin and warfarin\n"
    "100|a|Patients took aspirin. Bleeding was noted.\n"
    "100\t0\t7\tAspirin\tChemical\tMESH:D001241\n"
    "100\t12\t20\twarfarin\tChemical\tD014859|D999999\n"
    "100\tCID\tD001241\tD006470\n"
    "\n"
)


def test_pubtator_two_mentions(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text(PUBTATOR, encoding="utf-8")
    kb = KnowledgeBase([Entity("D001241", "Aspirin"), Entity("D014859", "Warfarin")])
    docs = parse_pubtator(path, kb)
    assert len(docs) == 1
    doc = docs[0]
    assert doc.text == "Aspirin and warfarin\nPatients took aspirin. Bleeding was noted."
    assert [m.surface for m in doc.mentions] == ["Aspirin", "warfarin"]
    assert doc.mentions[0].gold_ids == ("D001241",)
    assert doc.mentions[1].gold_ids == ("D014859", "D999999")
    assert doc.mentions[1].unresolved == ("D999999",)
    assert doc.mentions[0].is_resolvable and not doc.mentions[1].is_resolvable
    assert doc.title_end == len("Aspirin and warfarin")
    assert [doc.text[s:e] for s, e in doc.sentences] == [
        "Aspirin and warfarin", "Patients took aspirin.", "Bleeding was noted."]


def test_pubtator_surface_mismatch_uses_slice(tmp_path, caplog):
    path = tmp_path / "c.txt"
    path.write_text(PUBTATOR.replace("\twarfarin\t", "\tWarfarinX\t"), encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        doc = parse_pubtator(path)[0]
    assert doc.mentions[1].surface == "warfarin"
    assert any("WarfarinX" in r.getMessage() for r in caplog.records)


def test_pubtator_span_out_of_bounds(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text(PUBTATOR.replace("100\t12\t20", "100\t12\t200"), encoding="utf-8")
    with pytest.raises(DocumentError):
        parse_pubtator(path)


def test_pubtator_missing_abstract(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("100|t|Only a title\n\n", encoding="utf-8")
    with pytest.raises(ParseError):
        parse_pubtator(path)


def test_sentence_splitter_keeps_abbreviations():
    text = "Dr. Smith gave 5 mg i.v. to pts. with e.g. asthma. Then J. Doe left! Results followed."
    sents = [text[s:e] for s, e in split_sentences(text)]
    assert sents == ["Dr. Smith gave 5 mg i.v. to pts. with e.g. asthma.", "Then J. Doe left!", "Results followed."]


# -- overlaps ------------------------------------------------------------------------

def _doc_with_spans(text, spans):
    ms = [Mention(f"D-{i}", "D", (s, e), text[s:e], ("E1",)) for i, (s, e) in enumerate(spans)]
    return Document("D", text, tuple(ms), tuple(split_sentences(text)))


def test_overlap_prefers_longer():
    doc = _doc_with_spans("abcdefghij klm", [(0, 10), (0, 5)])
    res = resolve_overlaps(doc)
    assert res.dropped == 1
    assert [m.span for m in res.document.mentions] == [(0, 10)]


def test_no_overlap_identity():
    doc = _doc_with_spans("alpha beta gamma", [(0, 5), (6, 10)])
    res = resolve_overlaps(doc)
    assert res.dropped == 0 and res.truncated == 0
    assert res.document == doc


def test_mention_truncated_at_sentence_boundary():
    text = "Take asp. Then more."
    doc = _doc_with_spans(text, [(5, 14)])
    res = resolve_overlaps(doc)
    assert res.truncated == 1
    assert res.document.mentions[0].surface == "asp."


def test_no_drop_mode_keeps_overlaps():
    doc = _doc_with_spans("abcdefghij klm", [(0, 10), (0, 5)])
    res = resolve_overlaps(doc, drop_overlaps=False)
    assert res.dropped == 0 and len(res.document.mentions) == 2


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 60), st.integers(1, 15)), max_size=12))
def test_resolved_documents_have_no_overlaps(raw):
    text = "x" * 80
    spans = [(s, min(80, s + n)) for s, n in raw]
    doc = _doc_with_spans(text, spans)
    res = resolve_overlaps(doc)
    assert not has_overlaps(res.document)
    assert len(res.document.mentions) + res.dropped == len(spans)
    kept = {m.span for m in res.document.mentions}
    # every dropped span overlaps a kept span at least as long
    for s, e in spans:
        if (s, e) not in kept:
            assert any(a < e and s < b and b - a >= e - s for a, b in kept)


# -- IOB2 ----------------------------------------------------------------------------

def test_iob2_two_token_mention(tmp_path):
    text = "Patients with heart attack recovered."
    doc = Document("D1", text, (Mention("D1-0", "D1", (14, 26), "heart attack", ("C1",), "X"),),
                   tuple(split_sentences(text)))
    path = tmp_path / "o.iob2"
    export_iob2([doc], path)
    rows = read_iob2(path)[0].sentences[0]
    assert [t for _, t, _ in rows] == ["O", "O", "B-X", "I-X", "O", "O"]
    assert rows[2] == ("heart", "B-X", "C1")


def test_iob2_no_mentions_all_outside(tmp_path):
    text = "Nothing here. At all."
    path = tmp_path / "o.iob2"
    export_iob2([Document("D1", text, (), tuple(split_sentences(text)))], path, meta={"seed": 0})
    docs = read_iob2(path)
    assert all(tag == "O" for s in docs[0].sentences for _, tag, _ in s)
    assert len(docs[0].sentences) == 2


def test_iob2_round_trip_random_documents(tmp_path):
    rng = random.Random(8)
    kb = random_kb(rng, 20)
    docs = [random_document(rng, f"D{i}", kb, rng.randint(0, 8)) for i in range(50)]
    path = tmp_path / "rt.iob2"
    export_iob2(docs, path)
    back = read_iob2(path)
    assert [d.doc_id for d in back] == [d.doc_id for d in docs]
    for orig, parsed in zip(docs, back):
        expected = token_spans(orig)
        assert len(expected) == len(orig.mentions)
        # empty sentences are not written; compare spans on the non-empty ones
        assert [(s.start, s.end, s.label, s.entity_ids) for s in iob_spans(parsed)] == \
               [(s.start, s.end, s.label, s.entity_ids) for s in expected]


def test_iob2_refuses_overlaps(tmp_path):
    doc = _doc_with_spans("abcdefghij klm", [(0, 10), (0, 5)])
    with pytest.raises(OverlapError):
        export_iob2([doc], tmp_path / "o.iob2")


# -- splits --------------------------------------------------------------------------

def test_pct_seen_full_coverage():
    rng = random.Random(9)
    kb = random_kb(rng, 5)
    pool = kb.sorted_ids()
    train = [random_document(rng, f"T{i}", kb, 6, pool) for i in range(5)]
    for eid in pool:  # guarantee every entity appears in training
        train.append(random_document(rng, f"T-{eid}", kb, 1, [eid]))
    dev = [random_document(rng, f"V{i}", kb, 6, pool) for i in range(3)]
    split = CorpusSplit({d.doc_id for d in train}, {d.doc_id for d in dev}, set())
    stats = split_stats(train + dev, split, kb)
    assert stats["dev"].pct_seen == 100.0
    assert stats["train"].pct_seen == 100.0
    assert stats["test"].mentions == 0


def test_pct_seen_bounds_and_unseen():
    rng = random.Random(10)
    kb = random_kb(rng, 20)
    ids = kb.sorted_ids()
    train = [random_document(rng, f"T{i}", kb, 5, ids[:10]) for i in range(4)]
    test = [random_document(rng, f"S{i}", kb, 5, ids[10:]) for i in range(4)]
    split = CorpusSplit({d.doc_id for d in train}, (), {d.doc_id for d in test})
    stats = split_stats(train + test, split)
    assert stats["test"].pct_seen == 0.0
    assert 0 <= stats["train"].pct_seen <= 100


def test_split_conflict():
    with pytest.raises(ConflictError):
        CorpusSplit({"a"}, {"a"}, set())


def test_document_jsonl_round_trip(tmp_path):
    rng = random.Random(11)
    kb = random_kb(rng, 10)
    docs = [random_document(rng, f"D{i}", kb, 4) for i in range(5)]
    path = tmp_path / "docs.jsonl"
    write_documents(docs, path, meta={"seed": 1})
    assert read_documents(path) == docs
