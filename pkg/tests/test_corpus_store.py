from __future__ import annotations

import hashlib
import json

import pytest
from hypothesis import given, settings, strategies as st

from coral.corpus_store import (ChunkPolicy, CorpusStore, DocumentRecord, chunk_document, chunk_spans,
                                read_jsonl_documents)
from coral.errors import IngestError, NotFoundError, UnknownLanguageError
from coral.languages import LANGUAGE_POOL

from conftest import jsonl

POLICY = ChunkPolicy(1200, 200)


def doc(body: str, lang: str = "en", doc_id: str = "d") -> DocumentRecord:
    return DocumentRecord(doc_id, lang, "", body)


def test_short_body_single_chunk():
    chunks = chunk_document(doc("abc"))
    assert [(c.text, c.span) for c in chunks] == [("abc", (0, 3))]


def test_hundred_chars_single_chunk():
    assert chunk_spans("x" * 100, POLICY) == [(0, 100)]


def test_exactly_max_chars_is_one_chunk():
    assert chunk_spans("x" * 1200, POLICY) == [(0, 1200)]


def test_1201_chars_without_whitespace():
    assert chunk_spans("x" * 1201, POLICY) == [(0, 1200), (1000, 1201)]


def test_2600_chars_hand_tiled():
    assert chunk_spans("x" * 2600, POLICY) == [(0, 1200), (1000, 2200), (2000, 2600)]


def test_window_end_snaps_to_whitespace():
    body = "x" * 1190 + " " + "y" * 500
    spans = chunk_spans(body, POLICY)
    assert spans[0] == (0, 1190)
    assert spans[1][0] == 990


def test_invalid_policy_rejected():
    with pytest.raises(ValueError):
        chunk_spans("abc", ChunkPolicy(200, 200))
    with pytest.raises(ValueError):
        chunk_spans("abc", ChunkPolicy(100, -1))


def test_chunk_ids_are_lang_prefixed_and_ordered():
    chunks = chunk_document(doc("x" * 2600, "ko", "doc1"))
    assert [c.chunk_id for c in chunks] == ["ko:doc1:00000", "ko:doc1:00001", "ko:doc1:00002"]
    assert all(c.lang == "ko" for c in chunks)


@settings(max_examples=200, deadline=None)
@given(body=st.text(alphabet=st.sampled_from("ab \n　é"), min_size=1, max_size=3000),
       max_chars=st.integers(5, 400), overlap=st.integers(0, 100))
def test_spans_cover_body_with_bounded_overlap(body, max_chars, overlap):
    if overlap >= max_chars:
        overlap = max_chars - 1
    policy = ChunkPolicy(max_chars, overlap)
    spans = chunk_spans(body, policy)
    assert spans[0][0] == 0 and spans[-1][1] == len(body)
    for (s, e) in spans:
        assert 0 < e - s <= max_chars
    for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
        assert s1 == e0 - overlap  # consecutive windows share exactly `overlap` chars
        assert s1 > s0 and e1 > e0
    # stitching the non-overlapping parts back together reconstructs the body
    rebuilt = body[spans[0][0]:spans[0][1]] + "".join(body[e0:e1] for (_, e0), (_, e1) in zip(spans, spans[1:]))
    assert rebuilt == body


def test_empty_file_gives_empty_manifest(tmp_path):
    m = CorpusStore(tmp_path).ingest_bytes(b"", "en")
    assert (m.doc_count, m.chunk_count) == (0, 0)


def test_manifest_counts_and_policy(tmp_path):
    m = CorpusStore(tmp_path).ingest_bytes(jsonl([{"id": "a", "text": "x" * 2600}, {"id": "b", "text": "hi"}]), "EN")
    assert m.lang == "en"
    assert (m.doc_count, m.chunk_count, m.chunk_policy) == (2, 4, (1200, 200))


def test_get_chunk_round_trip(tmp_path):
    store = CorpusStore(tmp_path)
    store.ingest_bytes(jsonl([{"id": "a", "text": "안녕하세요 세계"}]), "ko")
    c = store.chunks("ko")[0]
    assert store.get_chunk(c.chunk_id).text == "안녕하세요 세계"
    # a fresh store reads the same thing back from disk
    assert CorpusStore(tmp_path).get_chunk(c.chunk_id) == c


def test_list_corpora_sorted(tmp_path):
    store = CorpusStore(tmp_path)
    store.ingest_bytes(jsonl([{"text": "a"}]), "ko")
    store.ingest_bytes(jsonl([{"text": "b"}]), "en")
    assert [m.lang for m in store.list_corpora()] == ["en", "ko"]


def test_get_chunk_missing(tmp_path):
    with pytest.raises(NotFoundError):
        CorpusStore(tmp_path).get_chunk("nonexistent")


def test_unknown_language_rejected(tmp_path):
    with pytest.raises(UnknownLanguageError):
        CorpusStore(tmp_path).ingest_bytes(b"", "xx")


@pytest.mark.parametrize("payload,line", [
    (b'{"text": "ok"}\n{bad json}\n', 2),
    (b'{"text": "ok"}\n\n{"title": "no text"}\n', 3),
    (b'{"text": ""}\n', 1),
    (b'[1, 2]\n', 1),
    (b'{"id": "a", "text": "x"}\n{"id": "a", "text": "y"}\n', 2),
    (b'{"text": "\xff"}\n', 1),
])
def test_malformed_input_names_line(payload, line):
    with pytest.raises(IngestError, match=f"line {line}:"):
        list(read_jsonl_documents(payload, "en"))


def test_line_separator_inside_string_is_not_a_line_break():
    payload = json.dumps({"text": "a\u2028b"}, ensure_ascii=False).encode() + b"\n"
    assert "\u2028".encode() in payload
    docs = list(read_jsonl_documents(payload, "en"))
    assert docs[0].body == "a\u2028b"


def test_ingest_is_deterministic(tmp_path):
    data = jsonl([{"text": "x " * 1500}, {"text": "안녕"}])
    m1 = CorpusStore(tmp_path / "a").ingest_bytes(data, "en")
    m2 = CorpusStore(tmp_path / "b").ingest_bytes(data, "en")
    assert m1 == m2
    read = lambda p: hashlib.sha256((p / "en" / "chunks.jsonl").read_bytes()).hexdigest()
    assert read(tmp_path / "a") == read(tmp_path / "b")


def test_reingest_replaces_corpus(tmp_path):
    store = CorpusStore(tmp_path)
    store.ingest_bytes(jsonl([{"id": "a", "text": "one"}]), "en")
    store.ingest_bytes(jsonl([{"id": "b", "text": "two"}]), "en")
    assert [c.doc_id for c in store.chunks("en")] == ["b"]


@settings(max_examples=50, deadline=None)
@given(lang=st.sampled_from(LANGUAGE_POOL), texts=st.lists(st.text(min_size=1, max_size=50), max_size=5))
def test_chunks_stay_in_pool_language(tmp_path_factory, lang, texts):
    store = CorpusStore(tmp_path_factory.mktemp("c"))
    store.ingest_bytes(jsonl([{"text": t} for t in texts]), lang.upper())
    assert all(c.lang == lang and c.chunk_id.startswith(lang + ":") for c in store.chunks(lang))
