"""Language-tagged corpus ingestion and chunk storage.

Layout on disk::

    <root>/<lang>/chunks.jsonl     one chunk per line, in ingestion order
    <root>/<lang>/manifest.json    CorpusManifest

Chunks are exact character slices of the document body, so a chunk's
``span`` can always be used to recover its text from the source.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

from .errors import IngestError, NotFoundError
from .languages import LANGUAGE_POOL, parse_lang

CHUNKS_FILE = "chunks.jsonl"
MANIFEST_FILE = "manifest.json"

# How far back a window end may move to land on whitespace.
SNAP_WINDOW = 40


@dataclass(frozen=True)
class ChunkPolicy:
    max_chars: int = 1200
    overlap_chars: int = 200

    def validate(self) -> None:
        if not (isinstance(self.max_chars, int) and isinstance(self.overlap_chars, int)):
            raise ValueError("chunk policy values must be integers")
        if not self.max_chars > self.overlap_chars >= 0:
            raise ValueError(
                f"invalid chunk policy: need max_chars > overlap_chars >= 0, "
                f"got ({self.max_chars}, {self.overlap_chars})"
            )


@dataclass(frozen=True)
class DocumentRecord:
    doc_id: str
    lang: str
    title: str
    body: str
    source_uri: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "lang", parse_lang(self.lang))
        if not self.body:
            raise ValueError(f"document {self.doc_id!r} has an empty body")


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    lang: str
    text: str
    span: tuple[int, int]

    def to_json(self) -> dict:
        d = asdict(self)
        d["span"] = list(self.span)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Chunk":
        return cls(d["chunk_id"], d["doc_id"], d["lang"], d["text"], tuple(d["span"]))


@dataclass(frozen=True)
class CorpusManifest:
    lang: str
    doc_count: int
    chunk_count: int
    chunk_policy: tuple[int, int]
    content_digest: str

    def to_json(self) -> dict:
        d = asdict(self)
        d["chunk_policy"] = list(self.chunk_policy)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CorpusManifest":
        return cls(d["lang"], d["doc_count"], d["chunk_count"], tuple(d["chunk_policy"]),
                   d["content_digest"])


def make_chunk_id(lang: str, doc_id: str, ordinal: int) -> str:
    # lang prefix keeps ids unique across corpora; doc ids are only unique within one.
    return f"{lang}:{doc_id}:{ordinal:05d}"


def _snap_end(body: str, end: int, floor: int) -> int:
    """Move ``end`` back to the closest whitespace within SNAP_WINDOW, never to or below ``floor``."""
    lo = max(end - SNAP_WINDOW, floor + 1)
    for j in range(end, lo - 1, -1):
        if body[j].isspace():
            return j
    return end


def chunk_spans(body: str, policy: ChunkPolicy) -> list[tuple[int, int]]:
    policy.validate()
    n = len(body)
    if n == 0:
        return []
    spans = []
    start = 0
    while True:
        end = min(start + policy.max_chars, n)
        if end < n:
            # the next window starts at end - overlap, which must stay past start
            end = _snap_end(body, end, start + policy.overlap_chars)
        spans.append((start, end))
        if end >= n:
            break
        start = end - policy.overlap_chars
    return spans


def chunk_document(doc: DocumentRecord, policy: ChunkPolicy = ChunkPolicy()) -> list[Chunk]:
    return [
        Chunk(make_chunk_id(doc.lang, doc.doc_id, i), doc.doc_id, doc.lang, doc.body[s:e], (s, e))
        for i, (s, e) in enumerate(chunk_spans(doc.body, policy))
    ]


def derive_doc_id(lang: str, line_no: int, text: str) -> str:
    h = hashlib.sha256(f"{lang}\x1f{line_no}\x1f{text}".encode("utf-8"))
    return h.hexdigest()[:20]


def read_jsonl_documents(data: bytes, lang: str) -> Iterator[DocumentRecord]:
    """Parse JSONL bytes into documents; line numbers in errors are 1-based."""
    seen: set[str] = set()
    # split on bytes: str.splitlines would also break on U+2028 inside JSON strings
    for line_no, raw_bytes in enumerate(data.split(b"\n"), start=1):
        try:
            raw = raw_bytes.decode("utf-8").rstrip("\r")
        except UnicodeDecodeError:
            raise IngestError(f"line {line_no}: not valid UTF-8") from None
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise IngestError(f"line {line_no}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise IngestError(f"line {line_no}: expected a JSON object")
        text = obj.get("text")
        if not isinstance(text, str) or not text:
            raise IngestError(f"line {line_no}: missing or empty 'text' field")
        doc_id = obj.get("id")
        if doc_id is None:
            doc_id = derive_doc_id(lang, line_no, text)
        elif not isinstance(doc_id, str) or not doc_id:
            raise IngestError(f"line {line_no}: 'id' must be a non-empty string")
        if doc_id in seen:
            raise IngestError(f"line {line_no}: duplicate document id {doc_id!r}")
        seen.add(doc_id)
        title = obj.get("title") or ""
        if not isinstance(title, str):
            raise IngestError(f"line {line_no}: 'title' must be a string")
        yield DocumentRecord(doc_id, lang, title, text, obj.get("source_uri"))


class CorpusStore:
    """Directory-backed chunk store. Single writer during ingestion, read-only afterwards."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._cache: dict[str, dict[str, Chunk]] = {}

    def ingest_jsonl(self, path: str | Path, lang: str,
                     policy: ChunkPolicy = ChunkPolicy()) -> CorpusManifest:
        lang = parse_lang(lang)
        policy.validate()
        data = Path(path).read_bytes()
        return self.ingest_bytes(data, lang, policy)

    def ingest_bytes(self, data: bytes, lang: str,
                     policy: ChunkPolicy = ChunkPolicy()) -> CorpusManifest:
        lang = parse_lang(lang)
        policy.validate()
        docs = list(read_jsonl_documents(data, lang))
        chunks = [c for d in docs for c in chunk_document(d, policy)]
        manifest = CorpusManifest(
            lang=lang,
            doc_count=len(docs),
            chunk_count=len(chunks),
            chunk_policy=(policy.max_chars, policy.overlap_chars),
            content_digest=hashlib.sha256(data).hexdigest(),
        )
        target = self.root / lang
        tmp = self.root / f".{lang}.tmp"
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        with open(tmp / CHUNKS_FILE, "w", encoding="utf-8", newline="\n") as fh:
            for c in chunks:
                fh.write(json.dumps(c.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
        (tmp / MANIFEST_FILE).write_text(
            json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        if target.exists():
            shutil.rmtree(target)
        tmp.rename(target)
        self._cache.pop(lang, None)
        return manifest

    def has_corpus(self, lang: str) -> bool:
        return (self.root / parse_lang(lang) / MANIFEST_FILE).is_file()

    def manifest(self, lang: str) -> CorpusManifest:
        lang = parse_lang(lang)
        path = self.root / lang / MANIFEST_FILE
        if not path.is_file():
            raise NotFoundError(f"no corpus ingested for language {lang!r}")
        return CorpusManifest.from_json(json.loads(path.read_text(encoding="utf-8")))

    def list_corpora(self) -> list[CorpusManifest]:
        return [self.manifest(lang) for lang in sorted(LANGUAGE_POOL)
                if (self.root / lang / MANIFEST_FILE).is_file()]

    def chunks(self, lang: str) -> list[Chunk]:
        """All chunks of one corpus in ingestion order."""
        return list(self._load(parse_lang(lang)).values())

    def get_chunk(self, chunk_id: str) -> Chunk:
        lang = chunk_id.split(":", 1)[0]
        if lang in LANGUAGE_POOL and (self.root / lang / MANIFEST_FILE).is_file():
            chunk = self._load(lang).get(chunk_id)
            if chunk is not None:
                return chunk
        raise NotFoundError(f"chunk not found: {chunk_id!r}")

    def _load(self, lang: str) -> dict[str, Chunk]:
        if lang not in self._cache:
            path = self.root / lang / CHUNKS_FILE
            if not path.is_file():
                raise NotFoundError(f"no corpus ingested for language {lang!r}")
            table: dict[str, Chunk] = {}
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    c = Chunk.from_json(json.loads(line))
                    table[c.chunk_id] = c
            self._cache[lang] = table
        return self._cache[lang]
