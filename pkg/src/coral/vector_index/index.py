from __future__ import annotations

import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..corpus_store import CorpusStore
from ..errors import ConfigurationError, NotFoundError, TransportError
from ..languages import LANGUAGE_POOL, parse_lang
from . import kernels
from .embedders import Embedder
from .shard import IndexShard, read_shard, shard_paths, write_shard


@dataclass(frozen=True)
class ScoredHit:
    chunk_id: str
    lang: str
    score: float
    rank: int

    def to_json(self) -> dict:
        return asdict(self)


def normalize_rows(raw: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    norms = np.linalg.norm(raw, axis=1)
    if np.any(~np.isfinite(norms)) or np.any(norms == 0):
        raise TransportError("embedding endpoint returned a zero or non-finite vector")
    return (raw / norms[:, None]).astype(np.float32)


class VectorIndex:
    """Exact cosine search over per-language shards stored under ``root``.

    Shards are immutable once built and may be searched concurrently.
    """

    def __init__(self, root: str | Path, embedder: Embedder | None = None,
                 store: CorpusStore | None = None, embed_batch_size: int = 64):
        self.root = Path(root)
        self.embedder = embedder
        self.store = store
        self.embed_batch_size = embed_batch_size
        self._shards: dict[str, IndexShard] = {}
        self._lock = threading.Lock()

    # -- embedding ---------------------------------------------------------

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        """Embed ``texts`` and return unit-norm float32 rows in input order."""
        if not texts:
            raise ValueError("embed_batch needs at least one text")
        if self.embedder is None:
            raise ConfigurationError("no embedding backend configured")
        raw = np.asarray(self.embedder.embed(list(texts)), dtype=np.float64)
        if raw.ndim != 2 or raw.shape[0] != len(texts):
            raise TransportError(f"embedding backend returned shape {raw.shape} for {len(texts)} texts")
        dim = self.expected_dim()
        if dim and raw.shape[1] != dim:
            raise ConfigurationError(f"embedding dimension {raw.shape[1]} does not match index dimension {dim}")
        return normalize_rows(raw)

    def embed_query(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def expected_dim(self) -> int:
        for lang in self.available_langs():
            shard = self.shard(lang)
            if shard.dim:
                return shard.dim
        return 0

    # -- building ----------------------------------------------------------

    def build_shard(self, lang: str, allow_missing: bool = False) -> IndexShard:
        """Embed one corpus and persist its shard.

        With ``allow_missing`` a language without an ingested corpus gets an
        empty shard, so a full-pool run can proceed over partial data.
        """
        lang = parse_lang(lang)
        if self.store is None:
            raise ConfigurationError("build_shard needs a corpus store")
        if self.embedder is None:
            raise ConfigurationError("no embedding backend configured")
        if allow_missing and not self.store.has_corpus(lang):
            chunks = []
        else:
            chunks = sorted(self.store.chunks(lang), key=lambda c: c.chunk_id)
        if chunks:
            parts = []
            for i in range(0, len(chunks), self.embed_batch_size):
                batch = chunks[i:i + self.embed_batch_size]
                raw = np.asarray(self.embedder.embed([c.text for c in batch]), dtype=np.float64)
                if raw.ndim != 2 or raw.shape[0] != len(batch):
                    raise TransportError(f"embedding backend returned shape {raw.shape}")
                parts.append(normalize_rows(raw))
            matrix = np.vstack(parts)
        else:
            matrix = np.zeros((0, int(getattr(self.embedder, "dim", 0) or 0)), dtype=np.float32)
        shard = IndexShard(lang, matrix, [c.chunk_id for c in chunks], self.embedder.model_tag)
        write_shard(self.root, shard)
        with self._lock:
            self._shards[lang] = shard
        return shard

    # -- loading -----------------------------------------------------------

    def has_shard(self, lang: str) -> bool:
        bin_path, meta_path = shard_paths(self.root, parse_lang(lang))
        return bin_path.is_file() and meta_path.is_file()

    def available_langs(self) -> list[str]:
        return [lang for lang in sorted(LANGUAGE_POOL) if self.has_shard(lang)]

    def require(self, langs: Iterable[str]) -> None:
        for lang in langs:
            if not self.has_shard(lang):
                raise NotFoundError(f"no index shard for language {lang!r} (run `coral index {lang}`)")

    def shard(self, lang: str) -> IndexShard:
        lang = parse_lang(lang)
        with self._lock:
            cached = self._shards.get(lang)
        if cached is not None:
            return cached
        if not self.has_shard(lang):
            raise NotFoundError(f"no index shard for language {lang!r} (run `coral index {lang}`)")
        shard = read_shard(self.root, lang)
        if self.embedder is not None and shard.embed_model_tag != self.embedder.model_tag:
            raise ConfigurationError(
                f"shard {lang!r} was built with {shard.embed_model_tag!r}, "
                f"but the configured embedder is {self.embedder.model_tag!r}")
        with self._lock:
            self._shards.setdefault(lang, shard)
        return shard

    # -- search ------------------------------------------------------------

    def _search_shard(self, shard: IndexShard, query: np.ndarray, k: int) -> list[ScoredHit]:
        if shard.rows == 0:
            return []
        if query.shape[0] != shard.dim:
            raise ConfigurationError(f"query dimension {query.shape[0]} != shard {shard.lang!r} dimension {shard.dim}")
        idx, scores = kernels.topk(shard.matrix, query, k)
        return [ScoredHit(shard.row_map[i], shard.lang, float(s), r)
                for r, (i, s) in enumerate(zip(idx.tolist(), scores.tolist()), start=1)]

    def search(self, query_vec: np.ndarray, langs: Iterable[str], k: int) -> dict[str, list[ScoredHit]]:
        """Exact top-``k`` per language, ties broken by ascending chunk id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(query_vec, dtype=np.float64).ravel()
        out: dict[str, list[ScoredHit]] = {}
        for lang in langs:
            lang = parse_lang(lang)
            if lang not in out:
                out[lang] = self._search_shard(self.shard(lang), q, k)
        return out

    def search_pooled(self, query_vec: np.ndarray, k: int,
                      langs: Iterable[str] | None = None) -> list[ScoredHit]:
        """Global top-``k`` over several shards (all available ones by default).

        Order: score desc, then lang asc, then chunk id asc. Merging per-shard
        top-k lists is exact because that order refines each shard's own order.
        """
        scope = self.available_langs() if langs is None else sorted({parse_lang(x) for x in langs})
        per_lang = self.search(query_vec, scope, k)
        merged = [h for hits in per_lang.values() for h in hits]
        merged.sort(key=lambda h: (-h.score, h.lang, h.chunk_id))
        return [ScoredHit(h.chunk_id, h.lang, h.score, r) for r, h in enumerate(merged[:k], start=1)]
