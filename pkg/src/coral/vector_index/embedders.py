"""Embedding backends.

Every backend returns raw (unnormalized) vectors; normalization happens in
``VectorIndex.embed_batch`` so that persistence is canonical regardless of
the backend.
"""

from __future__ import annotations

import hashlib
import re
from concurrent.futures import ThreadPoolExecutor
from typing import Protocol, Sequence

import httpx
import numpy as np

from ..errors import TransportError
from ..transport import post_json


class Embedder(Protocol):
    model_tag: str

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


_WORD = re.compile(r"\w+", re.UNICODE)


class HashingEmbedder:
    """Offline, deterministic bag-of-features embedder.

    Features are lowercased word tokens plus character trigrams of each
    token, hashed into ``dim`` signed buckets. Good enough to make lexical
    overlap show up as cosine similarity; used for scripted runs and tests.
    """

    def __init__(self, dim: int = 256):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.model_tag = f"hashing-v1-d{dim}"

    def _features(self, text: str):
        for tok in _WORD.findall(text.lower()):
            yield "w:" + tok
            padded = f"^{tok}$"
            for i in range(len(padded) - 2):
                yield "c:" + padded[i:i + 3]

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for feat in self._features(text):
                h = hashlib.blake2b(feat.encode("utf-8"), digest_size=8).digest()
                v = int.from_bytes(h, "little")
                sign = 1.0 if v & 1 else -1.0
                weight = 1.0 if feat[0] == "w" else 0.5
                out[row, (v >> 1) % self.dim] += sign * weight
            if not out[row].any():
                out[row, 0] = 1.0  # featureless text still needs a direction
        return out


class ScriptedEmbedder:
    """Returns fixed vectors for known texts, delegating the rest to ``fallback``."""

    def __init__(self, vectors: dict[str, Sequence[float]], fallback: Embedder | None = None):
        dims = {len(v) for v in vectors.values()}
        if fallback is not None and getattr(fallback, "dim", None):
            dims.add(fallback.dim)
        if len(dims) > 1:
            raise ValueError(f"inconsistent scripted vector dimensions: {sorted(dims)}")
        self.vectors = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
        self.fallback = fallback
        self.dim = dims.pop() if dims else 0
        self.model_tag = "scripted" if fallback is None else f"scripted+{fallback.model_tag}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows = []
        for t in texts:
            if t in self.vectors:
                rows.append(self.vectors[t])
            elif self.fallback is not None:
                rows.append(self.fallback.embed([t])[0])
            else:
                raise KeyError(f"no scripted embedding for text {t[:60]!r}")
        return np.vstack(rows) if rows else np.zeros((0, 0))


class HttpEmbedder:
    """Client for the common ``{model, input: [...]}`` -> ``{data: [{embedding}]}`` protocol."""

    def __init__(self, url: str, model: str, *, api_key: str | None = None,
                 timeout_s: float = 60.0, retries: int = 3, backoff_s: float = 0.5,
                 batch_size: int = 64, max_in_flight: int = 4,
                 client: httpx.Client | None = None):
        self.url = url
        self.model = model
        self.model_tag = f"http:{model}"
        self.retries = retries
        self.backoff_s = backoff_s
        self.batch_size = batch_size
        self.max_in_flight = max(1, max_in_flight)
        self.headers = {"Authorization": f"Bearer {api_key}"} if api_key else None
        self.client = client or httpx.Client(timeout=timeout_s)

    def _embed_one_batch(self, texts: Sequence[str]) -> list[list[float]]:
        body = post_json(self.client, self.url, {"model": self.model, "input": list(texts)},
                         headers=self.headers, retries=self.retries, backoff_s=self.backoff_s)
        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(texts):
            raise TransportError(f"embedding response has {0 if not isinstance(data, list) else len(data)} "
                                 f"items for {len(texts)} inputs")
        # servers may reorder; honour "index" when present
        if all(isinstance(d, dict) and "index" in d for d in data):
            data = sorted(data, key=lambda d: d["index"])
        try:
            return [list(map(float, d["embedding"])) for d in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed embedding response: {exc}") from exc

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        batches = [texts[i:i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        if self.max_in_flight == 1 or len(batches) <= 1:
            results = [self._embed_one_batch(b) for b in batches]
        else:
            with ThreadPoolExecutor(self.max_in_flight) as pool:
                results = list(pool.map(self._embed_one_batch, batches))
        rows = [v for batch in results for v in batch]
        return np.asarray(rows, dtype=np.float64)
