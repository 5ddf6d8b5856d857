"""Embedding and exact cosine top-k search over per-language shards."""

from .embedders import Embedder, HashingEmbedder, HttpEmbedder, ScriptedEmbedder
from .index import ScoredHit, VectorIndex, normalize_rows
from .shard import IndexShard, read_shard, write_shard

__all__ = [
    "Embedder", "HashingEmbedder", "HttpEmbedder", "ScriptedEmbedder",
    "ScoredHit", "VectorIndex", "normalize_rows",
    "IndexShard", "read_shard", "write_shard",
]
