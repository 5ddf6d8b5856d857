"""Binary shard files.

``<lang>.shard``::

    bytes 0-7    magic  b"CORALSHD"
    bytes 8-11   format version, uint32 LE (currently 1)
    bytes 12-15  dimension D, uint32 LE
    bytes 16-23  row count N, uint64 LE
    then N*D float32 LE values, row-major

``<lang>.json`` sidecar: ``{"lang", "embed_model_tag", "dim", "rows", "chunk_ids"}``
where ``chunk_ids[i]`` names row ``i``.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError

MAGIC = b"CORALSHD"
VERSION = 1
_HEADER = struct.Struct("<8sIIQ")


@dataclass
class IndexShard:
    lang: str
    matrix: np.ndarray  # (rows, dim) float32, unit rows
    row_map: list[str]
    embed_model_tag: str

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.row_map):
            raise ValueError(f"shard {self.lang!r}: {len(self.row_map)} chunk ids for matrix {self.matrix.shape}")
        if len(set(self.row_map)) != len(self.row_map):
            raise ValueError(f"shard {self.lang!r}: duplicate chunk ids")
        # search breaks score ties by row index, so rows must be in chunk-id order
        order = sorted(range(len(self.row_map)), key=self.row_map.__getitem__)
        if order != list(range(len(order))):
            self.matrix = self.matrix[order]
            self.row_map = [self.row_map[i] for i in order]

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def rows(self) -> int:
        return int(self.matrix.shape[0])


def shard_paths(root: Path, lang: str) -> tuple[Path, Path]:
    return root / f"{lang}.shard", root / f"{lang}.json"


def write_shard(root: Path, shard: IndexShard) -> None:
    root.mkdir(parents=True, exist_ok=True)
    bin_path, meta_path = shard_paths(root, shard.lang)
    mat = np.ascontiguousarray(shard.matrix, dtype="<f4")
    header = _HEADER.pack(MAGIC, VERSION, shard.dim, shard.rows)
    tmp = bin_path.with_suffix(".shard.tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(mat.tobytes(order="C"))
    os.replace(tmp, bin_path)
    meta = {
        "lang": shard.lang,
        "embed_model_tag": shard.embed_model_tag,
        "dim": shard.dim,
        "rows": shard.rows,
        "chunk_ids": shard.row_map,
    }
    meta_path.write_text(json.dumps(meta, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")


def read_shard(root: Path, lang: str) -> IndexShard:
    bin_path, meta_path = shard_paths(root, lang)
    data = bin_path.read_bytes()
    if len(data) < _HEADER.size:
        raise ConfigurationError(f"{bin_path}: truncated header")
    magic, version, dim, rows = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ConfigurationError(f"{bin_path}: bad magic {magic!r}")
    if version != VERSION:
        raise ConfigurationError(f"{bin_path}: unsupported shard version {version}")
    expected = _HEADER.size + rows * dim * 4
    if len(data) != expected:
        raise ConfigurationError(f"{bin_path}: size {len(data)} != expected {expected}")
    matrix = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(rows, dim)
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta["rows"] != rows or meta["dim"] != dim or len(meta["chunk_ids"]) != rows:
        raise ConfigurationError(f"{meta_path}: sidecar disagrees with shard header")
    return IndexShard(lang, matrix.astype(np.float32), list(meta["chunk_ids"]), meta["embed_model_tag"])
