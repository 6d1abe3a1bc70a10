"""Exact cosine top-k index over chunk embeddings, with a versioned binary file format.

File layout (all integers little-endian)::

    b"RLADIDX1"                      magic, 8 bytes
    u32 version | u32 dim | u32 count
    count x ( u32 id_len | id_len bytes UTF-8 id | dim x f32 )
    u32 CRC32 of every preceding byte
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_write_bytes, atomic_write_text, dump_json
from .corpus import Chunk
from .embedding import EmbedderSpec, EmbeddingVector, make_embedder
from .errors import (
    DimensionMismatchError,
    DuplicateChunkError,
    EmptyIndexError,
    IndexChecksumError,
    IndexFormatError,
    IndexTruncatedError,
    IndexVersionError,
    InvalidInputError,
)

MAGIC = b"RLADIDX1"
VERSION = 1
DEFAULT_K = 4
_HEADER = struct.Struct("<III")
_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: str
    score: float
    rank: int


class VectorIndex:
    """Immutable list of ``(chunk_id, vector)`` entries kept in insertion order."""

    metric = "cosine"

    def __init__(self, dim: int, chunk_ids: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype="<f4")
        if matrix.shape != (len(chunk_ids), dim):
            raise DimensionMismatchError(
                f"matrix shape {matrix.shape} does not match {len(chunk_ids)} ids x dim {dim}"
            )
        seen = set()
        for cid in chunk_ids:
            if cid in seen:
                raise DuplicateChunkError(f"duplicate chunk_id {cid!r}")
            seen.add(cid)
        self.dim = int(dim)
        self.chunk_ids = tuple(chunk_ids)
        self.matrix = np.ascontiguousarray(matrix)
        self.matrix.setflags(write=False)
        self._matrix64 = self.matrix.astype(np.float64)

    @classmethod
    def from_vectors(cls, dim: int, entries: Sequence[tuple[str, EmbeddingVector]]) -> "VectorIndex":
        for cid, vec in entries:
            if vec.dim != dim:
                raise DimensionMismatchError(f"vector for {cid!r} has dim {vec.dim}, index dim is {dim}")
        matrix = np.stack([v.values for _, v in entries]) if entries else np.zeros((0, dim), np.float32)
        return cls(dim, [cid for cid, _ in entries], matrix)

    def __len__(self):
        return len(self.chunk_ids)

    def vector(self, i: int) -> EmbeddingVector:
        return EmbeddingVector(self.matrix[i])

    def __eq__(self, other):
        if not isinstance(other, VectorIndex):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.chunk_ids == other.chunk_ids
            and self.matrix.tobytes() == other.matrix.tobytes()
        )

    def __repr__(self):
        return f"VectorIndex(dim={self.dim}, entries={len(self)})"


def build_index(chunks: Sequence[Chunk], spec: EmbedderSpec = EmbedderSpec(), embedder=None) -> VectorIndex:
    if not chunks:
        raise InvalidInputError("cannot build an index from zero chunks")
    ids = [c.chunk_id for c in chunks]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DuplicateChunkError(f"duplicate chunk ids: {dupes}")
    embedder = embedder or make_embedder(spec)
    vectors = embedder.embed_batch([c.text for c in chunks])
    return VectorIndex.from_vectors(spec.dim, list(zip(ids, vectors)))


def top_k(index: VectorIndex, query: EmbeddingVector, k: int = DEFAULT_K) -> list[RetrievalHit]:
    """Highest-cosine entries first; equal scores keep insertion order."""
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if query.dim != index.dim:
        raise DimensionMismatchError(f"query dim {query.dim} != index dim {index.dim}")
    if len(index) == 0:
        raise EmptyIndexError("index has no entries")
    q = query.values.astype(np.float64)
    # row-wise reduction: identical rows always produce identical scores
    scores = (index._matrix64 * q).sum(axis=1)
    order = np.argsort(-scores, kind="stable")[:k]
    return [
        RetrievalHit(index.chunk_ids[i], float(np.clip(scores[i], -1.0, 1.0)), rank)
        for rank, i in enumerate(order, start=1)
    ]


def encode_index(index: VectorIndex) -> bytes:
    parts = [MAGIC, _HEADER.pack(VERSION, index.dim, len(index))]
    for cid, row in zip(index.chunk_ids, index.matrix):
        raw = cid.encode("utf-8")
        parts += [_U32.pack(len(raw)), raw, row.astype("<f4").tobytes()]
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


def decode_index(data: bytes) -> VectorIndex:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise IndexFormatError("not an index file (bad magic)")
    pos = len(MAGIC)

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise IndexTruncatedError(f"file ends at byte {len(data)} while reading {what} at {pos}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    version, dim, count = _HEADER.unpack(take(_HEADER.size, "header"))
    if version != VERSION:
        raise IndexVersionError(f"index format version {version}, this build reads version {VERSION}")
    if dim == 0:
        raise IndexFormatError("index header declares dim 0")
    # cheap lower bound before allocating: every entry needs a length word and its floats
    if count * (4 + 4 * dim) > len(data) - pos:
        raise IndexTruncatedError(f"header declares {count} x {dim} floats, more than the file holds")
    ids = []
    matrix = np.empty((count, dim), dtype="<f4")
    for i in range(count):
        (n,) = _U32.unpack(take(4, f"id length of entry {i}"))
        try:
            ids.append(take(n, f"id of entry {i}").decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise IndexFormatError(f"entry {i} id is not UTF-8") from exc
        matrix[i] = np.frombuffer(take(4 * dim, f"vector of entry {i}"), dtype="<f4")
    body_end = pos
    (crc,) = _U32.unpack(take(4, "checksum"))
    if pos != len(data):
        raise IndexFormatError(f"{len(data) - pos} unexpected trailing bytes")
    if zlib.crc32(data[:body_end]) != crc:
        raise IndexChecksumError("CRC32 mismatch: index file is corrupted")
    return VectorIndex(dim, ids, matrix)


def save_index(index: VectorIndex, path: str | os.PathLike, metadata: Sequence[dict] | None = None) -> None:
    """Write the binary index plus a ``<path>.json`` sidecar for humans."""
    data = encode_index(index)
    atomic_write_bytes(path, data)
    sidecar = {
        "format": MAGIC.decode("ascii"),
        "version": VERSION,
        "dim": index.dim,
        "count": len(index),
        "metric": index.metric,
        "crc32": zlib.crc32(data[:-4]),
        "entries": list(metadata) if metadata is not None else [{"chunk_id": c} for c in index.chunk_ids],
    }
    atomic_write_text(sidecar_path(path), dump_json(sidecar))


def load_index(path: str | os.PathLike) -> VectorIndex:
    return decode_index(Path(path).read_bytes())


def sidecar_path(path: str | os.PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_sidecar(path: str | os.PathLike) -> dict:
    return json.loads(sidecar_path(path).read_text(encoding="utf-8"))
