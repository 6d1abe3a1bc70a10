"""Corpus ingestion and fixed-size overlapping character chunking."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ._io import atomic_write_text
from .errors import ConfigError, EmptyCorpusError, InvalidInputError

logger = logging.getLogger(__name__)

CODE_EXTENSIONS = {".c", ".cc", ".cpp", ".cxx", ".h", ".hh", ".hpp", ".hxx", ".cl"}
PROSE_EXTENSIONS = {".txt", ".rst"}
DEFAULT_INCLUDE = ("**/*.c", "**/*.cpp", "**/*.h", "**/*.md", "**/*.txt")
PRAGMA_TOKEN = "#pragma"


def kind_for(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext in CODE_EXTENSIONS:
        return "code"
    if ext in PROSE_EXTENSIONS:
        return "prose"
    # markdown and anything unrecognised usually interleaves prose with listings
    return "mixed"


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    kind: str = "mixed"


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    start: int
    end: int
    text: str = field(repr=False)

    def to_record(self, include_text: bool = False) -> dict:
        rec = {"chunk_id": self.chunk_id, "doc_id": self.doc_id, "start": self.start, "end": self.end}
        if include_text:
            rec["text"] = self.text
        return rec


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_size: int = 1000
    overlap: int = 200

    def __post_init__(self):
        if self.chunk_size <= 0:
            raise ConfigError(f"chunk_size must be positive, got {self.chunk_size}")
        if self.overlap < 0:
            raise ConfigError(f"overlap must be non-negative, got {self.overlap}")
        if self.overlap >= self.chunk_size:
            raise ConfigError(
                f"overlap ({self.overlap}) must be smaller than chunk_size ({self.chunk_size})"
            )

    @property
    def step(self) -> int:
        return self.chunk_size - self.overlap


def ingest_corpus(root: str | os.PathLike, include: Sequence[str] = DEFAULT_INCLUDE) -> list[Document]:
    """Load every file under ``root`` matching any of the ``include`` globs.

    Files that do not decode as UTF-8, or that are blank, are skipped with a
    logged warning. The result is sorted by ``doc_id`` (the POSIX-style path
    relative to ``root``).

    Raises:
        ConfigError: ``root`` does not exist or is not a directory.
        EmptyCorpusError: nothing usable matched.
    """
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"corpus root {str(root)!r} does not exist or is not a directory")
    if isinstance(include, str):
        include = [include]

    paths: dict[str, Path] = {}
    for pattern in include:
        for p in root.glob(pattern):
            if p.is_file():
                paths[p.relative_to(root).as_posix()] = p

    docs = []
    for doc_id in sorted(paths):
        try:
            text = paths[doc_id].read_bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            logger.warning("skipping %s: not valid UTF-8 (%s)", doc_id, exc.reason)
            continue
        if not text.strip():
            logger.warning("skipping %s: empty document", doc_id)
            continue
        docs.append(Document(doc_id=doc_id, text=text, kind=kind_for(doc_id)))

    if not docs:
        raise EmptyCorpusError(
            f"no usable documents under {str(root)!r} matching {list(include)}"
        )
    return docs


def expected_chunk_count(length: int, cfg: ChunkingConfig) -> int:
    if length <= cfg.chunk_size:
        return 1
    return math.ceil((length - cfg.chunk_size) / cfg.step) + 1


def chunk_spans(length: int, cfg: ChunkingConfig) -> list[tuple[int, int]]:
    """Window spans ``[i*step, min(i*step + size, length))``, stopping at the first window that reaches the end."""
    spans = []
    start = 0
    while True:
        end = min(start + cfg.chunk_size, length)
        spans.append((start, end))
        if end >= length:
            return spans
        start += cfg.step


def chunk_document(doc: Document, cfg: ChunkingConfig = ChunkingConfig()) -> list[Chunk]:
    if not doc.text:
        raise InvalidInputError(f"document {doc.doc_id!r} is empty")
    return [
        Chunk(chunk_id=f"{doc.doc_id}#{i}", doc_id=doc.doc_id, start=s, end=e, text=doc.text[s:e])
        for i, (s, e) in enumerate(chunk_spans(len(doc.text), cfg))
    ]


def chunk_corpus(docs: Iterable[Document], cfg: ChunkingConfig = ChunkingConfig()) -> list[Chunk]:
    chunks: list[Chunk] = []
    for doc in docs:
        chunks.extend(chunk_document(doc, cfg))
    return chunks


def reconstruct_text(chunks: Sequence[Chunk]) -> str:
    """Join one document's chunks back together, dropping the overlapping prefix of each."""
    parts = []
    covered = 0
    for c in sorted(chunks, key=lambda c: c.start):
        if c.start > covered:
            raise InvalidInputError(f"gap in chunk coverage between {covered} and {c.start}")
        if c.end > covered:
            parts.append(c.text[covered - c.start:])
            covered = c.end
    return "".join(parts)


@dataclass(frozen=True)
class PragmaWarning:
    doc_id: str
    line_no: int
    line_start: int
    line_end: int
    boundary: int
    chunk_id: str

    def __str__(self):
        return (
            f"{self.doc_id}:{self.line_no}: pragma line [{self.line_start},{self.line_end}) "
            f"is split by the boundary at offset {self.boundary} of chunk {self.chunk_id} "
            f"and no chunk holds it whole"
        )


def _pragma_lines(text: str):
    pos = 0
    for line_no, line in enumerate(text.splitlines(keepends=True), start=1):
        body = line.rstrip("\r\n")
        if PRAGMA_TOKEN in body:
            yield line_no, pos, pos + len(body)
        pos += len(line)


def verify_pragma_integrity(chunks: Sequence[Chunk]) -> list[PragmaWarning]:
    """Report every ``#pragma`` line that no single chunk contains in full."""
    if not chunks:
        return []
    doc_ids = {c.doc_id for c in chunks}
    if len(doc_ids) != 1:
        raise InvalidInputError(f"chunks span several documents: {sorted(doc_ids)}")
    text = reconstruct_text(chunks)
    ordered = sorted(chunks, key=lambda c: c.start)

    warnings = []
    for line_no, ls, le in _pragma_lines(text):
        if any(c.start <= ls and le <= c.end for c in ordered):
            continue
        # name the first window edge that falls strictly inside the line
        for c in ordered:
            if ls < c.end < le:
                boundary, owner = c.end, c
                break
            if ls < c.start < le:
                boundary, owner = c.start, c
                break
        else:  # pragma: no cover - a line not contained in any chunk must cross an edge
            boundary, owner = ls, ordered[0]
        warnings.append(PragmaWarning(next(iter(doc_ids)), line_no, ls, le, boundary, owner.chunk_id))
    return warnings


def write_manifest(chunks: Iterable[Chunk], path: str | os.PathLike, include_text: bool = False) -> None:
    lines = [json.dumps(c.to_record(include_text), ensure_ascii=False, sort_keys=True) for c in chunks]
    atomic_write_text(path, "".join(l + "\n" for l in lines))


def read_manifest(path: str | os.PathLike) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
