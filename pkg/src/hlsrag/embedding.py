"""Text embedders: a deterministic hashed 3-gram embedder and a remote HTTP one.

Every provider returns L2-normalised float32 vectors so that cosine
similarity downstream is a plain dot product.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import httpx
import numpy as np

from .errors import (
    ConfigError,
    EmbeddingProviderError,
    EmbeddingSchemaError,
    InvalidInputError,
)

logger = logging.getLogger(__name__)

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
NGRAM = 3
PROVIDERS = ("local-ngram", "remote-http")


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


class EmbeddingVector:
    """Immutable, finite, unit-norm float32 vector."""

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float32)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInputError(f"embedding must be a non-empty 1-d vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("embedding contains NaN or Inf")
        arr.setflags(write=False)
        self.values = arr

    @classmethod
    def normalized(cls, values) -> "EmbeddingVector":
        raw = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(raw)):
            raise InvalidInputError("embedding contains NaN or Inf")
        norm = float(np.linalg.norm(raw))
        if norm == 0.0:
            raise InvalidInputError("cannot normalise a zero vector")
        return cls(raw / norm)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def cosine(self, other: "EmbeddingVector") -> float:
        return float(np.dot(self.values.astype(np.float64), other.values.astype(np.float64)))

    def __eq__(self, other):
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return self.values.tobytes() == other.values.tobytes()

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self):
        return f"EmbeddingVector(dim={self.dim})"


@dataclass(frozen=True)
class EmbedderSpec:
    provider: str = "local-ngram"
    dim: int = 256
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "EMBED_API_KEY"
    batch_size: int = 64
    max_in_flight: int = 4
    max_retries: int = 3
    timeout_s: float = 60.0
    backoff_s: float = 1.0

    def __post_init__(self):
        if self.provider not in PROVIDERS:
            raise ConfigError(f"unknown embedding provider {self.provider!r}; expected one of {PROVIDERS}")
        if self.dim <= 0:
            raise ConfigError(f"embedding dim must be positive, got {self.dim}")
        if self.provider == "remote-http" and not self.endpoint:
            raise ConfigError("remote-http embedder requires an endpoint")
        if self.batch_size <= 0 or self.max_in_flight <= 0 or self.max_retries < 0:
            raise ConfigError("batch_size and max_in_flight must be positive, max_retries non-negative")


def _check_texts(texts: Sequence[str]) -> None:
    bad = [i for i, t in enumerate(texts) if not isinstance(t, str) or not t.strip()]
    if bad:
        raise InvalidInputError(f"empty text at indices {bad}")


class LocalNgramEmbedder:
    """Hashed bag of character 3-grams.

    The text is lower-cased, every contiguous 3-character window is hashed
    with 64-bit FNV-1a over its UTF-8 bytes, and ``hash % dim`` picks the
    bucket whose count is incremented. Texts shorter than three characters
    contribute themselves as a single gram.
    """

    def __init__(self, dim: int = 256):
        self.dim = dim

    def _counts(self, text: str) -> np.ndarray:
        lowered = text.lower()
        counts = np.zeros(self.dim, dtype=np.float64)
        if len(lowered) < NGRAM:
            grams = [lowered]
        else:
            grams = (lowered[i:i + NGRAM] for i in range(len(lowered) - NGRAM + 1))
        cache: dict[str, int] = {}
        for g in grams:
            bucket = cache.get(g)
            if bucket is None:
                bucket = cache[g] = fnv1a_64(g.encode("utf-8")) % self.dim
            counts[bucket] += 1.0
        return counts

    def embed(self, text: str) -> EmbeddingVector:
        _check_texts([text])
        return EmbeddingVector.normalized(self._counts(text))

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        _check_texts(texts)
        return [EmbeddingVector.normalized(self._counts(t)) for t in texts]


class RemoteEmbedder:
    """Client for the common ``{"model", "input"} -> {"data": [{"embedding"}]}`` JSON endpoint."""

    def __init__(self, spec: EmbedderSpec, transport: httpx.BaseTransport | None = None):
        self.spec = spec
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(spec.api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(headers=headers, timeout=spec.timeout_s, transport=transport)

    def close(self):
        self._client.close()

    def _request(self, texts: list[str]) -> list[list[float]]:
        payload = {"input": texts}
        if self.spec.model:
            payload["model"] = self.spec.model
        try:
            resp = self._client.post(self.spec.endpoint, json=payload)
        except httpx.HTTPError as exc:
            raise EmbeddingProviderError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code >= 400:
            raise EmbeddingProviderError(
                f"embedding endpoint returned HTTP {resp.status_code}: {resp.text[:200]}",
                status_code=resp.status_code,
            )
        try:
            data = resp.json()["data"]
            vectors = [item["embedding"] for item in data]
        except (ValueError, KeyError, TypeError) as exc:
            raise EmbeddingSchemaError(f"malformed embeddings response: {exc!r}") from exc
        if len(vectors) != len(texts):
            raise EmbeddingSchemaError(f"sent {len(texts)} texts but received {len(vectors)} embeddings")
        for i, v in enumerate(vectors):
            if len(v) != self.spec.dim:
                raise EmbeddingSchemaError(
                    f"embedding {i} has dimension {len(v)}, configured dim is {self.spec.dim}"
                )
        return vectors

    def _request_with_retry(self, offset: int, texts: list[str]) -> list[EmbeddingVector]:
        attempts = self.spec.max_retries + 1
        for attempt in range(1, attempts + 1):
            try:
                raw = self._request(texts)
                break
            except EmbeddingProviderError as exc:
                # credentials will not fix themselves between retries
                if exc.status_code in (401, 403) or attempt == attempts:
                    raise EmbeddingProviderError(
                        f"batch failed after {attempt} attempt(s): {exc}",
                        status_code=exc.status_code,
                        failed_indices=range(offset, offset + len(texts)),
                    ) from exc
                logger.warning("embedding batch at %d failed (%s), retry %d/%d", offset, exc, attempt, attempts - 1)
                time.sleep(self.spec.backoff_s * attempt)
        try:
            return [EmbeddingVector.normalized(v) for v in raw]
        except InvalidInputError as exc:
            raise EmbeddingSchemaError(f"unusable embedding from provider: {exc}") from exc

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        texts = list(texts)
        _check_texts(texts)
        size = self.spec.batch_size
        batches = [(i, texts[i:i + size]) for i in range(0, len(texts), size)]
        with ThreadPoolExecutor(max_workers=min(self.spec.max_in_flight, max(1, len(batches)))) as pool:
            results = list(pool.map(lambda b: self._request_with_retry(*b), batches))
        return [v for batch in results for v in batch]


def make_embedder(spec: EmbedderSpec, transport: httpx.BaseTransport | None = None):
    if spec.provider == "local-ngram":
        return LocalNgramEmbedder(spec.dim)
    return RemoteEmbedder(spec, transport=transport)


def embed_text(text: str, spec: EmbedderSpec = EmbedderSpec()) -> EmbeddingVector:
    return make_embedder(spec).embed(text)


def embed_batch(texts: Sequence[str], spec: EmbedderSpec = EmbedderSpec()) -> list[EmbeddingVector]:
    return make_embedder(spec).embed_batch(texts)
