import struct
import threading
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hlsrag.corpus import Chunk
from hlsrag.embedding import EmbedderSpec, EmbeddingVector, embed_text
from hlsrag.errors import (
    DimensionMismatchError,
    DuplicateChunkError,
    EmptyIndexError,
    IndexChecksumError,
    IndexFormatError,
    IndexTruncatedError,
    IndexVersionError,
    InvalidInputError,
)
from hlsrag.index import (
    VectorIndex,
    build_index,
    decode_index,
    encode_index,
    load_index,
    read_sidecar,
    save_index,
    top_k,
)

from oracles import brute_force_top_k


def random_index(rng, n, dim, dupes=0):
    m = rng.standard_normal((n, dim))
    for _ in range(dupes):
        i, j = rng.integers(n, size=2)
        m[j] = m[i]
    m /= np.linalg.norm(m, axis=1, keepdims=True)
    return VectorIndex(dim, [f"c{i}" for i in range(n)], m.astype(np.float32))


def unit(rng, dim):
    return EmbeddingVector.normalized(rng.standard_normal(dim))


def chunk(i, text):
    return Chunk(f"d.c#{i}", "d.c", 0, len(text), text)


def test_single_entry():
    idx = build_index([chunk(0, "for (i = 0; i < n; i++)")])
    hits = top_k(idx, embed_text("anything at all"), 4)
    assert [(h.chunk_id, h.rank) for h in hits] == [("d.c#0", 1)]


def test_k_larger_than_index_returns_all_sorted():
    rng = np.random.default_rng(0)
    idx = random_index(rng, 5, 8)
    q = unit(rng, 8)
    hits = top_k(idx, q, 50)
    assert [h.chunk_id for h in hits] == [f"c{i}" for i in brute_force_top_k(idx.matrix, q.values, 50)]
    assert [h.rank for h in hits] == [1, 2, 3, 4, 5]
    scores = [h.score for h in hits]
    assert scores == sorted(scores, reverse=True)


def test_fifty_entries_match_brute_force():
    rng = np.random.default_rng(42)
    idx = random_index(rng, 50, 256)
    q = unit(rng, 256)
    assert [h.chunk_id for h in top_k(idx, q)] == [f"c{i}" for i in brute_force_top_k(idx.matrix, q.values, 4)]


@given(st.integers(1, 300), st.integers(1, 12), st.integers(0, 20), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_oracle_equivalence_with_ties(n, k, dupes, seed):
    rng = np.random.default_rng(seed)
    idx = random_index(rng, n, 16, dupes=dupes)
    # half the time query with a stored vector so duplicates tie at the top
    q = EmbeddingVector(idx.matrix[rng.integers(n)]) if seed % 2 else unit(rng, 16)
    got = [int(h.chunk_id[1:]) for h in top_k(idx, q, k)]
    assert got == brute_force_top_k(idx.matrix, q.values, k)


def test_stored_vector_is_its_own_nearest():
    rng = np.random.default_rng(7)
    idx = random_index(rng, 100, 32)
    for i in range(100):
        hit = top_k(idx, idx.vector(i), 1)[0]
        assert hit.chunk_id == f"c{i}"
        assert abs(hit.score - 1.0) <= 1e-6


def test_duplicates_return_in_insertion_order():
    v = np.zeros((4, 3), np.float32)
    v[:, 0] = 1.0
    idx = VectorIndex(3, ["b", "a", "d", "c"], v)
    for _ in range(5):
        assert [h.chunk_id for h in top_k(idx, EmbeddingVector([1, 0, 0]), 4)] == ["b", "a", "d", "c"]


def test_errors():
    rng = np.random.default_rng(1)
    idx = random_index(rng, 3, 8)
    with pytest.raises(DimensionMismatchError):
        top_k(idx, unit(rng, 9))
    with pytest.raises(InvalidInputError):
        top_k(idx, unit(rng, 8), 0)
    with pytest.raises(EmptyIndexError):
        top_k(VectorIndex(8, [], np.zeros((0, 8), np.float32)), unit(rng, 8))
    with pytest.raises(DuplicateChunkError):
        build_index([chunk(0, "abc"), chunk(0, "def")])
    with pytest.raises(InvalidInputError):
        build_index([])


def test_build_index_uses_embedder_in_order():
    chunks = [chunk(i, t) for i, t in enumerate(["alpha", "beta", "gamma"])]
    idx = build_index(chunks, EmbedderSpec(dim=64))
    assert idx.chunk_ids == ("d.c#0", "d.c#1", "d.c#2")
    for i, c in enumerate(chunks):
        assert idx.vector(i) == embed_text(c.text, EmbedderSpec(dim=64))


def test_concurrent_queries_agree():
    rng = np.random.default_rng(3)
    idx = random_index(rng, 500, 64)
    queries = [unit(rng, 64) for _ in range(20)]
    expected = [top_k(idx, q) for q in queries]
    results = [None] * 20

    def worker(i):
        results[i] = top_k(idx, queries[i])

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(20)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == expected


# --- persistence -----------------------------------------------------------

def test_file_layout_by_hand(tmp_path):
    idx = VectorIndex(2, ["ab"], np.array([[0.6, 0.8]], np.float32))
    save_index(idx, tmp_path / "i.idx")
    data = (tmp_path / "i.idx").read_bytes()
    body = b"RLADIDX1" + struct.pack("<III", 1, 2, 1) + struct.pack("<I", 2) + b"ab" + struct.pack("<2f", 0.6, 0.8)
    assert data == body + struct.pack("<I", zlib.crc32(body))
    side = read_sidecar(tmp_path / "i.idx")
    assert side["count"] == 1 and side["dim"] == 2 and side["entries"] == [{"chunk_id": "ab"}]


def test_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    idx = random_index(rng, 30, 17)
    save_index(idx, tmp_path / "x.idx")
    back = load_index(tmp_path / "x.idx")
    assert back == idx and back.matrix.tobytes() == idx.matrix.tobytes()


def test_build_twice_byte_identical(tmp_path):
    chunks = [chunk(i, f"#pragma HLS unroll factor={i}\nfor (j...)") for i in range(10)]
    save_index(build_index(chunks), tmp_path / "a.idx")
    save_index(build_index(chunks), tmp_path / "b.idx")
    assert (tmp_path / "a.idx").read_bytes() == (tmp_path / "b.idx").read_bytes()


def test_unicode_ids_roundtrip():
    idx = VectorIndex(2, ["fir/滤波器.c#0"], np.array([[1, 0]], np.float32))
    assert decode_index(encode_index(idx)) == idx


@pytest.fixture
def blob():
    return encode_index(random_index(np.random.default_rng(9), 4, 8))


def test_wrong_magic(blob):
    with pytest.raises(IndexFormatError):
        decode_index(b"NOTANIDX" + blob[8:])


def test_wrong_version(blob):
    bad = blob[:8] + struct.pack("<I", 2) + blob[12:]
    with pytest.raises(IndexVersionError):
        decode_index(bad)


@pytest.mark.parametrize("cut", [10, 20, 30, 60, -5, -1])
def test_truncated(blob, cut):
    with pytest.raises(IndexTruncatedError):
        decode_index(blob[:cut])


def test_flipped_byte_fails_checksum(blob):
    bad = bytearray(blob)
    bad[40] ^= 0x01  # inside the first vector
    with pytest.raises(IndexChecksumError):
        decode_index(bytes(bad))


def test_trailing_garbage(blob):
    with pytest.raises(IndexFormatError):
        decode_index(blob + b"\x00")
