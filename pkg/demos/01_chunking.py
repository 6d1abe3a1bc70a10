# %% [markdown]
# # Chunking a corpus into overlapping windows
#
# Documents are cut into fixed character windows. With the defaults
# (1000 characters, 200 overlap) consecutive windows share 200 characters,
# so a pragma split at one boundary usually appears whole in the next window.

# %%
from pathlib import Path

from hlsrag.corpus import (
    ChunkingConfig,
    Document,
    chunk_document,
    chunk_spans,
    expected_chunk_count,
    ingest_corpus,
    reconstruct_text,
    verify_pragma_integrity,
)

REPO = Path(__file__).resolve().parent.parent
CORPUS = REPO / "tests" / "data" / "e2e" / "corpus"

# %% [markdown]
# The window arithmetic first. An 1800-character text gives two windows.

# %%
cfg = ChunkingConfig()
print(cfg, "step", cfg.step)
print(chunk_spans(1800, cfg))
for length in (1, 1000, 1001, 1800, 1801, 5000):
    print(f"L={length:5d} -> {expected_chunk_count(length, cfg)} chunks")

# %% [markdown]
# Chunking a real (small) corpus. `reconstruct_text` stitches the windows
# back together, which is a handy sanity check on the overlap bookkeeping.

# %%
docs = ingest_corpus(CORPUS)
small = ChunkingConfig(400, 100)
for doc in docs:
    chunks = chunk_document(doc, small)
    assert reconstruct_text(chunks) == doc.text
    print(f"{doc.doc_id:28s} {doc.kind:6s} {len(doc.text):5d} chars -> {len(chunks)} chunks")

# %% [markdown]
# Pragma lines that straddle a boundary are reported, never "fixed": the
# windows stay exactly where the arithmetic puts them.

# %%
src = "void f() {\n" + "    x++;\n" * 10 + "#pragma HLS pipeline II=1\n" + "}\n"
doc = Document("demo.c", src, "code")
for w in verify_pragma_integrity(chunk_document(doc, ChunkingConfig(100, 10))):
    print(w)
