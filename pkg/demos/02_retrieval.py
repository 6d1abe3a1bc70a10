# %% [markdown]
# # Exact cosine retrieval over hashed 3-gram embeddings
#
# The local embedder needs no network: it hashes character 3-grams into a
# fixed number of buckets and L2-normalises the counts. Retrieval is an
# exact scan, which is plenty for a book-sized corpus.

# %%
import tempfile
from pathlib import Path

import numpy as np

from hlsrag.corpus import ChunkingConfig, chunk_corpus, ingest_corpus
from hlsrag.embedding import EmbedderSpec, embed_text
from hlsrag.index import build_index, load_index, save_index, top_k
from hlsrag.prompt import prepare_query

REPO = Path(__file__).resolve().parent.parent
E2E = REPO / "tests" / "data" / "e2e"

# %%
a = embed_text("#pragma HLS pipeline II=1")
b = embed_text("#pragma HLS PIPELINE II=2")
c = embed_text("the quick brown fox")
print("pipeline vs pipeline:", round(a.cosine(b), 3))
print("pipeline vs fox:     ", round(a.cosine(c), 3))

# %% [markdown]
# Build an index over the fixture corpus and query it with the loop nest of
# a matrix multiply (declarations stripped by body extraction).

# %%
chunks = chunk_corpus(ingest_corpus(E2E / "corpus"), ChunkingConfig(400, 100))
index = build_index(chunks, EmbedderSpec())
query = prepare_query((E2E / "query_matmul.c").read_text())
print(query.body)

for hit in top_k(index, embed_text(query.body), k=4):
    print(f"{hit.rank}. {hit.score:.3f}  {hit.chunk_id}")

# %% [markdown]
# The on-disk format is a small binary file with a CRC32 trailer, and a
# reload gives back exactly the same float32 matrix.

# %%
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "corpus.idx"
    save_index(index, path)
    again = load_index(path)
    print(path.stat().st_size, "bytes;", "identical:", np.array_equal(again.matrix, index.matrix))
