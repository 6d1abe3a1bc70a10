"""Retrieval-augmented pragma optimization for HLS C/C++ code."""

from .corpus import Chunk, ChunkingConfig, Document, chunk_corpus, chunk_document, ingest_corpus, verify_pragma_integrity
from .embedding import EmbedderSpec, EmbeddingVector, embed_batch, embed_text
from .evaluator import (
    EvalRecord,
    SynthesisReport,
    ToolchainAdapter,
    parse_report,
    pass_at_k,
    render_tables,
    speedup,
    synthesize,
)
from .generator import CandidateCode, GenerationConfig, extract_code, generate
from .index import RetrievalHit, VectorIndex, build_index, load_index, save_index, top_k
from .prompt import PromptSpec, QueryCode, build_prompt, extract_main_body, insert_annotations, prepare_query

__version__ = "0.1.0"
