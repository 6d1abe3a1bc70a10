"""End-to-end orchestration: ingest, retrieve, optimize, evaluate, report.

All settings come from one JSON file (see ``configs/pipeline.example.json``);
relative paths in it are resolved against the file's directory. The sha256
of the effective settings is stamped into every artifact so results can be
traced back to the configuration that produced them.
"""

from __future__ import annotations

import copy
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from . import corpus as corpus_mod
from . import evaluator as ev
from . import generator as gen
from . import index as idx
from . import prompt as pr
from ._io import atomic_write_text, dump_json
from .embedding import EmbedderSpec, make_embedder
from .errors import ConfigError, ConfigHashMismatchError, HlsRagError

logger = logging.getLogger(__name__)

DEFAULTS: dict[str, Any] = {
    "corpus": {"root": "corpus", "include": list(corpus_mod.DEFAULT_INCLUDE), "chunk_size": 1000, "overlap": 200},
    "embedder": {"provider": "local-ngram", "dim": 256},
    "index_path": "build/corpus.idx",
    "k": 4,
    "prompt": {"annotate": "off", "body_extraction": True, "template_path": None,
               "max_prompt_chars": None, "nli": pr.DEFAULT_NLI},
    "generation": {"provider": "chat"},
    "adapter": {"command_template": "mock {src}", "report_locator": "report.json", "parser": "mock"},
    "benchmark": None,
    "output_dir": "out",
}
_PATH_KEYS = [("corpus", "root"), ("index_path",), ("prompt", "template_path"),
              ("generation", "mock_script"), ("adapter", "mock_script"), ("benchmark",), ("output_dir",)]


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _known(cls, d: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} settings: {sorted(unknown)}")
    return d


@dataclass
class PipelineConfig:
    raw: dict
    base_dir: Path

    @classmethod
    def load(cls, path: str | os.PathLike | None, overrides: dict | None = None) -> "PipelineConfig":
        data: dict = {}
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file {str(path)!r} not found")
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
            base = path.resolve().parent
        cfg = cls(_merge(_merge(DEFAULTS, data), overrides or {}), base)
        cfg.validate()
        return cfg

    def force_mock(self) -> None:
        """Swap every external provider for its offline stand-in."""
        self.raw["embedder"] = {"provider": "local-ngram", "dim": self.raw["embedder"].get("dim", 256)}
        self.raw["generation"]["provider"] = "mock"
        self.raw["adapter"]["parser"] = "mock"
        self.validate()
        if not self.raw["generation"].get("mock_script"):
            raise ConfigError("--mock needs generation.mock_script in the config")
        if not self.raw["adapter"].get("mock_script"):
            raise ConfigError("--mock needs adapter.mock_script in the config")

    def path(self, *keys: str) -> Path | None:
        node: Any = self.raw
        for k in keys:
            node = node.get(k) if isinstance(node, dict) else None
        if node is None:
            return None
        p = Path(node)
        return p if p.is_absolute() else (self.base_dir / p)

    def validate(self) -> None:
        if int(self.raw["k"]) < 1:
            raise ConfigError(f"k must be >= 1, got {self.raw['k']}")
        self.chunking, self.embedder, self.generation, self.adapter  # constructors validate
        pr.parse_annotate_option(self.raw["prompt"].get("annotate"))
        for keys in _PATH_KEYS:
            p = self.path(*keys)
            # inputs must exist; outputs are created on demand
            if p is not None and keys[0] not in ("index_path", "output_dir") and not p.exists():
                raise ConfigError(f"{'.'.join(keys)} -> {str(p)!r} does not exist")

    @property
    def hash(self) -> str:
        return gen.config_hash(self.raw)

    @property
    def chunking(self) -> corpus_mod.ChunkingConfig:
        c = self.raw["corpus"]
        return corpus_mod.ChunkingConfig(int(c["chunk_size"]), int(c["overlap"]))

    @property
    def embedder(self) -> EmbedderSpec:
        return EmbedderSpec(**_known(EmbedderSpec, self.raw["embedder"]))

    @property
    def generation(self) -> gen.GenerationConfig:
        g = dict(_known(gen.GenerationConfig, self.raw["generation"]))
        if g.get("mock_script"):
            g["mock_script"] = str(self.path("generation", "mock_script"))
        return gen.GenerationConfig(**g)

    @property
    def adapter(self) -> ev.ToolchainAdapter:
        a = dict(_known(ev.ToolchainAdapter, self.raw["adapter"]))
        if a.get("mock_script"):
            a["mock_script"] = str(self.path("adapter", "mock_script"))
        return ev.ToolchainAdapter(**a)

    @property
    def output_dir(self) -> Path:
        return self.path("output_dir")

    @property
    def index_path(self) -> Path:
        return self.path("index_path")

    @property
    def manifest_path(self) -> Path:
        return self.index_path.with_name(self.index_path.name + ".manifest.jsonl")


def cmd_ingest(cfg: PipelineConfig) -> dict:
    """Corpus -> chunks -> pragma check -> index file, chunk manifest and sidecar."""
    c = cfg.raw["corpus"]
    docs = corpus_mod.ingest_corpus(cfg.path("corpus", "root"), c["include"])
    chunking = cfg.chunking
    chunks: list[corpus_mod.Chunk] = []
    warnings: list[str] = []
    for doc in docs:
        doc_chunks = corpus_mod.chunk_document(doc, chunking)
        warnings.extend(str(w) for w in corpus_mod.verify_pragma_integrity(doc_chunks))
        chunks.extend(doc_chunks)
    for w in warnings:
        logger.warning(w)
    index = idx.build_index(chunks, cfg.embedder)
    meta = [dict(ch.to_record(), config_hash=cfg.hash) for ch in chunks]
    idx.save_index(index, cfg.index_path, meta)
    corpus_mod.write_manifest(chunks, cfg.manifest_path)
    return {"documents": len(docs), "chunks": len(chunks), "warnings": warnings,
            "index": str(cfg.index_path), "config_hash": cfg.hash}


def _load_index(cfg: PipelineConfig) -> idx.VectorIndex:
    if not cfg.index_path.is_file():
        raise ConfigError(f"no index at {str(cfg.index_path)!r}; run `hlsrag ingest` first")
    return idx.load_index(cfg.index_path)


def _chunk_texts(cfg: PipelineConfig, chunk_ids) -> dict[str, str]:
    root = cfg.path("corpus", "root")
    records = {r["chunk_id"]: r for r in corpus_mod.read_manifest(cfg.manifest_path)}
    cache: dict[str, str] = {}
    out = {}
    for cid in chunk_ids:
        r = records[cid]
        if "text" in r:
            out[cid] = r["text"]
            continue
        if r["doc_id"] not in cache:
            cache[r["doc_id"]] = (root / r["doc_id"]).read_bytes().decode("utf-8")
        out[cid] = cache[r["doc_id"]][r["start"]:r["end"]]
    return out


def _query_code(cfg: PipelineConfig, source: str) -> pr.QueryCode:
    p = cfg.raw["prompt"]
    mode, lines = pr.parse_annotate_option(p.get("annotate"))
    return pr.prepare_query(source, bool(p.get("body_extraction", True)), mode, lines)


def retrieve(cfg: PipelineConfig, query: pr.QueryCode, k: int | None = None) -> list[dict]:
    index = _load_index(cfg)
    embedder = make_embedder(cfg.embedder)
    # retrieval uses the unannotated body so markers don't skew similarity
    text = query.extraction.body if query.extraction is not None else query.body
    hits = idx.top_k(index, embedder.embed(text), k or int(cfg.raw["k"]))
    texts = _chunk_texts(cfg, [h.chunk_id for h in hits])
    return [{"chunk_id": h.chunk_id, "score": h.score, "rank": h.rank, "text": texts[h.chunk_id]} for h in hits]


def cmd_retrieve(cfg: PipelineConfig, query_file: str | os.PathLike) -> list[dict]:
    source = Path(query_file).read_text(encoding="utf-8")
    return retrieve(cfg, _query_code(cfg, source))


def run_label(cfg: PipelineConfig, zero_shot: bool) -> str:
    if zero_shot:
        return "zero-shot"
    mode, _ = pr.parse_annotate_option(cfg.raw["prompt"].get("annotate"))
    return "rag+annotations" if mode else "rag"


def cmd_optimize(cfg: PipelineConfig, query_file: str | os.PathLike, zero_shot: bool = False,
                 client=None) -> dict:
    """Build the prompt for ``query_file`` and write k candidates plus the audit ledger."""
    source = Path(query_file).read_text(encoding="utf-8")
    query = _query_code(cfg, source)
    hits = [] if zero_shot else retrieve(cfg, query)
    p = cfg.raw["prompt"]
    template = pr.load_template(cfg.path("prompt", "template_path")) if p.get("template_path") else pr.DEFAULT_TEMPLATE
    spec = pr.PromptSpec(
        nli=p.get("nli") or pr.DEFAULT_NLI,
        retrieved=tuple((h["chunk_id"], h["text"]) for h in hits),
        query=query, k=int(cfg.raw["k"]), template=template,
        max_prompt_chars=p.get("max_prompt_chars"),
    )
    prompt_text, spec = pr.build_prompt_fitting(spec)
    gcfg = cfg.generation
    attempts = gen.generate(prompt_text, gcfg, client=client)
    candidates = gen.to_candidates(attempts)

    out = cfg.output_dir
    cand_dir = out / "candidates"
    entries = []
    for c in candidates:
        name = f"attempt_{c.attempt_index}.c"
        if c.code is not None:
            atomic_write_text(cand_dir / name, c.code if c.code.endswith("\n") else c.code + "\n")
        elif (cand_dir / name).exists():
            (cand_dir / name).unlink()
        entries.append({"attempt_index": c.attempt_index, "file": name if c.code is not None else None,
                        "extraction_method": c.extraction_method, "failed": c.failed})
    manifest = {
        "config_hash": cfg.hash,
        "model": gcfg.model,
        "label": run_label(cfg, zero_shot),
        "zero_shot": zero_shot,
        "k": gcfg.attempts,
        "query": {"extraction": query.extraction.status if query.extraction else None,
                  "annotation_positions": list(query.annotation_positions)},
        "references": [{"chunk_id": h["chunk_id"], "rank": h["rank"], "score": h["score"]}
                       for h in hits if h["chunk_id"] in {cid for cid, _ in spec.retrieved}],
        "attempts": entries,
    }
    atomic_write_text(cand_dir / "manifest.json", dump_json(manifest))
    atomic_write_text(out / "prompt.txt", prompt_text)
    gen.append_ledger(out / "ledger.jsonl", prompt_text, candidates, attempts, gcfg, cfg.hash)
    return manifest


def load_candidates(cand_dir: Path) -> tuple[dict, list[gen.CandidateCode]]:
    mpath = cand_dir / "manifest.json"
    if not mpath.is_file():
        raise ConfigError(f"{str(cand_dir)!r} has no manifest.json; run `hlsrag optimize` first")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    cands = []
    for e in manifest["attempts"]:
        code = (cand_dir / e["file"]).read_text(encoding="utf-8") if e.get("file") else None
        cands.append(gen.CandidateCode(e["attempt_index"], "", code, e["extraction_method"], e.get("failed", False)))
    return manifest, cands


def cmd_evaluate(cfg: PipelineConfig, benchmark: str | os.PathLike | None = None,
                 candidates: str | os.PathLike | None = None, force: bool = False) -> ev.EvalRecord:
    out = cfg.output_dir
    bench_dir = Path(benchmark) if benchmark else cfg.path("benchmark")
    if bench_dir is None:
        raise ConfigError("no benchmark bundle given (config `benchmark` or --benchmark)")
    bundle = ev.BenchmarkBundle.load(bench_dir)
    cand_dir = Path(candidates) if candidates else out / "candidates"
    manifest, cands = load_candidates(cand_dir)
    if manifest["config_hash"] != cfg.hash and not force:
        raise ConfigHashMismatchError(
            f"candidates were produced under config {manifest['config_hash'][:12]}, current config is "
            f"{cfg.hash[:12]}; pass --force to evaluate anyway"
        )
    adapter = cfg.adapter
    mock = ev.MockToolchain.from_file(adapter.mock_script) if adapter.parser == "mock" else None
    work = out / "work"

    if bundle.baseline_report:
        baseline = ev.parse_report(bundle.root / bundle.baseline_report,
                                   "vivado-xml" if bundle.baseline_report.endswith(".xml") else "normalized-json")
    else:
        base_cand = gen.CandidateCode(0, "", bundle.baseline_source(), "fenced")
        baseline = ev.synthesize(base_cand, adapter, bundle, work / "baseline", mock, log_root=out)

    reports = [ev.synthesize(c, adapter, bundle, work / f"attempt_{c.attempt_index}", mock, log_root=out)
               for c in cands]
    record = ev.evaluate_reports(reports, bundle.name, baseline, manifest.get("model", ""), manifest.get("label", ""))
    results = {"config_hash": manifest["config_hash"], "records": [record.to_dict()]}
    text, tables = ev.render_tables([record])
    results["tables"] = tables
    atomic_write_text(out / "results.json", dump_json(results))
    atomic_write_text(out / "tables.txt", text)
    return record


def cmd_report(results_files: list[str | os.PathLike], out_dir: str | os.PathLike | None = None) -> str:
    """Merge several results.json files into one pair of tables."""
    records = []
    for f in results_files:
        data = json.loads(Path(f).read_text(encoding="utf-8"))
        records.extend(ev.EvalRecord.from_dict(r) for r in data["records"])
    if not records:
        raise HlsRagError("no evaluation records to report")
    text, tables = ev.render_tables(records)
    if out_dir is not None:
        atomic_write_text(Path(out_dir) / "tables.txt", text)
        atomic_write_text(Path(out_dir) / "tables.json", dump_json(tables))
    return text
