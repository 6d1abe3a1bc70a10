"""Command line entry point: ``hlsrag {ingest,retrieve,optimize,evaluate,report}``.

Exit status is 0 whenever a command ran to completion, even if no candidate
synthesized; 2 signals a configuration or infrastructure problem.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .errors import HlsRagError

logger = logging.getLogger("hlsrag")

EXIT_OK = 0
EXIT_INFRA = 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hlsrag", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="pipeline JSON config (relative paths resolve against its directory)")
    p.add_argument("--verbose", "-v", action="store_true")
    p.add_argument("--mock", action="store_true", help="use the local embedder, scripted generator and mock synthesis")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="chunk the corpus and build the vector index")

    def prompt_flags(sp):
        sp.add_argument("query_file")
        sp.add_argument("--annotate", help="off | auto | manual:<line,line,...>")
        sp.add_argument("--no-body-extraction", action="store_true")
        sp.add_argument("--k", type=int, help="number of references to retrieve")

    prompt_flags(sub.add_parser("retrieve", help="print the top-k chunks for a query file as JSON"))
    opt = sub.add_parser("optimize", help="generate k candidate programs for a query file")
    prompt_flags(opt)
    opt.add_argument("--zero-shot", action="store_true", help="skip retrieval (no reference section)")

    e = sub.add_parser("evaluate", help="synthesize candidates and write results.json + tables.txt")
    e.add_argument("--benchmark")
    e.add_argument("--candidates")
    e.add_argument("--adapter", choices=["config", "mock"], default="config",
                   help="'mock' replaces the configured toolchain with the scripted mock")
    e.add_argument("--force", action="store_true", help="evaluate candidates made under another config")

    r = sub.add_parser("report", help="merge results.json files into one set of tables")
    r.add_argument("results", nargs="+")
    r.add_argument("--out")
    return p


def _overrides(args) -> dict:
    over: dict = {"prompt": {}}
    if getattr(args, "annotate", None) is not None:
        over["prompt"]["annotate"] = args.annotate
    if getattr(args, "no_body_extraction", False):
        over["prompt"]["body_extraction"] = False
    if getattr(args, "k", None) is not None:
        over["k"] = args.k
    if getattr(args, "adapter", None) == "mock":
        over["adapter"] = {"parser": "mock"}
    return over


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "report":
            print(pipeline.cmd_report(args.results, args.out), end="")
            return EXIT_OK
        cfg = pipeline.PipelineConfig.load(args.config, _overrides(args))
        if args.mock:
            cfg.force_mock()
        if args.command == "ingest":
            summary = pipeline.cmd_ingest(cfg)
            print(f"{summary['documents']} documents, {summary['chunks']} chunks, "
                  f"{len(summary['warnings'])} pragma warnings -> {summary['index']}")
            for w in summary["warnings"]:
                print(f"warning: {w}")
        elif args.command == "retrieve":
            print(json.dumps(pipeline.cmd_retrieve(cfg, args.query_file), indent=2, ensure_ascii=False))
        elif args.command == "optimize":
            m = pipeline.cmd_optimize(cfg, args.query_file, zero_shot=args.zero_shot)
            ok = sum(1 for a in m["attempts"] if a["file"])
            print(f"{ok}/{m['k']} attempts produced code ({m['label']}, "
                  f"{len(m['references'])} references) -> {cfg.output_dir / 'candidates'}")
        elif args.command == "evaluate":
            rec = pipeline.cmd_evaluate(cfg, args.benchmark, args.candidates, force=args.force)
            print((cfg.output_dir / "tables.txt").read_text(encoding="utf-8"), end="")
            logger.info("pass@%d = %.2f", rec.k, rec.pass_at_k)
    except HlsRagError as exc:
        logger.error("%s", exc)
        return EXIT_INFRA
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_INFRA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
