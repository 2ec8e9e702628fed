"""Command line entry point: ``icdrr <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ServiceConfig, load_config
from .corpus import load_table, to_csv
from .errors import ConfigError, IcdrrError, RerankFailed
from .llm import ChatClient
from .pipeline import Reranker, predict_retrieve_rank
from .retrieval import Scorer, build_index, load_index, save_index
from .retrieval.maxsim import DEFAULT_DIM, DEFAULT_SEED

log = logging.getLogger("icdrr")


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="candidates retrieved (default 15)")
    p.add_argument("--scorer", choices=[s.value for s in Scorer])
    p.add_argument("--reranker", choices=[r.value for r in Reranker])
    p.add_argument("--config", help="config file (default: $ICDRR_CONFIG)")
    p.add_argument("--llm-base-url", help="chat endpoint base URL (default: $ICDRR_LLM_BASE_URL)")
    p.add_argument("--llm-model")
    p.add_argument("--transcript", help="append every chat exchange to this JSON-lines file")


def _settings(args) -> ServiceConfig:
    overrides = {
        "k": args.k,
        "scorer": args.scorer,
        "reranker": args.reranker,
        "llm_base_url": args.llm_base_url,
        "llm_model": args.llm_model,
        "transcript": args.transcript,
    }
    for name in ("corpus", "index", "bind", "seed", "max_inflight_rerank"):
        if hasattr(args, name):
            overrides[name] = getattr(args, name)
    try:
        return load_config(args.config, overrides=overrides)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("flags", str(exc)) from None


def _client(settings: ServiceConfig) -> ChatClient:
    cfg = settings.client_config()
    cfg.chat_url  # fail before any work if the endpoint is missing
    return ChatClient(cfg)


def _load_or_build(index_path, table):
    if index_path:
        return load_index(index_path)
    log.info("no --index given; building an in-memory index")
    return build_index(table)


def cmd_ingest(args) -> int:
    table = load_table(args.input, args.format)
    if args.out:
        Path(args.out).write_bytes(to_csv(table))
    print(json.dumps({
        "entries": len(table),
        "duplicates": table.duplicate_count,
        "malformed": [str(m) for m in table.malformed],
        "billable": sum(1 for e in table if e.billable),
        "source_digest": table.source_digest,
    }, indent=2))
    return 0


def cmd_index(args) -> int:
    table = load_table(args.input, args.format)
    index = build_index(table, dim=args.dim, seed=args.seed)
    save_index(index, args.out)
    print(json.dumps({"out": str(args.out), "docs": index.doc_count, "terms": len(index.vocabulary)}))
    return 0


def cmd_query(args) -> int:
    settings = _settings(args)
    table = load_table(args.corpus)
    index = load_index(args.index)
    client = _client(settings) if settings.pipeline.reranker is Reranker.LLM else None
    try:
        pred = predict_retrieve_rank(args.text, index, table, settings.pipeline, client)
    except RerankFailed as exc:
        print(json.dumps({"error": str(exc), "candidates": [c.to_dict() for c in exc.candidates]}, indent=2))
        return 1
    finally:
        if client:
            client.close()
    print(json.dumps(pred.to_dict(), indent=2, ensure_ascii=False))
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import System, run_experiment
    from .report import format_accuracy_table, render_figures

    settings = _settings(args)
    systems = [System.parse(s) for s in args.systems.split(",") if s.strip()]
    table = load_table(args.corpus)
    index = _load_or_build(args.index, table)
    needs_llm = System.VANILLA in systems or settings.pipeline.reranker is Reranker.LLM
    client = _client(settings) if needs_llm else None
    try:
        records, summary = run_experiment(
            table, index, settings.pipeline, systems,
            n=args.n, seed=args.seed, client=client, out=Path(args.out), workers=args.workers,
        )
    finally:
        if client:
            client.close()
    print(format_accuracy_table(summary))
    print(f"results written to {args.out}")
    if args.figures:
        for path in render_figures(summary, records, args.figures):
            print(f"figure written to {path}")
    return 0


def cmd_compare(args) -> int:
    from .evaluation import compare_records, read_results_csv, summarize
    from .report import format_accuracy_table, format_comparison_table, render_figures

    records = read_results_csv(args.results)
    summary = summarize(records)
    print(format_accuracy_table(summary))
    rows = compare_records(records)
    if args.only_disagreements:
        rows = [r for r in rows if r.retrieve_rank != r.vanilla]
    if rows:
        print()
        print(format_comparison_table(rows, width=args.width))
    if args.figures:
        for path in render_figures(summary, records, args.figures):
            print(f"figure written to {path}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    settings = _settings(args)
    serve(settings)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icdrr", description="Retrieve-rank ICD-10-CM code prediction")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and validate a code table")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["auto", "csv", "order"], default="auto")
    p.add_argument("--out", help="write the normalized table as CSV")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="build and save a retrieval index")
    p.add_argument("--input", required=True, help="corpus file (CSV or order file, optionally gzipped)")
    p.add_argument("--format", choices=["auto", "csv", "order"], default="auto")
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=DEFAULT_DIM, help="MaxSim embedding dimension")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="embedding seed")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="predict a code for one query; prints JSON")
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--text", required=True)
    _pipeline_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evaluate", help="run the sampled experiment and log results to CSV")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--systems", default="rr", help="comma list of rr, vanilla")
    p.add_argument("--out", default="results.csv")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--figures", help="directory for accuracy figures")
    _pipeline_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="summarize a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--figures", help="directory for accuracy figures")
    p.add_argument("--only-disagreements", action="store_true")
    p.add_argument("--width", type=int, default=60, help="truncate descriptions to this many characters")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--bind", help="host:port (default 127.0.0.1:8080)")
    p.add_argument("--corpus")
    p.add_argument("--index")
    p.add_argument("--max-inflight-rerank", type=int)
    _pipeline_flags(p)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (IcdrrError, OSError) as exc:
        print(f"icdrr: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
