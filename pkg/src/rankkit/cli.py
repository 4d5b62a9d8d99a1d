"""Command-line interface.

Subcommands: filter, select, retrieve, distill, rerank, eval.
Exit codes: 0 success, 1 fatal config/IO error, 2 completed with
per-query failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import backends, embedding, engine, metrics, pipeline, types
from .errors import RankkitError

logger = logging.getLogger("rankkit")

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2


def _load_config(args: argparse.Namespace) -> pipeline.PipelineConfig:
    data: dict = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "parallelism", None) is not None:
        data["parallelism"] = args.parallelism
    for name in ("top_k", "selection_k", "quality_threshold", "budget",
                 "window_size", "stride", "mode"):
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    return pipeline.config_from_json(data)


def _make_backend(args: argparse.Namespace) -> backends.Backend:
    kind = args.backend
    if kind in ("identity", "reverse"):
        return backends.make_mock_backend(kind)
    if kind == "oracle":
        if not args.qrels:
            raise RankkitError("--backend oracle requires --qrels")
        qrels = metrics.read_qrels(args.qrels)
        return backends.OracleBackend(qrels.judgments)
    if kind == "http":
        if not args.endpoint or not args.model:
            raise RankkitError("--backend http requires --endpoint and --model")
        return backends.HttpBackend(endpoint=args.endpoint, model=args.model,
                                    timeout=args.timeout)
    raise RankkitError(f"unknown backend {kind!r}")


def cmd_filter(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    query_embs = embedding.read_embeddings(args.query_embeddings)
    doc_embs = embedding.read_embeddings(args.doc_embeddings)
    by_id = {r.id: r for r in doc_embs}
    if args.pairs:
        pairs = []
        with open(args.pairs, encoding="utf-8") as fh:
            q_by_id = {r.id: r for r in query_embs}
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                pairs.append((q_by_id[rec["query_id"]].vector,
                              by_id[rec["doc_id"]].vector,
                              (rec["query_id"], rec["doc_id"])))
    else:
        pairs = []
        for q in query_embs:
            top = embedding.top_k_by_distance(q.vector, doc_embs, 1)[0]
            pairs.append((q.vector, by_id[top].vector, (q.id, top)))
    result = embedding.quality_filter(pairs, cfg.quality_threshold)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": {
            "threshold": cfg.quality_threshold,
            "kept": result.kept_count,
            "dropped_below": result.dropped_below,
            "dropped_zero": result.dropped_zero,
        }}) + "\n")
        for _, _, (qid, did) in result.kept:
            fh.write(json.dumps({"query_id": qid, "doc_id": did}) + "\n")
    logger.info("kept %d pairs (%d below threshold, %d zero vectors)",
                result.kept_count, result.dropped_below, result.dropped_zero)
    return EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    records = embedding.read_embeddings(args.embeddings)
    k = args.k or cfg.selection_k
    if args.algorithm == "greedy":
        result = embedding.greedy_diversity_select(records, k, keep_trace=args.trace)
    elif args.algorithm == "random":
        result = embedding.random_select(records, k, cfg.seed)
    else:
        result = embedding.kmeans_centroid_select(records, k, cfg.seed)
    embedding.write_selection(result, args.out, {
        "algorithm": args.algorithm, "k": k, "seed": cfg.seed,
        "threshold": cfg.quality_threshold,
    })
    return EXIT_OK


def cmd_retrieve(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    query_embs = embedding.read_embeddings(args.query_embeddings)
    doc_embs = embedding.read_embeddings(args.doc_embeddings)
    k = args.k or cfg.top_k
    entries = []
    for q in query_embs:
        ids = embedding.top_k_by_distance(q.vector, doc_embs, k)
        by_id = {r.id: r for r in doc_embs}
        scores = [-embedding.euclidean_dist(q.vector, by_id[d].vector) for d in ids]
        entries.extend(metrics.run_from_candidates(q.id, ids, scores, tag="retrieve"))
    metrics.write_run(entries, args.out)
    return EXIT_OK


def cmd_rerank(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    queries = types.read_queries(args.queries)
    corpus = {d.id: d for d in types.read_documents(args.corpus)}
    run = metrics.read_run(args.run)
    by_query: dict[str, list[metrics.RunEntry]] = {}
    for e in run:
        by_query.setdefault(e.query_id, []).append(e)
    candidate_lists = {
        qid: types.CandidateList(
            qid,
            tuple(e.doc_id for e in sorted(group, key=lambda e: e.rank)),
            tuple(e.score for e in sorted(group, key=lambda e: e.rank)),
        )
        for qid, group in by_query.items()
    }
    backend = _make_backend(args)
    method = "pairwise" if args.pairwise else "listwise"
    results, failed = engine.rerank_many(
        queries, candidate_lists, corpus, backend,
        method=method,
        window=cfg.window,
        mode=cfg.mode,
        parallelism=cfg.parallelism,
    )
    entries = []
    for cl in results:
        entries.extend(metrics.run_from_candidates(
            cl.query_id, cl.doc_ids, cl.first_stage_scores, tag=args.tag))
    metrics.write_run(entries, args.out)
    if failed:
        logger.error("%d queries failed: %s", len(failed), ", ".join(failed))
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_distill(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    queries = types.read_queries(args.queries)
    query_embs = {r.id: r.vector for r in embedding.read_embeddings(args.query_embeddings)}
    corpus_embs = embedding.read_embeddings(args.doc_embeddings)
    corpus = None
    if args.corpus:
        corpus = {d.id: d for d in types.read_documents(args.corpus)}
    backend = _make_backend(args)
    labels, summary = pipeline.distill(queries, query_embs, corpus_embs, backend, cfg,
                                       corpus=corpus)
    if args.budget_filter:
        labels = pipeline.confidence_filter(labels, cfg.budget)
    pipeline.write_labels(labels, args.out, cfg)
    logger.info("emitted %d labels, skipped %d", summary.emitted, summary.skipped)
    return EXIT_PARTIAL if summary.skipped else EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    qrels = metrics.read_qrels(args.qrels, groups_path=args.groups)
    run = metrics.read_run(args.run)
    reports = []
    for item in args.metrics.split(","):
        item = item.strip().lower()
        if item.startswith("ndcg@"):
            reports.append(metrics.ndcg_at_k(qrels, run, int(item[5:]), gain=args.gain))
        elif item == "mrr":
            reports.append(metrics.mrr(qrels, run, rel_threshold=args.rel_threshold))
        elif item.startswith("recall@"):
            reports.append(metrics.recall_at_k(qrels, run, int(item[7:]),
                                               rel_threshold=args.rel_threshold))
        else:
            raise RankkitError(f"unknown metric {item!r}")
    payload = {
        "config": {
            "gain": args.gain,
            "rel_threshold": args.rel_threshold,
            "grouping": args.groups or None,
        },
        "metrics": [r.to_json() for r in reports],
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with pipeline settings")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--parallelism", type=int, default=None)

    backend_args = argparse.ArgumentParser(add_help=False)
    backend_args.add_argument("--backend", default="identity",
                              choices=["identity", "reverse", "oracle", "http"])
    backend_args.add_argument("--qrels", help="qrels file (oracle backend)")
    backend_args.add_argument("--endpoint", help="chat-completions URL (http backend)")
    backend_args.add_argument("--model", help="model name (http backend)")
    backend_args.add_argument("--timeout", type=float, default=120.0)

    p = argparse.ArgumentParser(prog="rankkit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("filter", parents=[common], help="quality-filter query/doc pairs")
    f.add_argument("--query-embeddings", required=True)
    f.add_argument("--doc-embeddings", required=True)
    f.add_argument("--pairs", help="JSONL of {query_id, doc_id}; default pairs each query with its top-1 doc")
    f.add_argument("--quality-threshold", dest="quality_threshold", type=float, default=None)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_filter)

    s = sub.add_parser("select", parents=[common], help="coreset selection")
    s.add_argument("--embeddings", required=True)
    s.add_argument("--algorithm", default="greedy", choices=["greedy", "random", "kmeans"])
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--trace", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_select)

    r = sub.add_parser("retrieve", parents=[common], help="exact top-k retrieval by distance")
    r.add_argument("--query-embeddings", required=True)
    r.add_argument("--doc-embeddings", required=True)
    r.add_argument("--k", type=int, default=None)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_retrieve)

    rr = sub.add_parser("rerank", parents=[common, backend_args], help="rerank a run file")
    rr.add_argument("--run", required=True)
    rr.add_argument("--queries", required=True)
    rr.add_argument("--corpus", required=True)
    group = rr.add_mutually_exclusive_group()
    group.add_argument("--listwise", action="store_true", default=True)
    group.add_argument("--pairwise", action="store_true", default=False)
    rr.add_argument("--window-size", dest="window_size", type=int, default=None)
    rr.add_argument("--stride", type=int, default=None)
    rr.add_argument("--mode", choices=["text", "multimodal"], default=None)
    rr.add_argument("--tag", default="rankkit")
    rr.add_argument("--out", required=True)
    rr.set_defaults(func=cmd_rerank)

    d = sub.add_parser("distill", parents=[common, backend_args], help="teacher labeling")
    d.add_argument("--queries", required=True)
    d.add_argument("--query-embeddings", required=True)
    d.add_argument("--doc-embeddings", required=True)
    d.add_argument("--corpus", help="optional document corpus JSONL")
    d.add_argument("--top-k", dest="top_k", type=int, default=None)
    d.add_argument("--mode", choices=["text", "multimodal"], default=None)
    d.add_argument("--budget", type=int, default=None)
    d.add_argument("--budget-filter", action="store_true",
                   help="apply confidence filtering to the budget before writing")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_distill)

    e = sub.add_parser("eval", parents=[common], help="evaluate a run against qrels")
    e.add_argument("--run", required=True)
    e.add_argument("--qrels", required=True)
    e.add_argument("--groups", help="JSON sidecar mapping query id to group key")
    e.add_argument("--metrics", default="ndcg@10,mrr,recall@5")
    e.add_argument("--gain", choices=["linear", "exponential"], default="linear")
    e.add_argument("--rel-threshold", dest="rel_threshold", type=int, default=1)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (RankkitError, OSError, json.JSONDecodeError) as exc:
        logger.error("%s", exc)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
