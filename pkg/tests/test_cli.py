import json

import numpy as np
import pytest

from rankkit import cli
from rankkit.embedding import EmbeddingRecord, write_embeddings
from rankkit.metrics import read_run, run_from_candidates, write_run
from rankkit.types import Document, Query, write_documents


@pytest.fixture
def workspace(tmp_path):
    """Synthetic corpus of 3 queries x 10 candidates with distinct grades."""
    rng = np.random.default_rng(99)
    n_docs, n_queries = 10, 3
    docs = [Document(id=f"d{i}", text=f"passage about topic {i}") for i in range(1, n_docs + 1)]
    write_documents(docs, str(tmp_path / "corpus.jsonl"))

    queries = [Query(id=f"q{i}", text=f"question {i}") for i in range(1, n_queries + 1)]
    with open(tmp_path / "queries.jsonl", "w") as fh:
        for q in queries:
            fh.write(json.dumps({"id": q.id, "text": q.text}) + "\n")

    entries = []
    qrels_lines = []
    for q in queries:
        order = [f"d{i}" for i in rng.permutation(n_docs) + 1]
        entries.extend(run_from_candidates(q.id, order, tag="bm25"))
        # distinct grades, decoupled from the first-stage order
        for grade, i in enumerate(rng.permutation(n_docs) + 1):
            qrels_lines.append(f"{q.id} 0 d{i} {grade}")
    write_run(entries, str(tmp_path / "input.run"))
    (tmp_path / "qrels.txt").write_text("\n".join(qrels_lines) + "\n")

    doc_embs = [EmbeddingRecord(d.id, rng.normal(size=6)) for d in docs]
    write_embeddings(doc_embs, str(tmp_path / "doc_embs.jsonl"))
    query_embs = [EmbeddingRecord(q.id, rng.normal(size=6)) for q in queries]
    write_embeddings(query_embs, str(tmp_path / "query_embs.jsonl"))
    return tmp_path


def run_cli(*args):
    return cli.main([str(a) for a in args])


class TestSelect:
    @pytest.mark.parametrize("algorithm", ["greedy", "random", "kmeans"])
    def test_each_algorithm(self, workspace, algorithm):
        out = workspace / f"sel_{algorithm}.jsonl"
        code = run_cli("select", "--embeddings", workspace / "doc_embs.jsonl",
                       "--algorithm", algorithm, "--k", 4, "--seed", 7, "--out", out)
        assert code == 0
        lines = out.read_text().splitlines()
        header = json.loads(lines[0])
        assert header["meta"]["algorithm"] == algorithm
        assert header["meta"]["count"] == 4
        assert len(lines) == 5

    def test_trace_flag(self, workspace):
        out = workspace / "sel.jsonl"
        run_cli("select", "--embeddings", workspace / "doc_embs.jsonl",
                "--k", 3, "--trace", "--out", out)
        header = json.loads(out.read_text().splitlines()[0])
        assert len(header["meta"]["trace"]) == 3


class TestFilterRetrieve:
    def test_filter_top1_pairing(self, workspace):
        out = workspace / "pairs.jsonl"
        code = run_cli("filter", "--query-embeddings", workspace / "query_embs.jsonl",
                       "--doc-embeddings", workspace / "doc_embs.jsonl",
                       "--quality-threshold", -1.0, "--out", out)
        assert code == 0
        lines = out.read_text().splitlines()
        meta = json.loads(lines[0])["meta"]
        assert meta["kept"] == 3
        assert meta["dropped_below"] == 0

    def test_retrieve_emits_valid_run(self, workspace):
        out = workspace / "retrieved.run"
        code = run_cli("retrieve", "--query-embeddings", workspace / "query_embs.jsonl",
                       "--doc-embeddings", workspace / "doc_embs.jsonl",
                       "--k", 5, "--out", out)
        assert code == 0
        entries = read_run(str(out))
        assert len(entries) == 15


class TestRerank:
    def test_identity_backend_preserves_input_order(self, workspace):
        out = workspace / "identity.run"
        code = run_cli("rerank", "--listwise",
                       "--run", workspace / "input.run",
                       "--queries", workspace / "queries.jsonl",
                       "--corpus", workspace / "corpus.jsonl",
                       "--backend", "identity", "--out", out)
        assert code == 0
        inp = read_run(str(workspace / "input.run"))
        got = read_run(str(out))
        assert [(e.query_id, e.doc_id, e.rank) for e in got] == \
               [(e.query_id, e.doc_id, e.rank) for e in inp]

    def test_oracle_backend_then_eval_is_perfect(self, workspace, capsys):
        out = workspace / "oracle.run"
        code = run_cli("rerank", "--listwise",
                       "--run", workspace / "input.run",
                       "--queries", workspace / "queries.jsonl",
                       "--corpus", workspace / "corpus.jsonl",
                       "--backend", "oracle", "--qrels", workspace / "qrels.txt",
                       "--window-size", 4, "--stride", 2, "--out", out)
        assert code == 0
        report_path = workspace / "report.json"
        code = run_cli("eval", "--run", out, "--qrels", workspace / "qrels.txt",
                       "--metrics", "ndcg@2,mrr,recall@5", "--out", report_path)
        assert code == 0
        report = json.loads(report_path.read_text())
        # window 4 / stride 2 carries the best 2 candidates to the front, so
        # nDCG@2 is exact even though deeper ranks are only window-sorted
        ndcg = next(m for m in report["metrics"] if m["metric"] == "ndcg@2")
        assert ndcg["mean"] == 1.0
        assert read_run(str(out)) != read_run(str(workspace / "input.run"))

    def test_pairwise_mode(self, workspace):
        out = workspace / "pairwise.run"
        code = run_cli("rerank", "--pairwise",
                       "--run", workspace / "input.run",
                       "--queries", workspace / "queries.jsonl",
                       "--corpus", workspace / "corpus.jsonl",
                       "--backend", "oracle", "--qrels", workspace / "qrels.txt",
                       "--out", out)
        assert code == 0
        read_run(str(out))


class TestDistill:
    def test_distill_writes_labels_with_manifest(self, workspace):
        out = workspace / "labels.jsonl"
        code = run_cli("distill", "--queries", workspace / "queries.jsonl",
                       "--query-embeddings", workspace / "query_embs.jsonl",
                       "--doc-embeddings", workspace / "doc_embs.jsonl",
                       "--backend", "identity", "--top-k", 4, "--out", out)
        assert code == 0
        lines = out.read_text().splitlines()
        manifest = json.loads(lines[0])["manifest"]
        assert manifest["top_k"] == 4
        labels = [json.loads(l) for l in lines[1:]]
        assert len(labels) == 3
        assert all(l["confidence"] == 1.0 for l in labels)

    def test_distill_partial_failure_exit_code(self, workspace):
        # remove one query embedding to force a per-query failure
        embs = (workspace / "query_embs.jsonl").read_text().splitlines()
        (workspace / "query_embs_partial.jsonl").write_text("\n".join(embs[:-1]) + "\n")
        out = workspace / "labels.jsonl"
        code = run_cli("distill", "--queries", workspace / "queries.jsonl",
                       "--query-embeddings", workspace / "query_embs_partial.jsonl",
                       "--doc-embeddings", workspace / "doc_embs.jsonl",
                       "--backend", "identity", "--top-k", 4, "--out", out)
        assert code == 2

    def test_deterministic_across_runs(self, workspace):
        outs = []
        for name in ("l1.jsonl", "l2.jsonl"):
            out = workspace / name
            run_cli("distill", "--queries", workspace / "queries.jsonl",
                    "--query-embeddings", workspace / "query_embs.jsonl",
                    "--doc-embeddings", workspace / "doc_embs.jsonl",
                    "--backend", "identity", "--top-k", 4, "--seed", 3, "--out", out)
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestConfigAndErrors:
    def test_config_file_sets_defaults(self, workspace):
        cfg = workspace / "cfg.json"
        cfg.write_text(json.dumps({"selection_k": 2, "seed": 5}))
        out = workspace / "sel.jsonl"
        code = run_cli("select", "--config", cfg, "--embeddings",
                       workspace / "doc_embs.jsonl", "--algorithm", "random", "--out", out)
        assert code == 0
        assert json.loads(out.read_text().splitlines()[0])["meta"]["k"] == 2

    def test_missing_file_is_fatal(self, workspace):
        code = run_cli("eval", "--run", workspace / "nope.run",
                       "--qrels", workspace / "qrels.txt")
        assert code == 1

    def test_oracle_without_qrels_is_fatal(self, workspace):
        code = run_cli("rerank", "--run", workspace / "input.run",
                       "--queries", workspace / "queries.jsonl",
                       "--corpus", workspace / "corpus.jsonl",
                       "--backend", "oracle", "--out", workspace / "x.run")
        assert code == 1

    def test_malformed_qrels_is_fatal(self, workspace):
        bad = workspace / "bad_qrels.txt"
        bad.write_text("not enough fields\n")
        code = run_cli("eval", "--run", workspace / "input.run", "--qrels", bad)
        assert code == 1
