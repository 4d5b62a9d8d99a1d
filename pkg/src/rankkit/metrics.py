"""TREC-style IR evaluation: nDCG@k, MRR, Recall@k with macro/micro
aggregation, Kendall tau, and bit-exact qrels/run file I/O.

Conventions follow trec_eval where the choice matters: nDCG defaults to
linear gain, queries present in the qrels but absent from the run score 0
and stay in the mean, and IDCG is computed from all judged grades of the
query (not just the retrieved ones).
"""

from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import InvariantViolation, LengthMismatch, MalformedLine, TooShort
from .types import Permutation


@dataclass
class Qrels:
    """Graded relevance judgments, with optional query grouping for macro
    aggregation."""

    judgments: dict[tuple[str, str], int] = field(default_factory=dict)
    group_of: dict[str, str] = field(default_factory=dict)

    def add(self, query_id: str, doc_id: str, grade: int, strict: bool = False) -> None:
        if grade < 0:
            raise InvariantViolation(f"negative grade for ({query_id}, {doc_id})")
        key = (query_id, doc_id)
        if strict and key in self.judgments:
            raise InvariantViolation(f"duplicate judgment for {key}")
        self.judgments[key] = grade

    def query_ids(self) -> list[str]:
        return sorted({q for q, _ in self.judgments})

    def grades_for(self, query_id: str) -> dict[str, int]:
        return {d: g for (q, d), g in self.judgments.items() if q == query_id}


@dataclass(frozen=True)
class RunEntry:
    query_id: str
    doc_id: str
    rank: int
    score: float
    tag: str = "run"


@dataclass
class MetricReport:
    name: str
    per_query: "OrderedDict[str, float]"
    mean: float
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "metric": self.name,
            "mean": self.mean,
            "per_query": dict(self.per_query),
            **self.extras,
        }


def _group_run(run: Sequence[RunEntry]) -> dict[str, list[str]]:
    by_query: dict[str, list[tuple[int, str]]] = {}
    for e in run:
        by_query.setdefault(e.query_id, []).append((e.rank, e.doc_id))
    return {q: [d for _, d in sorted(pairs)] for q, pairs in by_query.items()}


def _gain(grade: int, gain: str) -> float:
    if gain == "linear":
        return float(grade)
    if gain == "exponential":
        return float(2**grade - 1)
    raise InvariantViolation(f"unknown gain {gain!r}")


def ndcg_at_k(
    qrels: Qrels,
    run: Sequence[RunEntry],
    k: int,
    gain: str = "linear",
) -> MetricReport:
    """nDCG@k per query plus the mean over all judged queries.

    Unjudged retrieved docs count as grade 0; a query whose judged grades are
    all zero scores 0.0.
    """
    if k < 1:
        raise InvariantViolation(f"k must be >= 1, got {k}")
    ranked = _group_run(run)
    per_query: "OrderedDict[str, float]" = OrderedDict()
    for qid in qrels.query_ids():
        grades = qrels.grades_for(qid)
        ideal = sorted(grades.values(), reverse=True)[:k]
        idcg = sum(_gain(g, gain) / math.log2(r + 1) for r, g in enumerate(ideal, start=1))
        if idcg == 0.0:
            per_query[qid] = 0.0
            continue
        docs = ranked.get(qid, [])[:k]
        dcg = sum(
            _gain(grades.get(d, 0), gain) / math.log2(r + 1)
            for r, d in enumerate(docs, start=1)
        )
        per_query[qid] = dcg / idcg
    mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return MetricReport(f"ndcg@{k}", per_query, mean, {"gain": gain})


def mrr(qrels: Qrels, run: Sequence[RunEntry], rel_threshold: int = 1) -> MetricReport:
    """Reciprocal rank of the first retrieved doc with grade >= threshold."""
    ranked = _group_run(run)
    per_query: "OrderedDict[str, float]" = OrderedDict()
    for qid in qrels.query_ids():
        grades = qrels.grades_for(qid)
        rr = 0.0
        for r, d in enumerate(ranked.get(qid, []), start=1):
            if grades.get(d, 0) >= rel_threshold:
                rr = 1.0 / r
                break
        per_query[qid] = rr
    mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return MetricReport("mrr", per_query, mean, {"rel_threshold": rel_threshold})


def recall_at_k(
    qrels: Qrels,
    run: Sequence[RunEntry],
    k: int,
    rel_threshold: int = 1,
) -> MetricReport:
    """Recall@k with micro (per-query mean) and macro (per-group mean of
    per-query means) aggregation.

    Queries with no relevant documents are excluded from both averages and
    reported separately; without grouping metadata macro equals micro.
    """
    if k < 1:
        raise InvariantViolation(f"k must be >= 1, got {k}")
    ranked = _group_run(run)
    per_query: "OrderedDict[str, float]" = OrderedDict()
    skipped: list[str] = []
    for qid in qrels.query_ids():
        grades = qrels.grades_for(qid)
        relevant = {d for d, g in grades.items() if g >= rel_threshold}
        if not relevant:
            skipped.append(qid)
            continue
        hits = sum(1 for d in ranked.get(qid, [])[:k] if d in relevant)
        per_query[qid] = hits / len(relevant)
    micro = sum(per_query.values()) / len(per_query) if per_query else 0.0
    if qrels.group_of:
        groups: dict[str, list[float]] = {}
        for qid, val in per_query.items():
            groups.setdefault(qrels.group_of.get(qid, qid), []).append(val)
        group_means = [sum(v) / len(v) for v in groups.values()]
        macro = sum(group_means) / len(group_means) if group_means else 0.0
    else:
        macro = micro
    return MetricReport(
        f"recall@{k}",
        per_query,
        micro,
        {"micro": micro, "macro": macro, "rel_threshold": rel_threshold,
         "skipped_no_relevant": skipped},
    )


def kendall_tau(perm_a: Permutation, perm_b: Permutation) -> float:
    """Rank correlation over all index pairs: (concordant - discordant) / C(n,2)."""
    n = len(perm_a)
    if n != len(perm_b):
        raise LengthMismatch(f"{n} vs {len(perm_b)}")
    if n < 2:
        raise TooShort("kendall tau needs n >= 2")
    pos_a = {v: i for i, v in enumerate(perm_a.order)}
    pos_b = {v: i for i, v in enumerate(perm_b.order)}
    concordant = discordant = 0
    items = list(pos_a)
    for i in range(n):
        for j in range(i + 1, n):
            da = pos_a[items[i]] - pos_a[items[j]]
            db = pos_b[items[i]] - pos_b[items[j]]
            if da * db > 0:
                concordant += 1
            elif da * db < 0:
                discordant += 1
    return (concordant - discordant) / (n * (n - 1) / 2)


# --- TREC file I/O ---


def read_qrels(path: str, strict: bool = False, groups_path: str | None = None) -> Qrels:
    """Parse whitespace-separated ``qid 0 docid grade`` lines; an optional
    JSON sidecar maps query ids to group keys for macro aggregation."""
    qrels = Qrels()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            fields = stripped.split()
            if len(fields) != 4:
                raise MalformedLine(path, lineno, stripped, f"expected 4 fields, got {len(fields)}")
            qid, _, did, grade = fields
            try:
                qrels.add(qid, did, int(grade), strict=strict)
            except (ValueError, InvariantViolation) as exc:
                raise MalformedLine(path, lineno, stripped, str(exc)) from exc
    if groups_path:
        with open(groups_path, encoding="utf-8") as fh:
            qrels.group_of = {str(k): str(v) for k, v in json.load(fh).items()}
    return qrels


def _validate_run(entries: Sequence[RunEntry]) -> None:
    by_query: dict[str, list[RunEntry]] = {}
    for e in entries:
        by_query.setdefault(e.query_id, []).append(e)
    for qid, group in by_query.items():
        ranks = sorted(e.rank for e in group)
        if ranks != list(range(1, len(group) + 1)):
            raise InvariantViolation(f"query {qid}: ranks are not 1..{len(group)} without gaps")
        if len({e.doc_id for e in group}) != len(group):
            raise InvariantViolation(f"query {qid}: duplicate doc ids")
        ordered = sorted(group, key=lambda e: e.rank)
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.score > prev.score:
                raise InvariantViolation(
                    f"query {qid}: score increases from rank {prev.rank} to {cur.rank}"
                )


def read_run(path: str) -> list[RunEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            fields = stripped.split()
            if len(fields) != 6:
                raise MalformedLine(path, lineno, stripped, f"expected 6 fields, got {len(fields)}")
            qid, _, did, rank, score, tag = fields
            try:
                entries.append(RunEntry(qid, did, int(rank), float(score), tag))
            except ValueError as exc:
                raise MalformedLine(path, lineno, stripped, str(exc)) from exc
    _validate_run(entries)
    return entries


def write_run(entries: Iterable[RunEntry], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(f"{e.query_id} Q0 {e.doc_id} {e.rank} {e.score} {e.tag}\n")


def run_from_candidates(query_id: str, doc_ids: Sequence[str],
                        scores: Sequence[float] | None = None,
                        tag: str = "run") -> list[RunEntry]:
    n = len(doc_ids)
    if scores is None:
        scores = [float(n - r) for r in range(n)]
    return [
        RunEntry(query_id, did, r + 1, float(scores[r]), tag)
        for r, did in enumerate(doc_ids)
    ]
