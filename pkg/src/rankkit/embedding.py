"""Embedding-space geometry and data selection.

Covers cosine/Euclidean similarity, quality filtering of query-document
pairs, greedy maximum-diversity subset selection with a literal brute-force
oracle, exact top-k retrieval, and the random / k-means-centroid baseline
selectors used by the selection ablation.

Selection is deterministic: every argmin/argmax tie is broken by lowest
input index, and similarities are computed in float64 regardless of the
storage precision of the vectors.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyCollection,
    KTooLarge,
    MalformedLine,
    TooLarge,
    ZeroVector,
)

logger = logging.getLogger(__name__)

ORACLE_MAX_N = 32


@dataclass(frozen=True)
class EmbeddingRecord:
    id: str
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector)
        object.__setattr__(self, "vector", v)
        if v.ndim != 1 or v.shape[0] == 0:
            raise DimensionMismatch(f"record {self.id}: vector must be 1-d and non-empty")
        if not np.all(np.isfinite(v)):
            raise DimensionMismatch(f"record {self.id}: non-finite entries")


@dataclass(frozen=True)
class SelectionResult:
    """Selected ids in selection order, with an optional per-step trace of
    (chosen id, average similarity to the prior selection)."""

    selected_ids: tuple[str, ...]
    trace: tuple[tuple[str, float], ...] | None = None


@dataclass(frozen=True)
class FilterResult:
    kept: tuple
    kept_count: int
    dropped_below: int
    dropped_zero: int


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")


def cosine_sim(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_dims(a, b)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector()
    return float(np.dot(a, b) / (na * nb))


def euclidean_dist(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_dims(a, b)
    return float(np.linalg.norm(a - b))


def quality_filter(
    pairs: Iterable[tuple[Sequence[float], Sequence[float], object]],
    threshold: float,
) -> FilterResult:
    """Keep pairs whose query/doc cosine similarity is >= threshold.

    Zero-vector pairs are dropped and counted instead of aborting the run;
    a poisoned pair should not kill a long curation job.
    """
    kept = []
    dropped_below = 0
    dropped_zero = 0
    for q_emb, d_emb, payload in pairs:
        try:
            sim = cosine_sim(q_emb, d_emb)
        except ZeroVector:
            dropped_zero += 1
            continue
        if sim >= threshold:
            kept.append((q_emb, d_emb, payload))
        else:
            dropped_below += 1
    return FilterResult(
        kept=tuple(kept),
        kept_count=len(kept),
        dropped_below=dropped_below,
        dropped_zero=dropped_zero,
    )


def _stacked(records: Sequence[EmbeddingRecord]) -> np.ndarray:
    if not records:
        raise EmptyCollection("no embedding records")
    dim = records[0].vector.shape[0]
    for r in records:
        if r.vector.shape[0] != dim:
            raise DimensionMismatch(f"record {r.id}: dim {r.vector.shape[0]} != {dim}")
    return np.stack([r.vector for r in records]).astype(np.float64)


def _unit_rows(records: Sequence[EmbeddingRecord]) -> np.ndarray:
    x = _stacked(records)
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVector(records[int(zero[0])].id)
    return x / norms[:, None]


def greedy_diversity_select(
    records: Sequence[EmbeddingRecord],
    k: int,
    seed_index: int = 0,
    keep_trace: bool = False,
) -> SelectionResult:
    """Greedy maximum-diversity subset selection.

    Seeds with the first record (or ``seed_index``), then repeatedly adds the
    candidate with the lowest average cosine similarity to everything chosen
    so far.  Per-candidate similarity sums are maintained incrementally, so
    each step is one matrix-vector product: O(k * N * d) total rather than
    the O(k^2 * N * d) of recomputing averages from scratch.
    """
    u = _unit_rows(records)
    n = u.shape[0]
    if k < 1:
        raise KTooLarge(f"k must be >= 1, got {k}")
    k = min(k, n)
    chosen = [seed_index]
    trace = [(records[seed_index].id, 0.0)]
    picked = np.zeros(n, dtype=bool)
    picked[seed_index] = True
    sums = u @ u[seed_index]
    for _ in range(k - 1):
        avg = sums / len(chosen)
        avg[picked] = np.inf
        j = int(np.argmin(avg))  # argmin takes the first occurrence: lowest index wins ties
        chosen.append(j)
        trace.append((records[j].id, float(avg[j])))
        picked[j] = True
        sums = sums + u @ u[j]
    return SelectionResult(
        selected_ids=tuple(records[i].id for i in chosen),
        trace=tuple(trace) if keep_trace else None,
    )


def brute_force_diversity_oracle(
    records: Sequence[EmbeddingRecord],
    k: int,
    seed_index: int = 0,
    keep_trace: bool = False,
) -> SelectionResult:
    """Literal replay of greedy diversity selection with no incremental state.

    Every step recomputes each candidate's average similarity to the current
    selection from scratch with scalar cosine calls.  Capped at small N; this
    exists only to pin the optimized implementation.
    """
    if len(records) > ORACLE_MAX_N:
        raise TooLarge(f"oracle is capped at N={ORACLE_MAX_N}, got {len(records)}")
    _stacked(records)  # dimension + emptiness checks
    for r in records:
        if float(np.linalg.norm(np.asarray(r.vector, dtype=np.float64))) == 0.0:
            raise ZeroVector(r.id)
    n = len(records)
    if k < 1:
        raise KTooLarge(f"k must be >= 1, got {k}")
    k = min(k, n)
    selected = [seed_index]
    trace = [(records[seed_index].id, 0.0)]
    while len(selected) < k:
        best_j = -1
        best_avg = np.inf
        for j in range(n):
            if j in selected:
                continue
            total = 0.0
            for i in selected:
                total += cosine_sim(records[i].vector, records[j].vector)
            avg = total / len(selected)
            if avg < best_avg:
                best_avg = avg
                best_j = j
        selected.append(best_j)
        trace.append((records[best_j].id, best_avg))
    return SelectionResult(
        selected_ids=tuple(records[i].id for i in selected),
        trace=tuple(trace) if keep_trace else None,
    )


def top_k_by_distance(
    query_emb: Sequence[float],
    corpus: Sequence[EmbeddingRecord],
    k: int,
) -> list[str]:
    """Exact top-k by ascending Euclidean distance; ties keep input order."""
    if k < 1:
        raise KTooLarge(f"k must be >= 1, got {k}")
    x = _stacked(corpus)
    q = np.asarray(query_emb, dtype=np.float64)
    if q.shape[0] != x.shape[1]:
        raise DimensionMismatch(f"query dim {q.shape[0]} vs corpus dim {x.shape[1]}")
    dists = np.linalg.norm(x - q, axis=1)
    order = np.argsort(dists, kind="stable")
    return [corpus[int(i)].id for i in order[:k]]


def random_select(records: Sequence[EmbeddingRecord], k: int, seed: int) -> SelectionResult:
    """Uniform sample without replacement; order follows the seeded draw."""
    if not records:
        raise EmptyCollection("no embedding records")
    if k > len(records):
        raise KTooLarge(f"k={k} exceeds N={len(records)}")
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(records))[:k]
    return SelectionResult(selected_ids=tuple(records[int(i)].id for i in idx))


def kmeans_centroid_select(
    records: Sequence[EmbeddingRecord],
    k: int,
    seed: int,
    iters: int = 50,
) -> SelectionResult:
    """Lloyd's k-means, then one representative per cluster: the member record
    nearest its centroid in Euclidean distance, ties by lowest input index.
    """
    x = _stacked(records)
    n = x.shape[0]
    if k > n:
        raise KTooLarge(f"k={k} exceeds N={n}")
    if k < 1:
        raise KTooLarge(f"k must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    centroids = x[rng.permutation(n)[:k]].copy()
    assign = np.zeros(n, dtype=int)
    for _ in range(iters):
        d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)
        for c in range(k):  # an emptied cluster grabs the point farthest from its centroid
            if not np.any(new_assign == c):
                far = int(np.argmax(d2[np.arange(n), new_assign]))
                new_assign[far] = c
        if np.array_equal(new_assign, assign) and _ > 0:
            assign = new_assign
            break
        assign = new_assign
        for c in range(k):
            centroids[c] = x[assign == c].mean(axis=0)
    reps = []
    for c in range(k):
        members = np.flatnonzero(assign == c)
        dists = np.linalg.norm(x[members] - centroids[c], axis=1)
        reps.append(int(members[int(np.argmin(dists))]))
    return SelectionResult(selected_ids=tuple(records[i].id for i in reps))


# --- JSON-lines embedding I/O ---


def read_embeddings(path: str) -> list[EmbeddingRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.append(EmbeddingRecord(id=rec["id"], vector=np.asarray(rec["vector"], dtype=np.float64)))
            except (json.JSONDecodeError, KeyError, TypeError, DimensionMismatch) as exc:
                raise MalformedLine(path, lineno, line, str(exc)) from exc
    return out


def write_embeddings(records: Iterable[EmbeddingRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.id, "vector": [float(v) for v in r.vector]}) + "\n")


def write_selection(result: SelectionResult, path: str, meta: dict) -> None:
    """Selection output: one metadata header line, then one id per line."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {"meta": dict(meta, count=len(result.selected_ids))}
        if result.trace is not None:
            header["meta"]["trace"] = [[i, s] for i, s in result.trace]
        fh.write(json.dumps(header) + "\n")
        for ident in result.selected_ids:
            fh.write(json.dumps({"id": ident}) + "\n")
