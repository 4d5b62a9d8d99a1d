"""Reranking orchestration: sliding-window listwise reranking and
yes/no or tournament pairwise reranking against a pluggable backend.

Long candidate lists are processed in overlapping windows from the back of
the list to the front, so strong candidates discovered deep in the list are
promoted window by window toward the top.  Windows within one query are
inherently sequential (each consumes the previous window's promotions);
distinct queries can be processed concurrently.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .backends import Backend, RetryPolicy, call_with_retries
from .errors import BackendError, InvariantViolation, MissingDoc, Unparseable
from .parsing import parse_ranking, parse_yes_no
from .prompts import (
    PARSE_RETRY_REMINDER,
    PromptScript,
    Turn,
    append_turns,
    build_listwise_prompt,
    build_pair_compare_prompt,
    build_pairwise_prompt,
)
from .ranking_math import WinMatrix, pairwise_rank
from .types import CandidateList, Document, Permutation, Query, identity_permutation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowConfig:
    """Sliding-window schedule; traversal is fixed back-to-front."""

    window_size: int = 20
    stride: int = 10

    def __post_init__(self):
        if not 1 <= self.stride <= self.window_size:
            raise InvariantViolation(
                f"need 1 <= stride <= window_size, got stride={self.stride}, "
                f"window_size={self.window_size}"
            )


@dataclass
class RerankReport:
    """Per-query bookkeeping: backend calls made and repairs applied."""

    backend_calls: int = 0
    repair_count: int = 0
    parse_retries: int = 0
    fallbacks: int = 0


def window_starts(n: int, window: WindowConfig) -> list[int]:
    """0-based window start offsets, back of the list first."""
    if n <= window.window_size:
        return [0]
    starts = []
    s = n - window.window_size
    while s > 0:
        starts.append(s)
        s -= window.stride
    starts.append(0)
    return starts


def _resolve_docs(candidates: CandidateList, docs: Mapping[str, Document]) -> list[Document]:
    resolved = []
    for did in candidates.doc_ids:
        if did not in docs:
            raise MissingDoc(f"candidate {did} not in corpus")
        resolved.append(docs[did])
    return resolved


def _ranked_scores(n: int) -> tuple[float, ...]:
    # Post-rerank scores only need to be monotone in rank for run-file output.
    return tuple(float(n - r) for r in range(n))


def rank_window(
    backend: Backend,
    prompt: PromptScript,
    n: int,
    retry: RetryPolicy,
    strict: bool = False,
    report: RerankReport | None = None,
) -> Permutation:
    """One backend round-trip with transport retries, a single parse retry,
    and repair (or input-order fallback) as the last resort."""
    report = report if report is not None else RerankReport()
    raw = call_with_retries(backend, prompt, retry)
    report.backend_calls += 1
    try:
        perm, log = parse_ranking(raw, n)
    except Unparseable:
        report.parse_retries += 1
        retry_prompt = append_turns(
            prompt, Turn("assistant", raw), Turn("user", PARSE_RETRY_REMINDER)
        )
        try:
            raw2 = call_with_retries(backend, retry_prompt, retry)
            report.backend_calls += 1
            perm, log = parse_ranking(raw2, n)
        except (Unparseable, BackendError):
            report.fallbacks += 1
            logger.warning("unparseable ranking for query %s; falling back to input order",
                           prompt.query_id)
            return identity_permutation(n)
    if log and strict:
        raise Unparseable(f"strict mode: output needed {log.count} repairs")
    report.repair_count += log.count
    return perm


def rerank_listwise(
    query: Query,
    candidates: CandidateList,
    docs: Mapping[str, Document],
    backend: Backend,
    window: WindowConfig | None = None,
    mode: str = "text",
    retry: RetryPolicy | None = None,
    strict: bool = False,
    report: RerankReport | None = None,
) -> CandidateList:
    """Sliding-window listwise rerank of one candidate list.

    The result is always a permutation of the input ids; new scores are
    descending rank positions so downstream run files sort correctly.
    """
    if not candidates.doc_ids:
        raise InvariantViolation(f"query {query.id}: empty candidate list")
    window = window or WindowConfig()
    retry = retry or RetryPolicy()
    ids = list(candidates.doc_ids)
    n = len(ids)
    if n == 1:
        return CandidateList(query.id, tuple(ids), _ranked_scores(1))
    for w_index, s in enumerate(window_starts(n, window)):
        chunk = ids[s : s + window.window_size]
        chunk_docs = _resolve_docs(CandidateList(query.id, tuple(chunk)), docs)
        prompt = build_listwise_prompt(query, chunk_docs, mode=mode)
        try:
            perm = rank_window(backend, prompt, len(chunk), retry, strict=strict, report=report)
        except BackendError as exc:
            raise BackendError(f"window {w_index}: {exc}", window_index=w_index) from exc
        ids[s : s + window.window_size] = [chunk[i - 1] for i in perm.order]
    return CandidateList(query.id, tuple(ids), _ranked_scores(n))


def rerank_pairwise(
    query: Query,
    candidates: CandidateList,
    docs: Mapping[str, Document],
    backend: Backend,
    retry: RetryPolicy | None = None,
    tournament: bool = False,
    report: RerankReport | None = None,
) -> CandidateList:
    """Pairwise rerank: one relevance question per candidate, relevant docs
    promoted ahead of irrelevant ones with stable order inside each part.

    Tournament mode instead asks every ordered pair and aggregates
    accumulated wins.
    """
    if not candidates.doc_ids:
        raise InvariantViolation(f"query {query.id}: empty candidate list")
    retry = retry or RetryPolicy()
    report = report if report is not None else RerankReport()
    resolved = _resolve_docs(candidates, docs)
    n = len(resolved)
    if tournament:
        wins = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                prompt = build_pair_compare_prompt(query, resolved[i], resolved[j])
                raw = call_with_retries(backend, prompt, retry)
                report.backend_calls += 1
                try:
                    wins[i, j] = 1.0 if parse_yes_no(raw) else 0.0
                except Unparseable:
                    report.fallbacks += 1
        _, perm = pairwise_rank(WinMatrix(wins))
        ids = [candidates.doc_ids[i - 1] for i in perm.order]
    else:
        relevant: list[str] = []
        irrelevant: list[str] = []
        for did, doc in zip(candidates.doc_ids, resolved):
            prompt = build_pairwise_prompt(query, doc)
            raw = call_with_retries(backend, prompt, retry)
            report.backend_calls += 1
            try:
                is_rel = parse_yes_no(raw)
            except Unparseable:
                report.fallbacks += 1
                is_rel = False
            (relevant if is_rel else irrelevant).append(did)
        ids = relevant + irrelevant
    return CandidateList(query.id, tuple(ids), _ranked_scores(n))


def rerank_many(
    queries: Sequence[Query],
    candidate_lists: Mapping[str, CandidateList],
    docs: Mapping[str, Document],
    backend: Backend,
    method: str = "listwise",
    window: WindowConfig | None = None,
    mode: str = "text",
    retry: RetryPolicy | None = None,
    parallelism: int = 1,
) -> tuple[list[CandidateList], list[str]]:
    """Rerank many queries, optionally in parallel; windows within a query
    stay sequential.  Returns results in query input order plus the ids of
    queries that failed."""

    def one(q: Query) -> CandidateList:
        cands = candidate_lists[q.id]
        if method == "listwise":
            return rerank_listwise(q, cands, docs, backend, window=window, mode=mode, retry=retry)
        return rerank_pairwise(q, cands, docs, backend, retry=retry)

    todo = [q for q in queries if q.id in candidate_lists]
    results: list[CandidateList] = []
    failed: list[str] = []
    if parallelism <= 1:
        for q in todo:
            try:
                results.append(one(q))
            except (BackendError, MissingDoc) as exc:
                logger.error("query %s failed: %s", q.id, exc)
                failed.append(q.id)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [(q, pool.submit(one, q)) for q in todo]
            for q, fut in futures:
                try:
                    results.append(fut.result())
                except (BackendError, MissingDoc) as exc:
                    logger.error("query %s failed: %s", q.id, exc)
                    failed.append(q.id)
    return results, failed
