"""Data curation and teacher-label distillation.

The pipeline retrieves top-k candidates per query by Euclidean distance in
a shared embedding space, asks a teacher backend to rerank them, scores
each label's confidence, and keeps the best labels up to a budget.
Curation (quality filtering then diversity selection) runs on the document
embeddings alone.

Confidence is a proxy: the Kendall tau between the teacher's ordering and
the retrieval-similarity order the candidates were presented in, minus 0.1
per output repair, clamped to [-1, 1].  The formula is recorded in every
manifest so downstream consumers know exactly what the number means.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .backends import Backend, RetryPolicy
from .embedding import (
    EmbeddingRecord,
    SelectionResult,
    cosine_sim,
    greedy_diversity_select,
    top_k_by_distance,
)
from .engine import RerankReport, WindowConfig, rank_window
from .errors import ConfigError, MissingDoc, RankkitError, ZeroVector
from .metrics import kendall_tau
from .prompts import build_listwise_prompt
from .types import Document, Permutation, Query, identity_permutation

logger = logging.getLogger(__name__)

CONFIDENCE_FORMULA = "kendall_tau(teacher_perm, retrieval_order) - 0.1 * repair_count, clamped to [-1, 1]"

TEXT_BUDGET_DEFAULT = 4000
IMAGE_BUDGET_DEFAULT = 2100
REPAIR_PENALTY = 0.1


@dataclass(frozen=True)
class TeacherLabel:
    query_id: str
    candidate_ids: tuple[str, ...]
    teacher_perm: Permutation
    confidence: float
    repair_count: int = 0
    backend_tag: str = "mock"

    def __post_init__(self):
        if len(self.candidate_ids) != len(self.teacher_perm):
            raise ConfigError(
                f"label {self.query_id}: {len(self.candidate_ids)} candidates vs "
                f"permutation of {len(self.teacher_perm)}"
            )
        if not -1.0 <= self.confidence <= 1.0:
            raise ConfigError(f"label {self.query_id}: confidence {self.confidence} out of bounds")

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "candidate_ids": list(self.candidate_ids),
            "teacher_perm": list(self.teacher_perm.order),
            "confidence": self.confidence,
            "repair_count": self.repair_count,
            "backend_tag": self.backend_tag,
        }


@dataclass(frozen=True)
class PipelineConfig:
    top_k: int = 20
    selection_k: int = 1000
    quality_threshold: float = 0.25
    window: WindowConfig = field(default_factory=WindowConfig)
    budget: int = TEXT_BUDGET_DEFAULT
    seed: int = 0
    mode: str = "text"
    parallelism: int = 1

    def __post_init__(self):
        for name in ("top_k", "selection_k", "budget"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not -1.0 <= self.quality_threshold <= 1.0:
            raise ConfigError("quality_threshold must lie in [-1, 1]")

    def to_json(self) -> dict:
        return {
            "top_k": self.top_k,
            "selection_k": self.selection_k,
            "quality_threshold": self.quality_threshold,
            "window_size": self.window.window_size,
            "stride": self.window.stride,
            "budget": self.budget,
            "seed": self.seed,
            "mode": self.mode,
        }


def config_from_json(data: Mapping) -> PipelineConfig:
    window = WindowConfig(
        window_size=int(data.get("window_size", 20)),
        stride=int(data.get("stride", 10)),
    )
    return PipelineConfig(
        top_k=int(data.get("top_k", 20)),
        selection_k=int(data.get("selection_k", 1000)),
        quality_threshold=float(data.get("quality_threshold", 0.25)),
        window=window,
        budget=int(data.get("budget", TEXT_BUDGET_DEFAULT)),
        seed=int(data.get("seed", 0)),
        mode=str(data.get("mode", "text")),
        parallelism=int(data.get("parallelism", 1)),
    )


def raw_confidence(teacher_perm: Permutation, repair_count: int) -> float:
    n = len(teacher_perm)
    tau = 1.0 if n < 2 else kendall_tau(teacher_perm, identity_permutation(n))
    return max(-1.0, min(1.0, tau - REPAIR_PENALTY * repair_count))


def confidence_score(label: TeacherLabel) -> float:
    """Retrieval-agreement confidence of a teacher label (see module docstring)."""
    return raw_confidence(label.teacher_perm, label.repair_count)


def confidence_filter(labels: Sequence[TeacherLabel], budget: int) -> list[TeacherLabel]:
    """Top ``budget`` labels by confidence descending, ties by query id."""
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    if len(labels) < budget:
        logger.warning("only %d labels for a budget of %d; keeping all", len(labels), budget)
    ordered = sorted(labels, key=lambda l: (-l.confidence, l.query_id))
    return ordered[:budget]


def _placeholder_doc(doc_id: str, mode: str) -> Document:
    if mode == "multimodal":
        return Document(id=doc_id, image_ref=doc_id, modality="image")
    return Document(id=doc_id, text=doc_id, modality="text")


def distill_one(
    query: Query,
    query_emb,
    corpus_embs: Sequence[EmbeddingRecord],
    backend: Backend,
    cfg: PipelineConfig,
    corpus: Mapping[str, Document] | None = None,
    retry: RetryPolicy | None = None,
) -> TeacherLabel:
    """Retrieve, prompt the teacher, parse/repair, and score one label."""
    candidate_ids = top_k_by_distance(query_emb, corpus_embs, cfg.top_k)
    if corpus is not None:
        docs = []
        for did in candidate_ids:
            if did not in corpus:
                raise MissingDoc(f"candidate {did} missing from corpus")
            docs.append(corpus[did])
    else:
        docs = [_placeholder_doc(did, cfg.mode) for did in candidate_ids]
    report = RerankReport()
    if len(docs) == 1:
        perm = identity_permutation(1)
    else:
        prompt = build_listwise_prompt(query, docs, mode=cfg.mode)
        perm = rank_window(backend, prompt, len(docs), retry or RetryPolicy(), report=report)
    tag = type(backend).__name__
    return TeacherLabel(
        query_id=query.id,
        candidate_ids=tuple(candidate_ids),
        teacher_perm=perm,
        confidence=raw_confidence(perm, report.repair_count),
        repair_count=report.repair_count,
        backend_tag=tag,
    )


@dataclass
class DistillSummary:
    emitted: int = 0
    skipped: int = 0
    failed_query_ids: list[str] = field(default_factory=list)


def distill(
    queries: Sequence[Query],
    query_embs: Mapping[str, Sequence[float]],
    corpus_embs: Sequence[EmbeddingRecord],
    backend: Backend,
    cfg: PipelineConfig,
    corpus: Mapping[str, Document] | None = None,
    retry: RetryPolicy | None = None,
    on_label: Callable[[TeacherLabel], None] | None = None,
) -> tuple[list[TeacherLabel], DistillSummary]:
    """Produce one teacher label per query.

    Per-query failures (missing embedding, dead backend, unresolvable docs)
    are logged and counted, never fatal.  Labels are returned and emitted in
    query input order regardless of worker parallelism, so output files are
    reproducible.
    """
    summary = DistillSummary()
    todo = list(queries)

    def one(q: Query) -> TeacherLabel:
        if q.id not in query_embs:
            raise ConfigError(f"query {q.id} has no embedding")
        return distill_one(q, query_embs[q.id], corpus_embs, backend, cfg, corpus, retry)

    labels: list[TeacherLabel] = []
    if cfg.parallelism <= 1:
        outcomes = []
        for q in todo:
            try:
                outcomes.append((q, one(q), None))
            except RankkitError as exc:
                outcomes.append((q, None, exc))
    else:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            futures = [(q, pool.submit(one, q)) for q in todo]
            outcomes = []
            for q, fut in futures:
                try:
                    outcomes.append((q, fut.result(), None))
                except RankkitError as exc:
                    outcomes.append((q, None, exc))
    for q, label, exc in outcomes:
        if exc is not None:
            logger.error("distill failed for query %s: %s", q.id, exc)
            summary.skipped += 1
            summary.failed_query_ids.append(q.id)
            continue
        labels.append(label)
        summary.emitted += 1
        if on_label is not None:
            on_label(label)
    return labels, summary


def write_labels(
    labels: Iterable[TeacherLabel],
    path: str,
    cfg: PipelineConfig,
    checkpoint: bool = True,
) -> None:
    """Stream labels to JSON-lines with a manifest header; the checkpoint file
    (path + '.ckpt') is updated atomically after every label."""
    ckpt_path = path + ".ckpt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"manifest": dict(cfg.to_json(), confidence=CONFIDENCE_FORMULA)}) + "\n")
        count = 0
        for label in labels:
            fh.write(json.dumps(label.to_json()) + "\n")
            fh.flush()
            count += 1
            if checkpoint:
                _write_checkpoint(ckpt_path, label.query_id, count)
    if checkpoint and os.path.exists(ckpt_path):
        os.remove(ckpt_path)


def _write_checkpoint(path: str, last_query_id: str, completed: int) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump({"last_query_id": last_query_id, "completed": completed}, fh)
    os.replace(tmp, path)


def read_checkpoint(path: str) -> dict | None:
    ckpt = path + ".ckpt"
    if not os.path.exists(ckpt):
        return None
    with open(ckpt, encoding="utf-8") as fh:
        return json.load(fh)


def read_labels(path: str) -> tuple[dict, list[TeacherLabel]]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        manifest = header.get("manifest", {})
        labels = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            labels.append(
                TeacherLabel(
                    query_id=rec["query_id"],
                    candidate_ids=tuple(rec["candidate_ids"]),
                    teacher_perm=Permutation(tuple(rec["teacher_perm"])),
                    confidence=rec["confidence"],
                    repair_count=rec.get("repair_count", 0),
                    backend_tag=rec.get("backend_tag", ""),
                )
            )
    return manifest, labels


@dataclass
class CurationManifest:
    total: int
    paired: int
    kept_after_filter: int
    selected: int
    threshold: float
    selection_k: int
    seed: int

    def to_json(self) -> dict:
        return self.__dict__.copy()


def curate(
    corpus_embs: Sequence[EmbeddingRecord],
    cfg: PipelineConfig,
    query_embs: Sequence[EmbeddingRecord] | None = None,
) -> tuple[SelectionResult, CurationManifest]:
    """Quality filtering then greedy diversity selection.

    When query embeddings are given, each query is paired with its nearest
    document (top-1 by Euclidean distance) and the pair must clear the cosine
    threshold for the document to survive; without queries the filter stage
    is a no-op and every document survives.
    """
    by_id = {r.id: r for r in corpus_embs}
    paired = 0
    if query_embs is not None:
        survivors_ids: list[str] = []
        seen: set[str] = set()
        for q in query_embs:
            top = top_k_by_distance(q.vector, corpus_embs, 1)[0]
            paired += 1
            try:
                sim = cosine_sim(q.vector, by_id[top].vector)
            except ZeroVector:
                continue
            if sim >= cfg.quality_threshold and top not in seen:
                survivors_ids.append(top)
                seen.add(top)
        survivors = [by_id[i] for i in survivors_ids]
    else:
        survivors = list(corpus_embs)
    if not survivors:
        raise ConfigError("quality filter removed every record; lower the threshold")
    selection = greedy_diversity_select(survivors, cfg.selection_k, keep_trace=True)
    manifest = CurationManifest(
        total=len(corpus_embs),
        paired=paired,
        kept_after_filter=len(survivors),
        selected=len(selection.selected_ids),
        threshold=cfg.quality_threshold,
        selection_k=cfg.selection_k,
        seed=cfg.seed,
    )
    return selection, manifest
