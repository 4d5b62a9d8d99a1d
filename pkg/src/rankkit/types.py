"""Core domain types: documents, queries, candidate lists, permutations.

All types are immutable after construction and validate their invariants
eagerly, so instances can be shared freely across threads.  Ranking indices
are 1-based everywhere; the bracket grammar used by reranking backends
("[1] > [2]") makes 0-based indices a standing source of off-by-one bugs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, TypeVar

import math

from .errors import (
    DuplicateIndex,
    InvariantViolation,
    LengthMismatch,
    MalformedLine,
    OutOfRange,
    WrongLength,
)

T = TypeVar("T")

MODALITIES = ("text", "image", "hybrid")


@dataclass(frozen=True)
class Document:
    """One rerankable unit; may carry text, an image reference, or both."""

    id: str
    text: str | None = None
    image_ref: str | None = None
    modality: str = "text"

    def __post_init__(self):
        if not self.id:
            raise InvariantViolation("document id must be non-empty")
        if any(c.isspace() for c in self.id):
            raise InvariantViolation(f"document id contains whitespace: {self.id!r}")
        if self.modality not in MODALITIES:
            raise InvariantViolation(f"unknown modality {self.modality!r}")
        if self.modality in ("text", "hybrid") and not self.text:
            raise InvariantViolation(f"doc {self.id}: modality {self.modality} requires text")
        if self.modality in ("image", "hybrid") and not self.image_ref:
            raise InvariantViolation(f"doc {self.id}: modality {self.modality} requires image_ref")


@dataclass(frozen=True)
class Query:
    id: str
    text: str

    def __post_init__(self):
        if not self.id or any(c.isspace() for c in self.id):
            raise InvariantViolation(f"bad query id: {self.id!r}")
        if not self.text:
            raise InvariantViolation(f"query {self.id}: empty text")


@dataclass(frozen=True)
class CandidateList:
    """First-stage retrieval output for one query."""

    query_id: str
    doc_ids: tuple[str, ...]
    first_stage_scores: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise InvariantViolation(f"query {self.query_id}: duplicate candidate ids")
        if self.first_stage_scores is not None:
            object.__setattr__(self, "first_stage_scores", tuple(self.first_stage_scores))
            if len(self.first_stage_scores) != len(self.doc_ids):
                raise LengthMismatch("first_stage_scores length differs from doc_ids")

    def __len__(self) -> int:
        return len(self.doc_ids)


@dataclass(frozen=True)
class Permutation:
    """A total ordering: order[i] is the 1-based index ranked at position i."""

    order: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(i) for i in self.order))

    def __len__(self) -> int:
        return len(self.order)

    def __iter__(self) -> Iterator[int]:
        return iter(self.order)

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.order)
        for pos, idx in enumerate(self.order):
            inv[idx - 1] = pos + 1
        return Permutation(tuple(inv))


@dataclass(frozen=True)
class ScoreVector:
    """Per-candidate relevance scores; entries must be finite."""

    scores: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(s) for s in self.scores)
        object.__setattr__(self, "scores", vals)
        for i, s in enumerate(vals):
            if not math.isfinite(s):
                raise InvariantViolation(f"non-finite score {s} at position {i + 1}")

    def __len__(self) -> int:
        return len(self.scores)


def validate_permutation(order: Sequence[int], n: int) -> Permutation:
    """Check that ``order`` is a bijection on 1..n; positions in errors are 1-based."""
    if len(order) != n:
        raise WrongLength(n, len(order))
    seen: set[int] = set()
    for pos, raw in enumerate(order, start=1):
        idx = int(raw)
        if idx < 1 or idx > n:
            raise OutOfRange(pos, idx, n)
        if idx in seen:
            raise DuplicateIndex(pos, idx)
        seen.add(idx)
    return Permutation(tuple(int(i) for i in order))


def identity_permutation(n: int) -> Permutation:
    return Permutation(tuple(range(1, n + 1)))


def apply_permutation(items: Sequence[T], perm: Permutation) -> list[T]:
    """Reorder ``items`` so position i holds items[perm.order[i] - 1]."""
    if len(items) != len(perm):
        raise LengthMismatch(f"{len(items)} items vs permutation of size {len(perm)}")
    return [items[i - 1] for i in perm.order]


# --- JSON-lines corpus / query I/O ---


def read_documents(path: str) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                docs.append(
                    Document(
                        id=rec["id"],
                        text=rec.get("text"),
                        image_ref=rec.get("image_ref"),
                        modality=rec.get("modality", "text"),
                    )
                )
            except (json.JSONDecodeError, KeyError, InvariantViolation) as exc:
                raise MalformedLine(path, lineno, line, str(exc)) from exc
    return docs


def read_queries(path: str) -> list[Query]:
    queries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                queries.append(Query(id=rec["id"], text=rec["text"]))
            except (json.JSONDecodeError, KeyError, InvariantViolation) as exc:
                raise MalformedLine(path, lineno, line, str(exc)) from exc
    return queries


def write_documents(docs: Iterable[Document], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            rec = {"id": d.id, "modality": d.modality}
            if d.text is not None:
                rec["text"] = d.text
            if d.image_ref is not None:
                rec["image_ref"] = d.image_ref
            fh.write(json.dumps(rec) + "\n")
