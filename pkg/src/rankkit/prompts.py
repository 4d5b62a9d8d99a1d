"""Chat prompt construction for listwise and pairwise reranking.

The templates follow the multi-turn RankGPT convention: a system line, an
announcement of how many candidates follow, one user/assistant turn pair per
candidate (the assistant acknowledges receipt), and a final instruction turn
that pins the ``[1] > [2]`` output grammar.  The pairwise template is a
single yes/no relevance question.

Text and multimodal variants are kept as separate verbatim templates rather
than unified; their wording differs in small ways (passage vs document,
acknowledgement phrasing) and backends may be sensitive to either.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import InvariantViolation, MissingModality, TooFewDocs
from .types import Document, Query

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class Turn:
    role: str
    text: str
    image_refs: tuple[str, ...] = ()

    def __post_init__(self):
        if self.role not in ROLES:
            raise InvariantViolation(f"unknown role {self.role!r}")
        if self.image_refs and self.role != "user":
            raise InvariantViolation("attachments are only allowed on user turns")
        object.__setattr__(self, "image_refs", tuple(self.image_refs))


@dataclass(frozen=True)
class PromptScript:
    """An ordered multi-turn conversation ready for a chat backend.

    ``kind``, ``query_id`` and ``doc_ids`` are engine-side metadata (used by
    deterministic mock backends); wire adapters serialize only the turns.
    """

    turns: tuple[Turn, ...]
    kind: str = "listwise"
    query_id: str = ""
    doc_ids: tuple[str, ...] = ()

    def __post_init__(self):
        turns = tuple(self.turns)
        object.__setattr__(self, "turns", turns)
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))
        if not turns or turns[0].role != "system":
            raise InvariantViolation("first turn must be system")
        for prev, cur in zip(turns[1:], turns[2:]):
            if prev.role == cur.role:
                raise InvariantViolation("user/assistant turns must alternate")


TEXT_LISTWISE_SYSTEM = (
    "You are RankGPT, an intelligent assistant that can rank passages based on "
    "their relevancy to the query."
)
MM_LISTWISE_SYSTEM = (
    "You are a multimodal reranking assistant. Rank documents containing both "
    "text and images based on their relevance to the query."
)
PAIRWISE_SYSTEM = (
    "You are an expert relevance assessor for multimodal documents. Determine "
    "whether the given document is relevant to the user query."
)

PARSE_RETRY_REMINDER = (
    "Your previous response could not be parsed. Respond with the ranking only, "
    "in the format [] > [], e.g., [1] > [2]."
)


def build_listwise_prompt(
    query: Query,
    docs: Sequence[Document],
    mode: str = "text",
) -> PromptScript:
    """Build the multi-turn listwise ranking script for one window of docs."""
    n = len(docs)
    if n < 2:
        raise TooFewDocs(f"listwise ranking needs at least 2 docs, got {n}")
    if mode not in ("text", "multimodal"):
        raise InvariantViolation(f"unknown prompt mode {mode!r}")

    turns: list[Turn] = []
    if mode == "text":
        for d in docs:
            if not d.text:
                raise MissingModality(f"doc {d.id} has no text for text-mode ranking")
        turns.append(Turn("system", TEXT_LISTWISE_SYSTEM))
        turns.append(
            Turn(
                "user",
                f"I will provide you with {n} passages, each indicated by number "
                f"identifier []. Rank the passages based on their relevance to "
                f"query: {query.text}.",
            )
        )
        turns.append(Turn("assistant", "Okay, please provide the passages."))
        for i, d in enumerate(docs, start=1):
            turns.append(Turn("user", f"[{i}] {d.text}"))
            turns.append(Turn("assistant", f"Received passage [{i}]."))
        turns.append(
            Turn(
                "user",
                f"Search Query: {query.text}. Rank the {n} passages above based on "
                f"their relevance. The output format should be [] > [], e.g., "
                f"[1] > [2]. Only response the ranking results, do not say any "
                f"word or explain.",
            )
        )
    else:
        for d in docs:
            if not d.image_ref:
                raise MissingModality(f"doc {d.id} has no image_ref for multimodal ranking")
        turns.append(Turn("system", MM_LISTWISE_SYSTEM))
        turns.append(
            Turn(
                "user",
                f"I will provide you with {n} multimodal documents, each containing "
                f"text and images. Rank them by relevance to query: {query.text}.",
            )
        )
        turns.append(Turn("assistant", "Understood. Please provide the documents."))
        for i, d in enumerate(docs, start=1):
            if d.text:
                body = f"[{i}] Text: {d.text}\nImage: [Attached image_{i}]"
            else:
                body = f"[{i}] Image: [Attached image_{i}]"
            turns.append(Turn("user", body, image_refs=(d.image_ref,)))
            turns.append(Turn("assistant", f"Received document [{i}]."))
        turns.append(
            Turn(
                "user",
                f"Query: {query.text}. Rank the {n} documents considering both "
                f"textual and visual content. Output format: [] > [], e.g., "
                f"[1] > [2]. Only provide the ranking, no explanation.",
            )
        )
    return PromptScript(
        turns=tuple(turns),
        kind="listwise",
        query_id=query.id,
        doc_ids=tuple(d.id for d in docs),
    )


def build_pairwise_prompt(query: Query, doc: Document) -> PromptScript:
    """Single yes/no relevance question for one document."""
    if doc.text is None and doc.image_ref is None:
        raise MissingModality(f"doc {doc.id} carries neither text nor image")
    lines = [f"Query: {query.text}"]
    if doc.text:
        lines.append(f"Document Text: {doc.text}")
    refs: tuple[str, ...] = ()
    if doc.image_ref:
        lines.append("Document Image: [Attached]")
        refs = (doc.image_ref,)
    lines.append("Is this document relevant to the query? Answer only 'Yes' or 'No'.")
    return PromptScript(
        turns=(
            Turn("system", PAIRWISE_SYSTEM),
            Turn("user", "\n".join(lines), image_refs=refs),
        ),
        kind="pairwise",
        query_id=query.id,
        doc_ids=(doc.id,),
    )


def build_pair_compare_prompt(query: Query, doc_a: Document, doc_b: Document) -> PromptScript:
    """Yes/no comparison of an ordered document pair, for tournament mode."""
    lines = [f"Query: {query.text}"]
    refs: list[str] = []
    for label, d in (("A", doc_a), ("B", doc_b)):
        if d.text:
            lines.append(f"Document {label} Text: {d.text}")
        if d.image_ref:
            lines.append(f"Document {label} Image: [Attached]")
            refs.append(d.image_ref)
    lines.append(
        "Is Document A more relevant to the query than Document B? "
        "Answer only 'Yes' or 'No'."
    )
    return PromptScript(
        turns=(
            Turn("system", PAIRWISE_SYSTEM),
            Turn("user", "\n".join(lines), image_refs=tuple(refs)),
        ),
        kind="pair_compare",
        query_id=query.id,
        doc_ids=(doc_a.id, doc_b.id),
    )


def append_turns(script: PromptScript, *turns: Turn) -> PromptScript:
    return PromptScript(
        turns=script.turns + tuple(turns),
        kind=script.kind,
        query_id=script.query_id,
        doc_ids=script.doc_ids,
    )
