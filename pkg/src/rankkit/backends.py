"""Model backends: the Backend protocol, deterministic mocks for tests and
offline pipelines, and a chat-completions HTTP adapter.

The HTTP adapter speaks the common chat-completions JSON shape: request
``{model, messages, temperature: 0}`` with multimodal content parts, response
read from ``choices[0].message.content``.  Local image files are inlined as
base64 data URIs; http(s) image refs pass through as-is.
"""

from __future__ import annotations

import base64
import json
import logging
import mimetypes
import os
import random
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

from .errors import BackendError, ScriptExhausted, TransportError
from .parsing import render_ranking
from .prompts import PromptScript
from .types import Permutation

logger = logging.getLogger(__name__)

API_KEY_ENV = "RERANK_API_KEY"


class Backend(Protocol):
    supports_images: bool
    max_candidates_hint: int | None

    def complete(self, prompt: PromptScript) -> str: ...


@dataclass
class RetryPolicy:
    """Exponential backoff for transport failures."""

    max_attempts: int = 5
    base_delay: float = 1.0
    factor: float = 2.0
    jitter: float = 0.1
    sleep: Callable[[float], None] = time.sleep

    def delay(self, attempt: int, rng: random.Random | None = None) -> float:
        d = self.base_delay * (self.factor**attempt)
        r = rng or random
        return d * (1.0 + r.uniform(-self.jitter, self.jitter))


def call_with_retries(backend: Backend, prompt: PromptScript, policy: RetryPolicy) -> str:
    last: TransportError | None = None
    for attempt in range(policy.max_attempts):
        try:
            return backend.complete(prompt)
        except TransportError as exc:
            last = exc
            if attempt + 1 < policy.max_attempts:
                delay = policy.delay(attempt)
                logger.warning("transport failure (attempt %d): %s; retrying in %.1fs",
                               attempt + 1, exc, delay)
                policy.sleep(delay)
    raise BackendError(f"backend failed after {policy.max_attempts} attempts: {last}")


# --- deterministic mocks ---


class IdentityBackend:
    """Echoes the presented order; answers yes to every relevance question."""

    supports_images = True
    max_candidates_hint = None

    def complete(self, prompt: PromptScript) -> str:
        if prompt.kind == "listwise":
            n = len(prompt.doc_ids)
            return render_ranking(Permutation(tuple(range(1, n + 1))))
        return "Yes"


class ReverseBackend:
    """Mirrors the presented order; answers no to every relevance question."""

    supports_images = True
    max_candidates_hint = None

    def complete(self, prompt: PromptScript) -> str:
        if prompt.kind == "listwise":
            n = len(prompt.doc_ids)
            return render_ranking(Permutation(tuple(range(n, 0, -1))))
        return "No"


class OracleBackend:
    """Ranks by relevance grade, read from a qrels-style grade table.

    Listwise prompts are answered by sorting the window's docs by grade
    descending (stable, so equal grades keep presentation order); pairwise
    prompts by grade >= rel_threshold; pair comparisons by strict grade
    dominance.
    """

    supports_images = True
    max_candidates_hint = None

    def __init__(self, grades: Mapping[tuple[str, str], int], rel_threshold: int = 1):
        self.grades = dict(grades)
        self.rel_threshold = rel_threshold

    def _grade(self, qid: str, did: str) -> int:
        return self.grades.get((qid, did), 0)

    def complete(self, prompt: PromptScript) -> str:
        qid = prompt.query_id
        if prompt.kind == "listwise":
            grades = [self._grade(qid, did) for did in prompt.doc_ids]
            order = sorted(range(len(grades)), key=lambda i: -grades[i])
            return render_ranking(Permutation(tuple(i + 1 for i in order)))
        if prompt.kind == "pair_compare":
            a, b = prompt.doc_ids
            return "Yes" if self._grade(qid, a) > self._grade(qid, b) else "No"
        (did,) = prompt.doc_ids
        return "Yes" if self._grade(qid, did) >= self.rel_threshold else "No"


class ScriptedBackend:
    """Replays a fixed transcript; raises when it runs dry."""

    supports_images = True
    max_candidates_hint = None

    def __init__(self, responses: Sequence[str]):
        self.responses = list(responses)
        self.calls: list[PromptScript] = []

    def complete(self, prompt: PromptScript) -> str:
        self.calls.append(prompt)
        if not self.responses:
            raise ScriptExhausted("scripted backend has no responses left")
        return self.responses.pop(0)


def make_mock_backend(policy: str, grades: Mapping[tuple[str, str], int] | None = None,
                      responses: Sequence[str] | None = None) -> Backend:
    if policy == "identity":
        return IdentityBackend()
    if policy == "reverse":
        return ReverseBackend()
    if policy == "oracle":
        if grades is None:
            raise ValueError("oracle policy needs a grade table")
        return OracleBackend(grades)
    if policy == "scripted":
        if responses is None:
            raise ValueError("scripted policy needs responses")
        return ScriptedBackend(responses)
    raise ValueError(f"unknown mock policy {policy!r}")


# --- HTTP chat-completions adapter ---


def _image_part(ref: str) -> dict:
    if ref.startswith(("http://", "https://", "data:")):
        url = ref
    else:
        mime = mimetypes.guess_type(ref)[0] or "application/octet-stream"
        with open(ref, "rb") as fh:
            url = f"data:{mime};base64,{base64.b64encode(fh.read()).decode('ascii')}"
    return {"type": "image_url", "image_url": {"url": url}}


def script_to_messages(prompt: PromptScript) -> list[dict]:
    """Serialize a PromptScript to chat-completions messages."""
    messages = []
    for turn in prompt.turns:
        if turn.image_refs:
            content: object = [{"type": "text", "text": turn.text}]
            content += [_image_part(r) for r in turn.image_refs]
        else:
            content = turn.text
        messages.append({"role": turn.role, "content": content})
    return messages


@dataclass
class HttpBackend:
    """Chat-completions client.  API key comes from $RERANK_API_KEY."""

    endpoint: str
    model: str
    timeout: float = 120.0
    supports_images: bool = True
    max_candidates_hint: int | None = None
    session: object = None  # requests.Session-compatible; injectable for tests

    def __post_init__(self):
        if self.session is None:
            import requests

            self.session = requests.Session()

    def complete(self, prompt: PromptScript) -> str:
        payload = {
            "model": self.model,
            "messages": script_to_messages(prompt),
            "temperature": 0,
        }
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self.session.post(
                self.endpoint, data=json.dumps(payload), headers=headers, timeout=self.timeout
            )
        except Exception as exc:  # connection errors, timeouts
            raise TransportError(f"request failed: {exc}") from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransportError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise BackendError(f"malformed completion response: {exc}") from exc
