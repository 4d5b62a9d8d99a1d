"""Plackett-Luce ranking probability, the temperature-scaled listwise loss
with its analytic gradient, and pairwise win aggregation.

All softmax-like quantities go through max-shifted log-sum-exp: small
temperatures (0.1 is the usual training setting) scale scores 10x, which
makes naive exp() overflow a real possibility.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvariantViolation, LengthMismatch, NonPositiveTemperature
from .types import Permutation, ScoreVector


def _as_scores(scores: ScoreVector | Sequence[float]) -> np.ndarray:
    if isinstance(scores, ScoreVector):
        arr = np.asarray(scores.scores, dtype=np.float64)
    else:
        arr = np.asarray(scores, dtype=np.float64)
        if arr.ndim != 1:
            raise InvariantViolation("scores must be a flat sequence")
        if not np.all(np.isfinite(arr)):
            raise InvariantViolation("scores must be finite")
    return arr


def _suffix_logsumexp(t: np.ndarray) -> np.ndarray:
    """lse[i] = log sum_{j >= i} exp(t[j]), computed with a running max shift."""
    n = t.shape[0]
    out = np.empty(n)
    m = -np.inf
    acc = 0.0
    for i in range(n - 1, -1, -1):
        x = t[i]
        if x > m:
            acc = acc * np.exp(m - x) + 1.0 if np.isfinite(m) else 1.0
            m = x
        else:
            acc += np.exp(x - m)
        out[i] = m + np.log(acc)
    return out


@dataclass(frozen=True)
class WinMatrix:
    """Pairwise outcome matrix: wins[i][j] is 1 (or a probability) iff
    candidate i is judged more relevant than candidate j."""

    wins: np.ndarray
    strict: bool = False

    def __post_init__(self):
        w = np.asarray(self.wins, dtype=np.float64)
        object.__setattr__(self, "wins", w)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InvariantViolation("wins must be a square matrix")
        if np.any(np.diag(w) != 0.0):
            raise InvariantViolation("win matrix diagonal must be zero")
        if self.strict:
            if not np.all((w == 0.0) | (w == 1.0)):
                raise InvariantViolation("strict mode requires 0/1 entries")
        elif np.any(w < 0.0) or np.any(w > 1.0):
            raise InvariantViolation("win entries must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.wins.shape[0]


@dataclass(frozen=True)
class LossReport:
    loss: float
    per_step_terms: tuple[float, ...]
    temperature: float
    gradient: tuple[float, ...] | None = None


def _check_args(scores: np.ndarray, perm: Permutation) -> None:
    if len(perm) != scores.shape[0]:
        raise LengthMismatch(f"{scores.shape[0]} scores vs permutation of size {len(perm)}")


def plackett_luce_prob(scores: ScoreVector | Sequence[float], perm: Permutation) -> float:
    """Probability of observing ``perm`` under the Plackett-Luce model:
    a product of sequential softmax choices over the remaining candidates.
    """
    s = _as_scores(scores)
    _check_args(s, perm)
    t = s[np.asarray(perm.order) - 1]
    log_p = float(np.sum(t - _suffix_logsumexp(t)))
    return float(np.exp(log_p))


def listwise_loss(
    scores: ScoreVector | Sequence[float],
    perm: Permutation,
    tau: float = 1.0,
) -> LossReport:
    """Negative log Plackett-Luce likelihood of ``perm`` at temperature tau.

    Equals -log plackett_luce_prob(scores / tau, perm); per_step_terms are the
    n negative log softmax factors, each nonnegative.
    """
    if not tau > 0:
        raise NonPositiveTemperature(f"tau={tau}")
    s = _as_scores(scores)
    _check_args(s, perm)
    t = s[np.asarray(perm.order) - 1] / tau
    terms = _suffix_logsumexp(t) - t
    return LossReport(
        loss=float(np.sum(terms)),
        per_step_terms=tuple(float(x) for x in terms),
        temperature=float(tau),
    )


def listwise_loss_grad(
    scores: ScoreVector | Sequence[float],
    perm: Permutation,
    tau: float = 1.0,
) -> np.ndarray:
    """Analytic gradient of listwise_loss w.r.t. the (unpermuted) scores.

    For the candidate placed at position p of the permutation, the derivative
    is (1/tau) * (sum over prefix steps i <= p of its softmax weight within
    suffix i) - 1/tau.  Components sum to zero: the loss is invariant to a
    constant shift of all scores.
    """
    if not tau > 0:
        raise NonPositiveTemperature(f"tau={tau}")
    s = _as_scores(scores)
    _check_args(s, perm)
    n = s.shape[0]
    order = np.asarray(perm.order) - 1
    t = s[order] / tau
    g = np.zeros(n)
    for i in range(n):
        suffix = t[i:]
        w = np.exp(suffix - suffix.max())
        w /= w.sum()
        g[i:] += w
    g = (g - 1.0) / tau
    grad = np.zeros(n)
    grad[order] = g
    return grad


def pairwise_rank(wins: WinMatrix) -> tuple[np.ndarray, Permutation]:
    """Aggregate pairwise outcomes into a ranking.

    A win is counted only for entries strictly above 0.5; exactly 0.5 is a
    tie and contributes nothing.  Candidates are sorted by descending win
    count; the stable sort breaks ties by lowest input index.
    """
    counts = np.sum(wins.wins > 0.5, axis=1).astype(int)
    order = np.argsort(-counts, kind="stable") + 1
    return counts, Permutation(tuple(int(i) for i in order))
