"""Judge-style scoring: the per-turn reward signal and the metric judges.

Judges reply in free text; we take the first standalone number within
[1, 5] (grammar: digits with an optional decimal part, delimited by word
boundaries). A turn's score averages several independent judge calls; if
more than half of them fail to parse, the turn errors out rather than
defaulting to zero.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from ..dialogue import DialogueState, render_transcript
from .backends import TextBackend
from .prompts import PromptTemplate

_NUMBER_RE = re.compile(r"\b\d+(?:\.\d+)?\b")

DEFAULT_RUBRIC = (
    "Rate the latest system response for user satisfaction and task success "
    "on an integer scale from 1 (poor) to 5 (excellent). Consider whether the "
    "response is relevant, helpful, grounded, and moves the user toward a "
    "recommendation they would accept. Answer with the number only."
)


class ScoreParseError(ValueError):
    pass


@dataclass(frozen=True)
class RewardSignal:
    raw_scores: tuple[float, ...]
    mean_raw: float
    normalized: float
    terminate: bool

    def __post_init__(self) -> None:
        if not 1.0 <= self.mean_raw <= 5.0:
            raise ValueError("mean raw score must lie in [1, 5]")
        if abs(self.normalized - (self.mean_raw - 1.0) / 4.0) > 1e-12:
            raise ValueError("normalized score inconsistent with mean raw score")


def parse_score(reply: str) -> Optional[float]:
    """First standalone number in [1, 5], or None when the reply has none."""
    for match in _NUMBER_RE.finditer(reply):
        value = float(match.group())
        if 1.0 <= value <= 5.0:
            return min(max(value, 1.0), 5.0)
    return None


def _collect_scores(backend: TextBackend, prompt: str, samples: int) -> list[float]:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    scores = []
    failures = 0
    for _ in range(samples):
        reply = backend.complete(prompt)
        value = parse_score(reply)
        if value is None:
            failures += 1
        else:
            scores.append(value)
    if failures * 2 > samples:
        raise ScoreParseError(f"{failures}/{samples} judge replies had no score in [1, 5]")
    return scores


@dataclass
class Rewarder:
    backend: TextBackend
    template: PromptTemplate
    rubric: str = DEFAULT_RUBRIC

    def score(self, next_state: DialogueState, samples: int, tau: float) -> RewardSignal:
        """Score the state reached after the user's reply; terminate iff normalized > tau."""
        if not 0.0 <= tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        prompt = self.template.render(transcript=render_transcript(next_state), rubric=self.rubric)
        scores = _collect_scores(self.backend, prompt, samples)
        mean_raw = sum(scores) / len(scores)
        normalized = (mean_raw - 1.0) / 4.0
        return RewardSignal(
            raw_scores=tuple(scores),
            mean_raw=mean_raw,
            normalized=normalized,
            terminate=normalized > tau,
        )


def judge_metric(
    backend: TextBackend,
    template: PromptTemplate,
    transcript: str,
    samples: int,
    **extra_inputs: str,
) -> float:
    """Mean judge score on the native 1-5 scale, without normalization."""
    prompt = template.render(transcript=transcript, **extra_inputs)
    scores = _collect_scores(backend, prompt, samples)
    return sum(scores) / len(scores)
