"""Evaluation metrics: deterministic scores computed locally, plus the
judge-backed conversation-quality measures.

Rates (conversation success, recommendation success, recall) live in
[0, 1]; watching intention and credibility stay on the judge's native 1-5
scale; persuasiveness maps intention shifts into [0, 1].
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .dialogue import DialogueState, Speaker, render_transcript
from .experts.backends import TextBackend
from .experts.prompts import PromptTemplate, TemplateName
from .experts.rewarder import judge_metric
from .features import tokenize
from .retrieval import FactBundle

_MARKER_RE = re.compile(r"<<(.+?)>>")


@dataclass(frozen=True)
class IntentionTriple:
    """Judge-scored intentions: before the pitch, after it, and fully informed."""

    i_pre: float
    i_post: float
    i_true: float

    def __post_init__(self) -> None:
        if self.i_true < self.i_post:
            raise ValueError("informed intention must be >= post-conversation intention")


def persuasiveness(t: IntentionTriple) -> float:
    """1 - (i_true - i_post) / (i_true - i_pre), clamped to [0, 1].

    When i_true == i_pre there was no intention gap to close, so the score
    is 1.0 by convention.
    """
    denom = t.i_true - t.i_pre
    if denom == 0.0:
        return 1.0
    value = 1.0 - (t.i_true - t.i_post) / denom
    return min(max(value, 0.0), 1.0)


def distinct_2(utterances: Sequence[str]) -> float:
    """Unique-to-total bigram ratio, bigrams formed within each utterance."""
    total = 0
    unique = set()
    for utt in utterances:
        tokens = tokenize(utt)
        for pair in zip(tokens, tokens[1:]):
            total += 1
            unique.add(pair)
    return len(unique) / total if total else 0.0


def recall_at_k(ranked: Sequence[str], gold: str, k: int) -> int:
    """1 iff the gold item appears (case-insensitive) among the first k entries."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gold_key = gold.strip().casefold()
    return int(any(item.strip().casefold() == gold_key for item in ranked[:k]))


def extract_recommended_items(system_texts: Sequence[str], known_names: Sequence[str] = ()) -> list[str]:
    """Items the system put on the table, in order of first mention.

    Primary signal: <<Title>> markers the actor is prompted to emit.
    Fallback: exact-name scan against the entity index names.
    """
    seen: list[str] = []

    def add(name: str) -> None:
        key = name.strip()
        if key and all(key.casefold() != s.casefold() for s in seen):
            seen.append(key)

    for text in system_texts:
        for m in _MARKER_RE.finditer(text):
            add(m.group(1))
    if not seen and known_names:
        for text in system_texts:
            lowered = text.casefold()
            for name in known_names:
                if name.casefold() in lowered:
                    add(name)
    return seen


@dataclass(frozen=True)
class EvalRecord:
    session_id: str
    accepted: bool
    recommended_items: tuple[str, ...]
    system_utterances: tuple[str, ...]
    gold_item: Optional[str] = None
    wi: Optional[float] = None
    cred: Optional[float] = None
    prs: Optional[float] = None


@dataclass(frozen=True)
class MetricsReport:
    n: int
    conv_sr: float
    rec_sr: float
    recall_at_1: Optional[float]
    recall_at_5: Optional[float]
    wi_mean: Optional[float]
    prs_mean: Optional[float]
    cred_mean: Optional[float]
    dist2: float

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "conv_sr": self.conv_sr,
            "rec_sr": self.rec_sr,
            "recall_at_1": self.recall_at_1,
            "recall_at_5": self.recall_at_5,
            "wi_mean": self.wi_mean,
            "prs_mean": self.prs_mean,
            "cred_mean": self.cred_mean,
            "dist2": self.dist2,
        }


def _mean_or_none(values: list[float]) -> Optional[float]:
    return sum(values) / len(values) if values else None


def aggregate(records: Sequence[EvalRecord]) -> MetricsReport:
    """Assemble the corpus-level report; judge metrics average over records
    that carry them and stay absent (None) otherwise."""
    if not records:
        raise ValueError("cannot aggregate zero records")
    with_gold = [r for r in records if r.gold_item]
    rec_hits = [
        r for r in with_gold
        if any(item.casefold() == r.gold_item.casefold() for item in r.recommended_items)
    ]
    return MetricsReport(
        n=len(records),
        conv_sr=sum(r.accepted for r in records) / len(records),
        rec_sr=len(rec_hits) / len(records),
        recall_at_1=_mean_or_none([recall_at_k(r.recommended_items, r.gold_item, 1) for r in with_gold]),
        recall_at_5=_mean_or_none([recall_at_k(r.recommended_items, r.gold_item, 5) for r in with_gold]),
        wi_mean=_mean_or_none([r.wi for r in records if r.wi is not None]),
        prs_mean=_mean_or_none([r.prs for r in records if r.prs is not None]),
        cred_mean=_mean_or_none([r.cred for r in records if r.cred is not None]),
        dist2=distinct_2([u for r in records for u in r.system_utterances]),
    )


def format_report_table(report: MetricsReport) -> str:
    rows = [
        ("dialogues", f"{report.n}"),
        ("conv_sr", f"{report.conv_sr:.4f}"),
        ("rec_sr", f"{report.rec_sr:.4f}"),
        ("recall@1", "-" if report.recall_at_1 is None else f"{report.recall_at_1:.4f}"),
        ("recall@5", "-" if report.recall_at_5 is None else f"{report.recall_at_5:.4f}"),
        ("wi", "-" if report.wi_mean is None else f"{report.wi_mean:.4f}"),
        ("prs", "-" if report.prs_mean is None else f"{report.prs_mean:.4f}"),
        ("cred", "-" if report.cred_mean is None else f"{report.cred_mean:.4f}"),
        ("dist-2", f"{report.dist2:.4f}"),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


# ---------------------------------------------------------------------------
# Judge-backed metrics
# ---------------------------------------------------------------------------


def judge_watching_intention(
    backend: TextBackend,
    template: PromptTemplate,
    transcript: str,
    samples: int = 10,
) -> float:
    return judge_metric(backend, template, transcript, samples)


def judge_credibility(
    backend: TextBackend,
    template: PromptTemplate,
    transcript: str,
    facts: FactBundle,
    samples: int = 10,
) -> float:
    return judge_metric(backend, template, transcript, samples, facts=facts.rendered or "(none)")


def pre_recommendation_transcript(state: DialogueState, recommended_item: str) -> str:
    """Transcript prefix before the first system mention of the recommended item.

    Falls back to the first utterance when no system turn mentions it.
    """
    key = recommended_item.casefold()
    cut = None
    for i, utt in enumerate(state.history):
        if utt.speaker is Speaker.SYSTEM and key in utt.text.casefold():
            cut = i
            break
    prefix = state.history[:cut] if cut is not None else state.history[:1]
    return render_transcript(replace(state, history=tuple(prefix)))


def measure_intentions(
    backend: TextBackend,
    templates: dict[TemplateName, PromptTemplate],
    state: DialogueState,
    recommended_item: str,
    item_info: FactBundle,
    samples: int = 1,
) -> IntentionTriple:
    """Three judge passes: pre-pitch prefix, full transcript, fully informed.

    The informed intention is floored at the post-conversation intention.
    """
    if not item_info.rendered:
        raise ValueError("item_info must carry at least one fact for the informed pass")
    wi_template = templates[TemplateName.JUDGE_WI]
    full = render_transcript(state)
    informed = f"{full}\n[Item information]\n{item_info.rendered}"
    i_pre = judge_metric(backend, wi_template, pre_recommendation_transcript(state, recommended_item), samples)
    i_post = judge_metric(backend, wi_template, full, samples)
    i_true = judge_metric(backend, wi_template, informed, samples)
    return IntentionTriple(i_pre=i_pre, i_post=i_post, i_true=max(i_true, i_post))
