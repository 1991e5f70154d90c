"""Desk-scale synthetic environments built from deterministic mock experts.

The bandit environment has one designated optimal strategy: the mock actor
tags its reply with the chosen strategy name, and the mock judge scores a
turn 5 when the tag of the optimal strategy appears and 2 otherwise
(normalized 1.0 vs 0.25). With tau = 0.8 a session therefore terminates
exactly when the optimal strategy is first played, which makes policy
learning externally checkable: under a discount below 0.75 the known
optimum is to play that strategy immediately.

``demo_mock_suite`` wires friendlier mocks (facts quoted, items marked)
for offline simulate/eval runs.
"""

from __future__ import annotations

import re
from typing import Optional

from .experts.actor import Actor
from .experts.backends import TextBackend
from .experts.preference import PreferenceReasoner
from .experts.prompts import PromptTemplate, TemplateName, default_templates
from .experts.rewarder import Rewarder
from .retrieval import EntityIndex, HashingEmbedder, KnowledgeTriple, build_index
from .session import ExpertSuite, FactRetriever, ScriptedUser, SessionConfig
from .strategies import StrategyCatalog, strategy_by_name

_STRATEGY_LINE_RE = re.compile(r"^Strategy: (.+)$", re.MULTILINE)
_FACT_LINE_RE = re.compile(r"^(.+?) — .+$", re.MULTILINE)

BANDIT_GAMMA = 0.5  # keeps immediate acceptance the unique optimum (0.25 + g < 1)
BANDIT_USER_LINES = (
    "hmm, not sure yet, tell me more",
    "okay, what else do you have in mind?",
    "i am still thinking about it",
)

_PREF_REPLY = "SUMMARY: The user is browsing for a movie.\nLIKES:\nDISLIKES:\nHINTS:"


class TaggingActorBackend:
    """Mock actor: echoes the strategy it was asked to play as a [Tag]."""

    def __init__(self) -> None:
        self.calls: list[str] = []

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        match = _STRATEGY_LINE_RE.search(prompt)
        name = match.group(1).strip() if match else "Unknown"
        return f"[{name}] Here is a pick you might enjoy."


class TagKeyedJudgeBackend:
    """Mock judge: 5 when the optimal strategy's tag is in the transcript, else 2.

    The tag can only occur on the latest system turn: an earlier occurrence
    would already have terminated the session.
    """

    def __init__(self, optimal_name: str, high: str = "5", low: str = "2"):
        self.needle = f"[{optimal_name}]"
        self.high = high
        self.low = low
        self.calls: list[str] = []

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        return self.high if self.needle in prompt else self.low


class ConstantBackend:
    def __init__(self, reply: str):
        self.reply = reply
        self.calls: list[str] = []

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        return self.reply


def _tiny_index() -> tuple[EntityIndex, list[KnowledgeTriple]]:
    profiles = [
        ("Midnight Harbor", "a quiet drama about a night-shift ferry crew"),
        ("The Clockwork Garden", "a whimsical fantasy comedy set in a mechanical park"),
        ("Static Horizon", "a tense science fiction thriller on a deep space relay"),
    ]
    store = [
        KnowledgeTriple("Midnight Harbor", "genre", "drama"),
        KnowledgeTriple("The Clockwork Garden", "genre", "fantasy comedy"),
        KnowledgeTriple("Static Horizon", "genre", "science fiction"),
    ]
    return build_index(profiles, HashingEmbedder()), store


def make_bandit_suite(optimal_name: str, templates=None) -> ExpertSuite:
    templates = templates or default_templates()
    index, store = _tiny_index()
    return ExpertSuite(
        preference=PreferenceReasoner(ConstantBackend(_PREF_REPLY), templates[TemplateName.PREFERENCE_REASONER]),
        actor=Actor(TaggingActorBackend(), templates[TemplateName.ACTOR]),
        rewarder=Rewarder(TagKeyedJudgeBackend(optimal_name), templates[TemplateName.REWARDER]),
        retriever=FactRetriever(provider=HashingEmbedder(), index=index, store=store),
    )


def make_bandit_config(
    catalog: StrategyCatalog,
    optimal_strategy: str,
    seed: int,
    gamma: float = BANDIT_GAMMA,
    turn_cap: int = 10,
    tau: float = 0.8,
) -> SessionConfig:
    """Session config for the known-optimum bandit environment."""
    if strategy_by_name(catalog, optimal_strategy) is None:
        raise ValueError(f"optimal strategy not in catalog: {optimal_strategy}")
    return SessionConfig(
        catalog=catalog,
        experts=make_bandit_suite(optimal_strategy),
        user=ScriptedUser(BANDIT_USER_LINES, opening="hi, i am looking for a movie", cycle=True),
        turn_cap=turn_cap,
        gamma=gamma,
        tau=tau,
        reward_samples=1,
        rng_seed=seed,
    )


class QuotingActorBackend:
    """Mock actor for offline demos: recommends the top retrieved entity."""

    def __init__(self) -> None:
        self.calls: list[str] = []

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        strategy = _STRATEGY_LINE_RE.search(prompt)
        name = strategy.group(1).strip() if strategy else "Unknown"
        fact = _FACT_LINE_RE.search(prompt)
        if fact:
            return f"[{name}] You might enjoy <<{fact.group(1).strip()}>>, it fits what you described."
        return f"[{name}] Could you tell me a bit more about what you like?"


class MarkerKeyedJudgeBackend:
    """Mock judge: 5 once a concrete recommendation (marker) is on the table, else 3."""

    def __init__(self, high: str = "5", low: str = "3"):
        self.high = high
        self.low = low
        self.calls: list[str] = []

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        return self.high if "<<" in prompt else self.low


def demo_mock_suite(
    index: Optional[EntityIndex],
    store: list[KnowledgeTriple],
    templates: Optional[dict[TemplateName, PromptTemplate]] = None,
    judge: Optional[TextBackend] = None,
) -> ExpertSuite:
    """Deterministic offline suite for simulate/eval runs without a model server."""
    templates = templates or default_templates()
    return ExpertSuite(
        preference=PreferenceReasoner(ConstantBackend(_PREF_REPLY), templates[TemplateName.PREFERENCE_REASONER]),
        actor=Actor(QuotingActorBackend(), templates[TemplateName.ACTOR]),
        rewarder=Rewarder(judge or MarkerKeyedJudgeBackend(), templates[TemplateName.REWARDER]),
        retriever=FactRetriever(provider=HashingEmbedder(), index=index, store=store),
    )
