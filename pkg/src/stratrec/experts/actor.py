"""Actor expert: turns the chosen strategy plus context signals into the reply."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from ..dialogue import DialogueState, render_transcript
from ..strategies import StrategyDef
from .backends import ExpertUnavailableError, TextBackend
from .preference import PreferenceSummary
from .prompts import PromptTemplate

if TYPE_CHECKING:
    from ..retrieval import FactBundle


@dataclass
class Actor:
    backend: TextBackend
    template: PromptTemplate
    max_chars: int = 1200

    def respond(
        self,
        strategy: StrategyDef,
        pref: PreferenceSummary,
        facts: "FactBundle",
        state: DialogueState,
    ) -> str:
        """Generate the system utterance for this turn.

        An empty reply is retried once before giving up; replies are
        trimmed and capped at ``max_chars``.
        """
        prompt = self.template.render(
            strategy_name=strategy.name,
            strategy_instruction=strategy.instruction,
            preference=pref.rendered(),
            facts=facts.rendered or "(no facts retrieved)",
            transcript=render_transcript(state) or "(conversation not started)",
        )
        reply = self.backend.complete(prompt).strip()
        if not reply:
            reply = self.backend.complete(prompt).strip()
        if not reply:
            raise ExpertUnavailableError("actor returned an empty reply twice")
        return reply[: self.max_chars]
