"""Preference reasoning expert: infers what the user wants from the transcript."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..dialogue import DialogueState, render_transcript
from .backends import TextBackend
from .prompts import PromptTemplate

log = logging.getLogger(__name__)

_SECTION_KEYS = ("SUMMARY", "LIKES", "DISLIKES", "HINTS")


@dataclass(frozen=True)
class PreferenceSummary:
    text: str
    liked_aspects: tuple[str, ...] = ()
    disliked_aspects: tuple[str, ...] = ()
    candidate_hints: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("preference summary text must be non-empty")

    def rendered(self) -> str:
        parts = [self.text]
        if self.liked_aspects:
            parts.append("Likes: " + ", ".join(self.liked_aspects))
        if self.disliked_aspects:
            parts.append("Dislikes: " + ", ".join(self.disliked_aspects))
        if self.candidate_hints:
            parts.append("Candidate hints: " + ", ".join(self.candidate_hints))
        return "\n".join(parts)


EMPTY_PREFERENCE = PreferenceSummary(text="No user preferences observed yet.")


def _split_list(raw: str) -> tuple[str, ...]:
    return tuple(item.strip() for item in raw.split(",") if item.strip())


def parse_preference_reply(reply: str) -> PreferenceSummary | None:
    """Parse the labeled-sections format (SUMMARY / LIKES / DISLIKES / HINTS).

    Returns None when the reply carries no SUMMARY line, signalling a
    fallback to the raw text.
    """
    sections: dict[str, str] = {}
    for line in reply.splitlines():
        stripped = line.strip()
        for key in _SECTION_KEYS:
            if stripped.upper().startswith(key + ":"):
                sections[key] = stripped[len(key) + 1 :].strip()
                break
    if "SUMMARY" not in sections or not sections["SUMMARY"]:
        return None
    return PreferenceSummary(
        text=sections["SUMMARY"],
        liked_aspects=_split_list(sections.get("LIKES", "")),
        disliked_aspects=_split_list(sections.get("DISLIKES", "")),
        candidate_hints=_split_list(sections.get("HINTS", "")),
    )


@dataclass
class PreferenceReasoner:
    backend: TextBackend
    template: PromptTemplate
    parse_warnings: int = field(default=0)

    def infer(self, state: DialogueState) -> PreferenceSummary:
        """Summarize the user's preferences from the dialogue so far."""
        if state.last_user_text() is None:
            raise ValueError("preference inference needs at least one user utterance")
        prompt = self.template.render(transcript=render_transcript(state))
        reply = self.backend.complete(prompt)
        parsed = parse_preference_reply(reply)
        if parsed is None:
            self.parse_warnings += 1
            log.warning("preference reply did not parse; using raw text (session %s)", state.session_id)
            return PreferenceSummary(text=reply.strip() or "(empty preference reply)")
        return parsed
