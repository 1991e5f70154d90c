"""Dialogue session state: utterances, turn transitions, and trajectories.

State values are immutable; every transition returns a fresh state. A turn
is one system utterance followed by the user's reply, so ``turn`` equals
1 + the number of completed system turns.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .strategies import N_STRATEGIES


class Speaker(str, Enum):
    SYSTEM = "system"
    USER = "user"


@dataclass(frozen=True)
class Utterance:
    speaker: Speaker
    text: str
    turn_index: int

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("utterance text must be non-empty")
        if self.turn_index < 1:
            raise ValueError("turn_index starts at 1")


@dataclass(frozen=True)
class DialogueState:
    session_id: str
    history: tuple[Utterance, ...] = ()
    turn: int = 1
    last_strategy: Optional[int] = None
    strategy_counts: tuple[int, ...] = field(default=(0,) * N_STRATEGIES)
    last_reward: Optional[float] = None
    pinned_context: Optional[str] = None

    def last_user_text(self) -> Optional[str]:
        for utt in reversed(self.history):
            if utt.speaker is Speaker.USER:
                return utt.text
        return None

    def system_texts(self) -> list[str]:
        return [u.text for u in self.history if u.speaker is Speaker.SYSTEM]

    def awaiting_system(self) -> bool:
        return not self.history or self.history[-1].speaker is Speaker.USER


def new_session(
    session_id: str,
    pinned_context: Optional[str] = None,
    opening_user_text: Optional[str] = None,
) -> DialogueState:
    """Fresh state at turn 1, optionally seeded with the user's opening message."""
    state = DialogueState(session_id=session_id, pinned_context=pinned_context)
    if opening_user_text is not None:
        state = apply_user_turn(state, opening_user_text)
    return state


def apply_system_turn(state: DialogueState, strategy: int, action_text: str) -> DialogueState:
    """Append the system's utterance for the current turn.

    The turn counter advances only once the user replies.
    """
    if not action_text.strip():
        raise ValueError("system action text must be non-empty")
    if not 0 <= strategy < N_STRATEGIES:
        raise ValueError(f"strategy id out of range: {strategy}")
    if state.history and state.history[-1].speaker is Speaker.SYSTEM:
        raise ValueError("system turn already pending a user reply")
    counts = list(state.strategy_counts)
    counts[strategy] += 1
    utt = Utterance(Speaker.SYSTEM, action_text.strip(), state.turn)
    return replace(
        state,
        history=state.history + (utt,),
        last_strategy=strategy,
        strategy_counts=tuple(counts),
    )


def apply_user_turn(state: DialogueState, text: str) -> DialogueState:
    """Append the user's reply and advance to the next turn.

    A user message on an empty history is the session opener and does not
    advance the turn counter (no system turn completed yet).
    """
    if not text.strip():
        raise ValueError("user text must be non-empty")
    if state.history and state.history[-1].speaker is not Speaker.SYSTEM:
        raise ValueError("user turn out of order: no system utterance to reply to")
    opener = not state.history
    utt = Utterance(Speaker.USER, text.strip(), state.turn)
    return replace(
        state,
        history=state.history + (utt,),
        turn=state.turn if opener else state.turn + 1,
    )


def with_last_reward(state: DialogueState, reward: float) -> DialogueState:
    if not 0.0 <= reward <= 1.0:
        raise ValueError("reward must lie in [0, 1]")
    return replace(state, last_reward=reward)


def render_transcript(state: DialogueState) -> str:
    """Deterministic line-oriented rendering used inside expert prompts."""
    lines = []
    if state.pinned_context:
        lines.append(state.pinned_context)
    for utt in state.history:
        tag = "SYSTEM" if utt.speaker is Speaker.SYSTEM else "USER"
        lines.append(f"{tag}: {utt.text}")
    return "\n".join(lines)


@dataclass(frozen=True)
class TurnRecord:
    state_features_digest: str
    strategy: int
    strategy_logprob: float
    action_text: str
    reward: float
    terminated: bool

    def __post_init__(self) -> None:
        if not 0.0 <= self.reward <= 1.0:
            raise ValueError("reward must lie in [0, 1]")
        if self.strategy_logprob > 1e-12:
            raise ValueError("log-probability must be <= 0")


@dataclass(frozen=True)
class Outcome:
    accepted: bool
    at_turn: Optional[int] = None

    def label(self) -> str:
        return f"accepted@{self.at_turn}" if self.accepted else "turn_cap"


@dataclass(frozen=True)
class Trajectory:
    records: tuple[TurnRecord, ...]
    outcome: Outcome

    def __post_init__(self) -> None:
        if not self.records:
            raise ValueError("trajectory must hold at least one turn")
        for r in self.records[:-1]:
            if r.terminated:
                raise ValueError("terminated may be true only on the final record")
        if self.outcome.accepted:
            if not self.records[-1].terminated:
                raise ValueError("accepted outcome requires a terminated final record")
            if self.outcome.at_turn != len(self.records):
                raise ValueError("acceptance turn must equal trajectory length")
        elif self.records[-1].terminated:
            raise ValueError("turn-cap outcome contradicts a terminated final record")

    def rewards(self) -> list[float]:
        return [r.reward for r in self.records]

    def strategies(self) -> list[int]:
        return [r.strategy for r in self.records]
