"""Session engine: the one-turn decision loop and multi-turn runners.

A turn executes three phases in a fixed order:
  (1) plan: featurize the state and sample a macro strategy;
  (2) adapt: infer preferences, retrieve facts, generate the response;
  (3) transition: apply the system turn, obtain the user reply, score the
      resulting state, and decide termination (normalized score strictly
      above tau).

Sessions iterate turns until termination or the turn cap. Training epochs
collect episodes under a frozen parameter snapshot and then apply batched
policy-gradient updates.
"""

from __future__ import annotations

import logging
import queue
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dialogue import (
    DialogueState,
    Outcome,
    Trajectory,
    TurnRecord,
    apply_system_turn,
    apply_user_turn,
    new_session,
    render_transcript,
    with_last_reward,
)
from .experts.actor import Actor
from .experts.backends import TextBackend
from .experts.preference import EMPTY_PREFERENCE, PreferenceReasoner, PreferenceSummary
from .experts.prompts import PromptTemplate
from .experts.rewarder import Rewarder
from .features import FeatureVector, extract_features
from .policy import (
    EpisodeSample,
    PolicyParams,
    RlStats,
    entropy,
    policy_distribution,
    rl_update,
    sample_strategy,
    sft_step,
)
from .retrieval import (
    EMPTY_FACTS,
    EmbeddingProvider,
    EntityIndex,
    FactBundle,
    KnowledgeTriple,
    build_query,
    retrieve_entities,
    retrieve_facts,
)
from .strategies import N_STRATEGIES, StrategyCatalog

log = logging.getLogger(__name__)

EventHook = Callable[[str, int], None]


class UserExhaustedError(RuntimeError):
    """A scripted or live user has no further reply; the session ends at cap."""


class EmptySessionError(RuntimeError):
    """The user went away before a single turn completed."""


# ---------------------------------------------------------------------------
# User agents
# ---------------------------------------------------------------------------


class UserAgent:
    def opening(self) -> Optional[str]:
        return None

    def reply(self, state: DialogueState) -> str:
        raise NotImplementedError

    def reset(self) -> None:
        pass


class ScriptedUser(UserAgent):
    def __init__(self, utterances: Sequence[str], opening: Optional[str] = None, cycle: bool = False):
        if not utterances:
            raise ValueError("scripted user needs at least one utterance")
        self._utterances = list(utterances)
        self._opening = opening
        self._cycle = cycle
        self._cursor = 0

    def opening(self) -> Optional[str]:
        return self._opening

    def reply(self, state: DialogueState) -> str:
        if self._cursor >= len(self._utterances):
            if not self._cycle:
                raise UserExhaustedError("scripted utterances exhausted")
            return self._utterances[-1]
        text = self._utterances[self._cursor]
        self._cursor += 1
        return text

    def reset(self) -> None:
        self._cursor = 0


class SimulatedUser(UserAgent):
    """LLM-backed user with a persona and an optional target item."""

    def __init__(
        self,
        backend: TextBackend,
        template: PromptTemplate,
        persona: str,
        target_item: Optional[str] = None,
        opening: Optional[str] = None,
    ):
        self.backend = backend
        self.template = template
        self.persona = persona
        self.target_item = target_item
        self._opening = opening

    def opening(self) -> Optional[str]:
        return self._opening

    def reply(self, state: DialogueState) -> str:
        persona = self.persona
        if self.target_item:
            persona += f"\nDeep down, the item you would accept is: {self.target_item}"
        prompt = self.template.render(transcript=render_transcript(state), persona=persona)
        text = self.backend.complete(prompt).strip()
        if not text:
            raise UserExhaustedError("simulated user returned an empty reply")
        return text


class LiveUser(UserAgent):
    """Bridges a live chat channel: replies arrive through a queue."""

    _CLOSE = object()

    def __init__(self, reply_timeout_s: float = 900.0, on_awaiting: Optional[Callable[[DialogueState], None]] = None):
        self.inbox: queue.Queue = queue.Queue()
        self.reply_timeout_s = reply_timeout_s
        self.on_awaiting = on_awaiting

    def post(self, text: str) -> None:
        self.inbox.put(text)

    def close(self) -> None:
        self.inbox.put(self._CLOSE)

    def reply(self, state: DialogueState) -> str:
        if self.on_awaiting is not None:
            self.on_awaiting(state)
        try:
            item = self.inbox.get(timeout=self.reply_timeout_s)
        except queue.Empty:
            raise UserExhaustedError("live user did not reply before the timeout") from None
        if item is self._CLOSE:
            raise UserExhaustedError("live session closed")
        return str(item)


# ---------------------------------------------------------------------------
# Expert wiring
# ---------------------------------------------------------------------------


@dataclass
class FactRetriever:
    provider: EmbeddingProvider
    index: Optional[EntityIndex]
    store: Sequence[KnowledgeTriple]
    k: int = 5
    per_entity_cap: int = 8
    full_transcript_query: bool = False

    def retrieve(self, state: DialogueState, pref: PreferenceSummary) -> FactBundle:
        if self.index is None or len(self.index) == 0:
            return EMPTY_FACTS
        transcript = render_transcript(state) if self.full_transcript_query else None
        query = build_query(state.last_user_text(), pref.text, transcript)
        if not query.strip():
            return EMPTY_FACTS
        entities = retrieve_entities(self.index, query, self.provider, self.k)
        return retrieve_facts(self.store, entities, self.per_entity_cap)


@dataclass
class ExpertSuite:
    preference: PreferenceReasoner
    actor: Actor
    rewarder: Rewarder
    retriever: FactRetriever


@dataclass
class SessionConfig:
    catalog: StrategyCatalog
    experts: ExpertSuite
    user: UserAgent
    turn_cap: int = 10
    gamma: float = 0.99
    tau: float = 0.8
    reward_samples: int = 10
    rng_seed: int = 0
    pinned_context: Optional[str] = None
    event_hook: Optional[EventHook] = None

    def __post_init__(self) -> None:
        if self.turn_cap < 1:
            raise ValueError("turn_cap must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")


@dataclass
class TurnOutput:
    record: TurnRecord
    state: DialogueState
    features: FeatureVector
    preference: PreferenceSummary
    facts: FactBundle
    user_text: str
    entropy: float


@dataclass
class SessionRollout:
    trajectory: Trajectory
    turns: list[TurnOutput]
    final_state: DialogueState

    def episode_sample(self) -> EpisodeSample:
        return EpisodeSample(
            features=[t.features for t in self.turns],
            strategies=[t.record.strategy for t in self.turns],
            rewards=[t.record.reward for t in self.turns],
        )


def _emit(config: SessionConfig, event: str, turn: int) -> None:
    if config.event_hook is not None:
        config.event_hook(event, turn)


def run_turn(
    config: SessionConfig,
    params: PolicyParams,
    state: DialogueState,
    rng: np.random.Generator,
) -> TurnOutput:
    """Execute one full turn starting from a state that awaits the system."""
    if not state.awaiting_system():
        raise ValueError("state already has a pending system utterance")
    t = state.turn

    _emit(config, "plan", t)
    features = extract_features(state, config.turn_cap)
    dist = policy_distribution(params, features)
    strategy = sample_strategy(dist, rng)
    logprob = float(np.log(max(dist.probs[strategy], 1e-300)))

    _emit(config, "preference", t)
    if state.last_user_text() is None:
        pref = EMPTY_PREFERENCE  # nothing to infer before the user has spoken
    else:
        pref = config.experts.preference.infer(state)

    _emit(config, "retrieve", t)
    facts = config.experts.retriever.retrieve(state, pref)

    _emit(config, "act", t)
    action = config.experts.actor.respond(config.catalog.by_id(strategy), pref, facts, state)
    state_sys = apply_system_turn(state, strategy, action)

    _emit(config, "user", t)
    user_text = config.user.reply(state_sys)
    state_next = apply_user_turn(state_sys, user_text)

    _emit(config, "reward", t)
    signal = config.experts.rewarder.score(state_next, config.reward_samples, config.tau)
    state_next = with_last_reward(state_next, signal.normalized)

    _emit(config, "stop_check", t)
    record = TurnRecord(
        state_features_digest=features.digest(),
        strategy=strategy,
        strategy_logprob=logprob,
        action_text=action,
        reward=signal.normalized,
        terminated=signal.terminate,
    )
    return TurnOutput(
        record=record,
        state=state_next,
        features=features,
        preference=pref,
        facts=facts,
        user_text=user_text,
        entropy=entropy(dist),
    )


def run_session(
    config: SessionConfig,
    params: PolicyParams,
    session_id: Optional[str] = None,
    rng: Optional[np.random.Generator] = None,
    turn_callback: Optional[Callable[[TurnOutput], None]] = None,
) -> SessionRollout:
    """Run turns until acceptance or the cap; scripted-user exhaustion also caps."""
    rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
    config.user.reset()
    state = new_session(
        session_id or f"sess-{config.rng_seed}",
        pinned_context=config.pinned_context,
        opening_user_text=config.user.opening(),
    )
    turns: list[TurnOutput] = []
    outcome = Outcome(accepted=False)
    for _ in range(config.turn_cap):
        try:
            out = run_turn(config, params, state, rng)
        except UserExhaustedError:
            break
        turns.append(out)
        state = out.state
        if turn_callback is not None:
            turn_callback(out)
        if out.record.terminated:
            outcome = Outcome(accepted=True, at_turn=len(turns))
            break
    if not turns:
        raise EmptySessionError("session produced no completed turns")
    trajectory = Trajectory(records=tuple(t.record for t in turns), outcome=outcome)
    return SessionRollout(trajectory=trajectory, turns=turns, final_state=state)


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


@dataclass
class EpochStats:
    epoch: int
    episodes: int
    mean_return: float
    acceptance_rate: float
    mean_entropy: float
    mean_length: float
    strategy_histogram: list[int]  # draws per strategy across the epoch
    updates: int
    grad_norm: float

    def to_record(self) -> dict:
        return {
            "epoch": self.epoch,
            "episodes": self.episodes,
            "mean_return": self.mean_return,
            "acceptance_rate": self.acceptance_rate,
            "mean_entropy": self.mean_entropy,
            "mean_length": self.mean_length,
            "strategy_histogram": self.strategy_histogram,
            "updates": self.updates,
            "grad_norm": self.grad_norm,
        }


def episode_rng(seed: int, epoch: int, episode: int) -> np.random.Generator:
    """Independent per-episode stream derived by seed splitting."""
    return np.random.default_rng([seed, epoch, episode])


def run_training_epoch(
    config: SessionConfig,
    params: PolicyParams,
    episodes: int,
    alpha: float,
    beta: float,
    epoch_index: int = 0,
    batch_size: int = 16,
    per_trajectory_updates: bool = False,
    baseline: bool = False,
) -> tuple[PolicyParams, EpochStats, list[SessionRollout]]:
    """Collect episodes under a frozen snapshot, then update in batches.

    ``per_trajectory_updates`` switches to one update per episode,
    collected and applied interleaved (off by default).
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    snapshot = params.copy() if not per_trajectory_updates else params
    rollouts: list[SessionRollout] = []
    for i in range(episodes):
        rng = episode_rng(config.rng_seed, epoch_index, i)
        rollout = run_session(config, snapshot, session_id=f"ep{epoch_index}-{i}", rng=rng)
        rollouts.append(rollout)
        if per_trajectory_updates:
            params, _ = rl_update(params, [rollout.episode_sample()], alpha, beta, config.gamma, baseline=baseline)
    if not rollouts:
        raise RuntimeError("epoch collected zero trajectories")

    updates = 0
    grad_norms = []
    if not per_trajectory_updates:
        samples = [r.episode_sample() for r in rollouts]
        for start in range(0, len(samples), batch_size):
            batch = samples[start : start + batch_size]
            params, stats = rl_update(params, batch, alpha, beta, config.gamma, baseline=baseline)
            updates += 1
            grad_norms.append(stats.grad_norm)

    histogram = [0] * N_STRATEGIES
    for r in rollouts:
        for rec in r.trajectory.records:
            histogram[rec.strategy] += 1
    returns = [
        float(np.sum([rec.reward * config.gamma**i for i, rec in enumerate(r.trajectory.records)]))
        for r in rollouts
    ]
    stats = EpochStats(
        epoch=epoch_index,
        episodes=len(rollouts),
        mean_return=float(np.mean(returns)),
        acceptance_rate=float(np.mean([r.trajectory.outcome.accepted for r in rollouts])),
        mean_entropy=float(np.mean([t.entropy for r in rollouts for t in r.turns])),
        mean_length=float(np.mean([len(r.turns) for r in rollouts])),
        strategy_histogram=histogram,
        updates=updates,
        grad_norm=float(np.mean(grad_norms)) if grad_norms else 0.0,
    )
    return params, stats, rollouts


@dataclass
class SftEpochStats:
    epoch: int
    mean_loss: float
    accuracy: float


def run_sft(
    params: PolicyParams,
    corpus: Sequence[tuple[DialogueState, int]],
    epochs: int,
    lr: float,
    batch_size: int,
    seed: int = 0,
    turn_cap: int = 10,
) -> tuple[PolicyParams, list[SftEpochStats]]:
    """Supervised warm-up over (state, gold strategy) pairs."""
    if not corpus:
        raise ValueError("supervised corpus is empty")
    featurized = [(extract_features(state, turn_cap), gold) for state, gold in corpus]
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(featurized))
        losses = []
        for start in range(0, len(order), batch_size):
            batch = [featurized[j] for j in order[start : start + batch_size]]
            params, loss = sft_step(params, batch, lr)
            losses.append(loss)
        correct = 0
        for fv, gold in featurized:
            dist = policy_distribution(params, fv)
            if int(np.argmax(dist.probs)) == gold:
                correct += 1
        history.append(
            SftEpochStats(
                epoch=epoch,
                mean_loss=float(np.mean(losses)),
                accuracy=correct / len(featurized),
            )
        )
    return params, history


def strategy_histogram(trajectories: Sequence[Trajectory], buckets: int) -> np.ndarray:
    """(strategy x progress-bucket) frequency matrix; bucket columns sum to 1.

    Turn t of a length-T trajectory lands in bucket floor((t-1)/T * buckets).
    """
    if buckets < 1:
        raise ValueError("buckets must be >= 1")
    counts = np.zeros((N_STRATEGIES, buckets))
    for traj in trajectories:
        t_len = len(traj.records)
        for t, rec in enumerate(traj.records, start=1):
            bucket = min(int((t - 1) / t_len * buckets), buckets - 1)
            counts[rec.strategy, bucket] += 1.0
    sums = counts.sum(axis=0, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        freq = np.where(sums > 0, counts / sums, 0.0)
    return freq
