"""Strategy-planning conversational recommender.

A trainable planner picks one of thirteen macro-level dialogue strategies
each turn; fixed text experts (preference reasoner, fact retriever, actor,
reward judge) turn that choice into a grounded reply and a scalar reward.
The planner trains by supervised warm-up followed by entropy-regularized
policy-gradient tuning.
"""

__version__ = "0.1.0"

from .strategies import StrategyCatalog, StrategyCategory, StrategyDef, default_catalog, strategy_by_name
from .dialogue import DialogueState, Outcome, Trajectory, TurnRecord, Utterance
from .features import FEATURE_DIM, FeatureVector, extract_features
from .policy import (
    EpisodeSample,
    PolicyParams,
    StrategyDistribution,
    discounted_returns,
    entropy,
    policy_distribution,
    rl_update,
    sample_strategy,
    sft_step,
)
from .session import (
    ExpertSuite,
    FactRetriever,
    ScriptedUser,
    SessionConfig,
    SessionRollout,
    SimulatedUser,
    run_session,
    run_sft,
    run_training_epoch,
    strategy_histogram,
)

__all__ = [
    "DialogueState",
    "EpisodeSample",
    "ExpertSuite",
    "FactRetriever",
    "FEATURE_DIM",
    "FeatureVector",
    "Outcome",
    "PolicyParams",
    "ScriptedUser",
    "SessionConfig",
    "SessionRollout",
    "SimulatedUser",
    "StrategyCatalog",
    "StrategyCategory",
    "StrategyDef",
    "StrategyDistribution",
    "Trajectory",
    "TurnRecord",
    "Utterance",
    "default_catalog",
    "discounted_returns",
    "entropy",
    "extract_features",
    "policy_distribution",
    "rl_update",
    "run_session",
    "run_sft",
    "run_training_epoch",
    "sample_strategy",
    "sft_step",
    "strategy_by_name",
    "strategy_histogram",
]
