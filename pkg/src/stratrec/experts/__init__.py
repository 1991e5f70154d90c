from .backends import ExpertUnavailableError, MockBackend, RemoteBackend, TextBackend
from .prompts import PromptTemplate, TemplateName, default_templates, load_templates
from .preference import PreferenceReasoner, PreferenceSummary
from .actor import Actor
from .rewarder import RewardSignal, Rewarder, ScoreParseError, judge_metric, parse_score

__all__ = [
    "Actor",
    "ExpertUnavailableError",
    "MockBackend",
    "PreferenceReasoner",
    "PreferenceSummary",
    "PromptTemplate",
    "RemoteBackend",
    "RewardSignal",
    "Rewarder",
    "ScoreParseError",
    "TemplateName",
    "TextBackend",
    "default_templates",
    "judge_metric",
    "load_templates",
    "parse_score",
]
