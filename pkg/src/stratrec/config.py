"""Run configuration: one YAML file, environment-variable interpolation for
secrets, and the wiring that turns a config into live engine objects.

``${VAR}`` anywhere in a string value is replaced from the environment;
an unset variable is a configuration error naming the variable. Errors
always name the offending field.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .bandit import BANDIT_USER_LINES, demo_mock_suite, make_bandit_suite
from .experts.actor import Actor
from .experts.backends import RemoteBackend
from .experts.preference import PreferenceReasoner
from .experts.prompts import TemplateName, default_templates, load_templates
from .experts.rewarder import Rewarder
from .retrieval import HashingEmbedder, RemoteEmbedder, load_index, load_triples
from .session import (
    ExpertSuite,
    FactRetriever,
    ScriptedUser,
    SessionConfig,
    SimulatedUser,
    UserAgent,
)
from .strategies import StrategyCatalog, default_catalog, load_catalog

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


class ConfigError(ValueError):
    pass


def _interpolate(value, path: str):
    if isinstance(value, str):
        def sub(match: re.Match) -> str:
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"{path}: environment variable {name} is not set")
            return os.environ[name]

        return _ENV_RE.sub(sub, value)
    if isinstance(value, dict):
        return {k: _interpolate(v, f"{path}.{k}") for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v, f"{path}[{i}]") for i, v in enumerate(value)]
    return value


@dataclass
class TrainingSettings:
    sft_lr: float = 6e-6
    rl_lr: float = 1e-4
    beta: float = 0.1
    sft_epochs: int = 10
    rl_epochs: int = 10
    episodes_per_epoch: int = 100
    batch_size: int = 16
    baseline: bool = False
    per_trajectory_updates: bool = False

    def validate(self) -> None:
        if self.sft_lr <= 0 or self.rl_lr <= 0:
            raise ConfigError("training.sft_lr and training.rl_lr must be positive")
        if self.beta < 0:
            raise ConfigError("training.beta must be non-negative")
        if self.batch_size < 1 or self.episodes_per_epoch < 1:
            raise ConfigError("training.batch_size and training.episodes_per_epoch must be >= 1")


@dataclass
class SessionSettings:
    turn_cap: int = 10
    gamma: float = 0.99
    tau: float = 0.8
    reward_samples: int = 10
    k_entities: int = 5
    per_entity_cap: int = 8
    full_transcript_query: bool = False
    seed: int = 0
    pinned_context: Optional[str] = None


@dataclass
class PathsSettings:
    catalog: Optional[str] = None
    prompts_dir: Optional[str] = None
    kg_triples: Optional[str] = None
    entity_index: Optional[str] = None
    corpus: Optional[str] = None
    corpus_schema: str = "normalized"
    run_dir: str = "runs"


@dataclass
class ExpertSettings:
    kind: str = "mock"  # mock | remote | bandit
    # remote settings
    endpoint: Optional[str] = None
    model: Optional[str] = None
    auth_env: Optional[str] = None
    temperature: float = 0.7
    timeout: float = 30.0
    max_retries: int = 2
    protocol: str = "chat"
    embed_endpoint: Optional[str] = None
    embed_model: Optional[str] = None
    embed_dim: int = 256
    # bandit settings
    optimal_strategy: str = "Credibility"


@dataclass
class UserSettings:
    kind: str = "scripted"  # scripted | simulated | live
    opening: Optional[str] = "hi, i am looking for a movie"
    utterances: list[str] = field(default_factory=lambda: ["tell me more", "sounds interesting"])
    cycle: bool = True
    persona: str = "You enjoy character-driven films and dislike jump scares."
    target_item: Optional[str] = None
    reply_timeout_s: float = 900.0


@dataclass
class ServiceSettings:
    host: str = "127.0.0.1"
    port: int = 8700
    max_live_sessions: int = 8
    auth_env: Optional[str] = None
    static_dir: Optional[str] = None
    expose_strategy: bool = False


@dataclass
class RunConfig:
    session: SessionSettings = field(default_factory=SessionSettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    paths: PathsSettings = field(default_factory=PathsSettings)
    experts: ExpertSettings = field(default_factory=ExpertSettings)
    user: UserSettings = field(default_factory=UserSettings)
    service: ServiceSettings = field(default_factory=ServiceSettings)


def _build_section(cls, data: dict, path: str):
    known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown field(s): {', '.join(sorted(unknown))}")
    return cls(**data)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    raw = _interpolate(raw, "config")
    sections = {
        "session": SessionSettings,
        "training": TrainingSettings,
        "paths": PathsSettings,
        "experts": ExpertSettings,
        "user": UserSettings,
        "service": ServiceSettings,
    }
    unknown = set(raw) - set(sections)
    if unknown:
        raise ConfigError(f"{path}: unknown section(s): {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, cls in sections.items():
        data = raw.get(name, {})
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: section '{name}' must be a mapping")
        kwargs[name] = _build_section(cls, data, name)
    config = RunConfig(**kwargs)
    config.training.validate()
    return config


# ---------------------------------------------------------------------------
# Wiring
# ---------------------------------------------------------------------------


def load_catalog_from(config: RunConfig) -> StrategyCatalog:
    if config.paths.catalog:
        return load_catalog(config.paths.catalog)
    return default_catalog()


def _load_templates_from(config: RunConfig):
    if config.paths.prompts_dir:
        return load_templates(config.paths.prompts_dir)
    return default_templates()


def build_expert_suite(config: RunConfig) -> ExpertSuite:
    templates = _load_templates_from(config)
    store = load_triples(config.paths.kg_triples) if config.paths.kg_triples else []

    if config.experts.kind == "bandit":
        return make_bandit_suite(config.experts.optimal_strategy, templates)

    if config.experts.kind == "remote":
        ex = config.experts
        if not ex.endpoint or not ex.model:
            raise ConfigError("experts.endpoint and experts.model are required for kind 'remote'")
        backend = RemoteBackend(
            endpoint=ex.endpoint,
            model=ex.model,
            auth_env=ex.auth_env,
            temperature=ex.temperature,
            timeout=ex.timeout,
            max_retries=ex.max_retries,
            protocol=ex.protocol,
        )
        if ex.embed_endpoint:
            provider = RemoteEmbedder(ex.embed_endpoint, ex.embed_model or ex.model, dim=ex.embed_dim)
        else:
            provider = HashingEmbedder()
        index = (
            load_index(config.paths.entity_index, expect_dim=provider.dim)
            if config.paths.entity_index
            else None
        )
        return ExpertSuite(
            preference=PreferenceReasoner(backend, templates[TemplateName.PREFERENCE_REASONER]),
            actor=Actor(backend, templates[TemplateName.ACTOR]),
            rewarder=Rewarder(backend, templates[TemplateName.REWARDER]),
            retriever=FactRetriever(
                provider=provider,
                index=index,
                store=store,
                k=config.session.k_entities,
                per_entity_cap=config.session.per_entity_cap,
                full_transcript_query=config.session.full_transcript_query,
            ),
        )

    if config.experts.kind == "mock":
        provider = HashingEmbedder()
        index = (
            load_index(config.paths.entity_index, expect_dim=provider.dim)
            if config.paths.entity_index
            else None
        )
        suite = demo_mock_suite(index, store, templates)
        suite.retriever.k = config.session.k_entities
        suite.retriever.per_entity_cap = config.session.per_entity_cap
        suite.retriever.full_transcript_query = config.session.full_transcript_query
        return suite

    raise ConfigError(f"experts.kind must be mock, remote or bandit, got {config.experts.kind!r}")


def build_user_agent(config: RunConfig, templates=None) -> UserAgent:
    u = config.user
    if u.kind == "scripted":
        return ScriptedUser(u.utterances, opening=u.opening, cycle=u.cycle)
    if u.kind == "simulated":
        if config.experts.kind != "remote":
            raise ConfigError("user.kind 'simulated' needs experts.kind 'remote'")
        templates = templates or _load_templates_from(config)
        ex = config.experts
        backend = RemoteBackend(
            endpoint=ex.endpoint,
            model=ex.model,
            auth_env=ex.auth_env,
            temperature=ex.temperature,
            timeout=ex.timeout,
            max_retries=ex.max_retries,
            protocol=ex.protocol,
        )
        return SimulatedUser(
            backend,
            templates[TemplateName.USER_SIMULATOR],
            persona=u.persona,
            target_item=u.target_item,
            opening=u.opening,
        )
    if u.kind == "live":
        raise ConfigError("live users are created per session by the service, not from config")
    raise ConfigError(f"user.kind must be scripted, simulated or live, got {u.kind!r}")


def build_session_config(
    config: RunConfig,
    user: Optional[UserAgent] = None,
    seed: Optional[int] = None,
) -> SessionConfig:
    if config.experts.kind == "bandit":
        # the bandit environment carries its own scripted user
        user = user or ScriptedUser(
            BANDIT_USER_LINES, opening="hi, i am looking for a movie", cycle=True
        )
    return SessionConfig(
        catalog=load_catalog_from(config),
        experts=build_expert_suite(config),
        user=user if user is not None else build_user_agent(config),
        turn_cap=config.session.turn_cap,
        gamma=config.session.gamma,
        tau=config.session.tau,
        reward_samples=config.session.reward_samples,
        rng_seed=seed if seed is not None else config.session.seed,
        pinned_context=config.session.pinned_context,
    )
