"""The closed catalog of macro-level dialogue strategies.

Thirteen strategies in three groups: nine sociable moves, three preference
elicitation inquiries, and one non-strategy fallback. The instruction text
travels verbatim into actor prompts, so deployments can retune wording by
editing a catalog file instead of the code.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional

N_STRATEGIES = 13


class StrategyCategory(str, Enum):
    SOCIABLE = "sociable"
    PREFERENCE_ELICITATION = "preference_elicitation"
    NON_STRATEGY = "non_strategy"


@dataclass(frozen=True)
class StrategyDef:
    id: int
    name: str
    category: StrategyCategory
    instruction: str


_DEFAULT_TABLE = (
    (StrategyCategory.SOCIABLE, "Credibility",
     "Provide factual information about the item attributes to demonstrate expertise."),
    (StrategyCategory.SOCIABLE, "Personal Opinion",
     "Express subjective opinion about the item without contradicting given factual information."),
    (StrategyCategory.SOCIABLE, "Encouragement",
     "Compliment the user's taste and encourage them to try the recommended item."),
    (StrategyCategory.SOCIABLE, "Acknowledgment",
     "Use short, cheerful responses to convey excitement or appreciation."),
    (StrategyCategory.SOCIABLE, "Similarity",
     "Express similar preferences or opinions, or show agreement with the user's views."),
    (StrategyCategory.SOCIABLE, "Offer Help",
     "Offer assistance in finding suitable recommendations."),
    (StrategyCategory.SOCIABLE, "Personal Experience",
     "Share your own experience related to the recommended item."),
    (StrategyCategory.SOCIABLE, "Self Modeling",
     "Model behavior by stating your own positive reaction to the recommended item."),
    (StrategyCategory.SOCIABLE, "Transparency",
     "Be honest about the recommendation logic or confirm user preferences before recommending."),
    (StrategyCategory.PREFERENCE_ELICITATION, "Opinion Inquiry",
     "Ask about the user's opinion on specific item attributes."),
    (StrategyCategory.PREFERENCE_ELICITATION, "Experience Inquiry",
     "Ask about the user's past experiences to gather more information about their preferences."),
    (StrategyCategory.PREFERENCE_ELICITATION, "Rephrase Preference",
     "Rephrase the inferred user preferences to confirm understanding."),
    (StrategyCategory.NON_STRATEGY, "No Strategy",
     "Chat naturally with the user without following any specific conversational strategy."),
)


@dataclass(frozen=True)
class StrategyCatalog:
    """Immutable, index-ordered set of strategy definitions."""

    defs: tuple[StrategyDef, ...]

    def __post_init__(self) -> None:
        if len(self.defs) != N_STRATEGIES:
            raise ValueError(f"catalog must hold exactly {N_STRATEGIES} strategies, got {len(self.defs)}")
        for i, d in enumerate(self.defs):
            if d.id != i:
                raise ValueError(f"strategy ids must be dense and ordered; slot {i} holds id {d.id}")
        names = [d.name.casefold() for d in self.defs]
        if len(set(names)) != N_STRATEGIES:
            raise ValueError("strategy names must be unique")
        if len({d.instruction for d in self.defs}) != N_STRATEGIES:
            raise ValueError("strategy instructions must be unique")

    def __iter__(self) -> Iterator[StrategyDef]:
        return iter(self.defs)

    def __len__(self) -> int:
        return len(self.defs)

    def by_id(self, strategy_id: int) -> StrategyDef:
        return self.defs[strategy_id]

    def names(self) -> list[str]:
        return [d.name for d in self.defs]


def default_catalog() -> StrategyCatalog:
    """The built-in 13-strategy catalog (9 sociable / 3 elicitation / 1 fallback)."""
    defs = tuple(
        StrategyDef(id=i, name=name, category=cat, instruction=instr)
        for i, (cat, name, instr) in enumerate(_DEFAULT_TABLE)
    )
    return StrategyCatalog(defs)


def strategy_by_name(catalog: StrategyCatalog, name: str) -> Optional[int]:
    """Resolve a strategy name to its id; case-insensitive, whitespace-trimmed.

    Returns None for unknown names so corpus ingestion can surface unmapped
    annotations instead of guessing.
    """
    key = name.strip().casefold()
    for d in catalog.defs:
        if d.name.casefold() == key:
            return d.id
    return None


def save_catalog(catalog: StrategyCatalog, path: str | Path) -> None:
    """Write the catalog as an editable tab-separated file (id, name, category, instruction)."""
    lines = ["id\tname\tcategory\tinstruction"]
    for d in catalog.defs:
        lines.append(f"{d.id}\t{d.name}\t{d.category.value}\t{d.instruction}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_catalog(path: str | Path) -> StrategyCatalog:
    """Parse a catalog file written by :func:`save_catalog`."""
    raw = Path(path).read_text(encoding="utf-8").splitlines()
    rows = [ln for ln in raw if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0].split("\t")[:2] != ["id", "name"]:
        raise ValueError(f"{path}: missing catalog header line")
    defs = []
    for ln in rows[1:]:
        parts = ln.split("\t")
        if len(parts) != 4:
            raise ValueError(f"{path}: expected 4 tab-separated fields, got {len(parts)}: {ln!r}")
        idx, name, cat, instr = parts
        defs.append(StrategyDef(id=int(idx), name=name, category=StrategyCategory(cat), instruction=instr))
    defs.sort(key=lambda d: d.id)
    return StrategyCatalog(tuple(defs))
