"""Corpus ingestion: dialogue loaders, supervised-pair extraction, and the
bundled synthetic corpus generator.

Three input schemas are supported:
  normalized  this package's own format: JSON lines with fields
              {dialogue_id, turn_index, role, text, strategy?, items?, gold_item?}
  inspired    tab-separated with a header row; required columns dialog_id,
              speaker, text; optional strategy, movies (';'-separated), gold_item
  redial      JSON lines, one conversation per line: {conversationId,
              messages: [{senderWorkerId, text}], initiatorWorkerId,
              respondentWorkerId, movieMentions}; the initiator is the seeker

Malformed records are skipped with a logged diagnostic, never silently.
Consecutive same-role turns are merged on load so downstream states keep
strict speaker alternation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dialogue import DialogueState, apply_system_turn, apply_user_turn, new_session
from .retrieval import load_triples
from .strategies import StrategyCatalog, default_catalog, strategy_by_name

log = logging.getLogger(__name__)

ROLE_RECOMMENDER = "recommender"
ROLE_SEEKER = "seeker"
_ROLES = (ROLE_RECOMMENDER, ROLE_SEEKER)

SCHEMAS = ("normalized", "inspired", "redial")


@dataclass(frozen=True)
class RawTurn:
    role: str
    text: str
    strategy: Optional[str] = None
    items: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"unknown role: {self.role}")
        if not self.text.strip():
            raise ValueError("turn text must be non-empty")


@dataclass(frozen=True)
class RawDialogue:
    dialogue_id: str
    turns: tuple[RawTurn, ...]
    gold_item: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.turns:
            raise ValueError("dialogue must hold at least one turn")


@dataclass
class SftPair:
    state: DialogueState
    gold: int


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------


def load_corpus(path: str | Path, schema: str) -> list[RawDialogue]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"corpus file not found: {path}")
    if schema == "normalized":
        dialogues = _load_normalized(path)
    elif schema == "inspired":
        dialogues = _load_inspired(path)
    elif schema == "redial":
        dialogues = _load_redial(path)
    else:
        raise ValueError(f"unknown corpus schema: {schema!r} (expected one of {SCHEMAS})")
    return dialogues


def _merge_turns(turns: list[RawTurn]) -> tuple[RawTurn, ...]:
    merged: list[RawTurn] = []
    for t in turns:
        if merged and merged[-1].role == t.role:
            prev = merged[-1]
            merged[-1] = RawTurn(
                role=prev.role,
                text=prev.text + "\n" + t.text,
                strategy=prev.strategy or t.strategy,
                items=prev.items + t.items,
            )
        else:
            merged.append(t)
    return tuple(merged)


def _load_normalized(path: Path) -> list[RawDialogue]:
    groups: dict[str, list[tuple[int, RawTurn, Optional[str]]]] = {}
    skipped = total = 0
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        total += 1
        try:
            rec = json.loads(line)
            turn = RawTurn(
                role=rec["role"],
                text=rec["text"],
                strategy=rec.get("strategy"),
                items=tuple(rec.get("items", [])),
            )
            groups.setdefault(rec["dialogue_id"], []).append(
                (int(rec["turn_index"]), turn, rec.get("gold_item"))
            )
        except (KeyError, ValueError, TypeError) as exc:
            skipped += 1
            log.warning("%s:%d: skipped malformed record: %s", path, lineno, exc)
    dialogues = []
    for did, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        gold = next((g for _, _, g in rows if g), None)
        dialogues.append(RawDialogue(did, _merge_turns([t for _, t, _ in rows]), gold_item=gold))
    log.info("%s: loaded %d dialogues (%d/%d records skipped)", path, len(dialogues), skipped, total)
    return dialogues


def save_normalized(dialogues: Sequence[RawDialogue], path: str | Path) -> None:
    lines = []
    for d in dialogues:
        for i, t in enumerate(d.turns, 1):
            rec = {"dialogue_id": d.dialogue_id, "turn_index": i, "role": t.role, "text": t.text}
            if t.strategy:
                rec["strategy"] = t.strategy
            if t.items:
                rec["items"] = list(t.items)
            if i == 1 and d.gold_item:
                rec["gold_item"] = d.gold_item
            lines.append(json.dumps(rec, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_inspired(path: Path) -> list[RawDialogue]:
    rows = path.read_text(encoding="utf-8").splitlines()
    if not rows:
        return []
    header = rows[0].split("\t")
    required = ("dialog_id", "speaker", "text")
    for col in required:
        if col not in header:
            raise ValueError(f"{path}: inspired schema needs column '{col}'")
    col = {name: i for i, name in enumerate(header)}
    role_map = {"RECOMMENDER": ROLE_RECOMMENDER, "SEEKER": ROLE_SEEKER}
    groups: dict[str, list[RawTurn]] = {}
    gold: dict[str, str] = {}
    skipped = total = 0
    for lineno, line in enumerate(rows[1:], 2):
        if not line.strip():
            continue
        total += 1
        parts = line.split("\t")
        try:
            speaker = parts[col["speaker"]].strip().upper()
            if speaker not in role_map:
                raise ValueError(f"unknown speaker role {speaker!r}")
            items = ()
            if "movies" in col and len(parts) > col["movies"] and parts[col["movies"]].strip():
                items = tuple(m.strip() for m in parts[col["movies"]].split(";") if m.strip())
            strategy = None
            if "strategy" in col and len(parts) > col["strategy"] and parts[col["strategy"]].strip():
                strategy = parts[col["strategy"]].strip()
            did = parts[col["dialog_id"]].strip()
            groups.setdefault(did, []).append(
                RawTurn(role=role_map[speaker], text=parts[col["text"]], strategy=strategy, items=items)
            )
            if "gold_item" in col and len(parts) > col["gold_item"] and parts[col["gold_item"]].strip():
                gold.setdefault(did, parts[col["gold_item"]].strip())
        except (IndexError, ValueError) as exc:
            skipped += 1
            log.warning("%s:%d: skipped malformed record: %s", path, lineno, exc)
    dialogues = [
        RawDialogue(did, _merge_turns(turns), gold_item=gold.get(did)) for did, turns in groups.items()
    ]
    log.info("%s: loaded %d dialogues (%d/%d records skipped)", path, len(dialogues), skipped, total)
    return dialogues


def _load_redial(path: Path) -> list[RawDialogue]:
    dialogues = []
    skipped = total = 0
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        total += 1
        try:
            rec = json.loads(line)
            seeker_id = rec["initiatorWorkerId"]
            mentions = rec.get("movieMentions") or {}
            turns = []
            for msg in rec["messages"]:
                text = msg["text"]
                if not str(text).strip():
                    continue
                role = ROLE_SEEKER if msg["senderWorkerId"] == seeker_id else ROLE_RECOMMENDER
                items = tuple(title for mid, title in mentions.items() if f"@{mid}" in text)
                for mid, title in mentions.items():
                    text = text.replace(f"@{mid}", title)
                turns.append(RawTurn(role=role, text=text, items=items))
            if not turns:
                raise ValueError("conversation has no usable messages")
            gold = next(iter(mentions.values()), None)
            dialogues.append(
                RawDialogue(str(rec["conversationId"]), _merge_turns(turns), gold_item=gold)
            )
        except (KeyError, ValueError, TypeError) as exc:
            skipped += 1
            log.warning("%s:%d: skipped malformed record: %s", path, lineno, exc)
    log.info("%s: loaded %d dialogues (%d/%d records skipped)", path, len(dialogues), skipped, total)
    return dialogues


# ---------------------------------------------------------------------------
# Supervised pairs
# ---------------------------------------------------------------------------


def load_strategy_aliases(path: Optional[str | Path] = None) -> dict[str, str]:
    """Annotation-label to catalog-name mapping; the bundled table covers the
    label spellings used by strategy-annotated recommendation corpora."""
    if path is not None:
        raw = Path(path).read_text(encoding="utf-8")
    else:
        raw = resources.files("stratrec").joinpath("assets/strategy_aliases.json").read_text(encoding="utf-8")
    table = json.loads(raw)
    return {str(k).strip().casefold(): str(v) for k, v in table.items()}


def _resolve_annotation(annotation: str, catalog: StrategyCatalog, aliases: dict[str, str]) -> Optional[int]:
    key = annotation.strip().casefold()
    mapped = aliases.get(key, annotation)
    return strategy_by_name(catalog, mapped)


def extract_sft_pairs(
    dialogues: Sequence[RawDialogue],
    catalog: StrategyCatalog,
    aliases: Optional[dict[str, str]] = None,
) -> tuple[list[SftPair], list[str]]:
    """Emit (dialogue-prefix state, gold strategy) pairs for every annotated
    recommender turn whose label maps into the catalog.

    Unmapped annotation strings come back for audit. Earlier recommender
    turns with missing or unmapped labels are booked under the fallback
    strategy so state counts stay consistent.
    """
    aliases = aliases if aliases is not None else load_strategy_aliases()
    fallback = strategy_by_name(catalog, "No Strategy")
    assert fallback is not None
    pairs: list[SftPair] = []
    unmapped: list[str] = []
    for d in dialogues:
        state = new_session(d.dialogue_id)
        for turn in d.turns:
            if turn.role == ROLE_SEEKER:
                state = apply_user_turn(state, turn.text)
                continue
            if turn.strategy is not None:
                gold = _resolve_annotation(turn.strategy, catalog, aliases)
                if gold is None:
                    unmapped.append(turn.strategy)
                else:
                    pairs.append(SftPair(state=state, gold=gold))
                booked = gold if gold is not None else fallback
            else:
                booked = fallback
            state = apply_system_turn(state, booked, turn.text)
    return pairs, unmapped


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

_GENRE_OPENERS = (
    "hi, can you find me a good {genre} movie?",
    "hello! i am in the mood for something {genre} tonight",
    "hey, any {genre} recommendations?",
)
_SEEKER_FOLLOWUPS = (
    "interesting, tell me more about it",
    "hmm, what makes it special?",
    "i have not heard of that one",
    "sounds promising, is it well rated?",
)
_ACCEPT_LINE = "great, i will watch {title}!"

_RECOMMENDER_LINES = {
    "Credibility": "<<{title}>> is a {genre} film from {year}, directed by {director}.",
    "Personal Opinion": "Personally I find <<{title}>> a remarkably fresh take on {genre}.",
    "Encouragement": "You clearly have great taste, you should give <<{title}>> a try.",
    "Acknowledgment": "Oh nice, love that energy!",
    "Similarity": "I also enjoy {genre} films, we have similar taste.",
    "Offer Help": "Happy to help you find the right {genre} pick.",
    "Personal Experience": "I watched <<{title}>> last weekend and had a great time.",
    "Self Modeling": "I would absolutely rewatch <<{title}>> myself.",
    "Transparency": "Since you asked for {genre}, I am basing my pick on that.",
    "Opinion Inquiry": "How do you feel about {genre} films with a slower pace?",
    "Experience Inquiry": "What was the last {genre} movie you really enjoyed?",
    "Rephrase Preference": "So you are after a {genre} film, correct?",
    "No Strategy": "Movies are a great way to spend an evening.",
}


def bundled_kg_paths() -> tuple[Path, Path]:
    """Paths of the bundled synthetic knowledge graph (triples, profiles)."""
    root = resources.files("stratrec").joinpath("assets")
    return Path(str(root.joinpath("kg_triples.tsv"))), Path(str(root.joinpath("entity_profiles.tsv")))


def _bundled_items() -> list[dict[str, str]]:
    triples_path, _ = bundled_kg_paths()
    items: dict[str, dict[str, str]] = {}
    for t in load_triples(triples_path):
        items.setdefault(t.head, {"title": t.head})[t.relation] = t.tail
    return [v for v in items.values() if "genre" in v and "year" in v and "director" in v]


_CHAIN_STEP = 5  # coprime with 13, so successors cycle through every strategy


def _start_strategy(genre: str) -> int:
    from .features import fnv1a_64

    return fnv1a_64(genre.encode("utf-8")) % 13


def generate_synthetic_corpus(
    seed: int,
    n_dialogues: int,
    favored_strategy: Optional[str] = None,
    favored_weight: float = 0.5,
) -> tuple[list[RawDialogue], dict]:
    """Deterministic template dialogues with strategy annotations and planted
    gold items from the bundled knowledge graph.

    Annotations follow a learnable rule: the first recommender turn's
    strategy is keyed to the opener's genre, and each later turn follows a
    fixed successor chain over the catalog. ``favored_strategy`` mixes in
    one catalog strategy with probability ``favored_weight`` (used to build
    warm-up corpora for known-optimum training runs).
    """
    if n_dialogues < 1:
        raise ValueError("n_dialogues must be >= 1")
    catalog = default_catalog()
    names = catalog.names()
    rng = np.random.default_rng(seed)
    items = _bundled_items()

    favored_id: Optional[int] = None
    if favored_strategy is not None:
        if favored_strategy not in names:
            raise ValueError(f"favored strategy not in catalog: {favored_strategy}")
        favored_id = names.index(favored_strategy)

    dialogues = []
    n_annotated = 0
    n_utterances = 0
    strategy_counts: dict[str, int] = {}
    for i in range(n_dialogues):
        item = items[int(rng.integers(len(items)))]
        n_rec_turns = int(rng.integers(2, 5))
        turns = [
            RawTurn(
                role=ROLE_SEEKER,
                text=_GENRE_OPENERS[int(rng.integers(len(_GENRE_OPENERS)))].format(genre=item["genre"]),
            )
        ]
        sid = _start_strategy(item["genre"])
        for turn_i in range(n_rec_turns):
            if turn_i > 0:
                sid = (sid + _CHAIN_STEP) % 13
            chosen = sid
            if favored_id is not None and rng.random() < favored_weight:
                chosen = favored_id
            name = names[chosen]
            text = _RECOMMENDER_LINES[name].format(**item)
            marked = tuple([item["title"]] if "<<" in text else [])
            turns.append(RawTurn(role=ROLE_RECOMMENDER, text=text, strategy=name, items=marked))
            n_annotated += 1
            strategy_counts[name] = strategy_counts.get(name, 0) + 1
            last = turn_i == n_rec_turns - 1
            reply = (
                _ACCEPT_LINE.format(title=item["title"])
                if last
                else _SEEKER_FOLLOWUPS[int(rng.integers(len(_SEEKER_FOLLOWUPS)))]
            )
            turns.append(RawTurn(role=ROLE_SEEKER, text=reply))
        n_utterances += len(turns)
        dialogues.append(RawDialogue(f"syn-{seed}-{i:04d}", tuple(turns), gold_item=item["title"]))

    manifest = {
        "seed": seed,
        "n_dialogues": n_dialogues,
        "n_utterances": n_utterances,
        "n_annotated_recommender_turns": n_annotated,
        "strategy_counts": dict(sorted(strategy_counts.items())),
    }
    return dialogues, manifest
