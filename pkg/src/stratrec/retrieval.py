"""Fact retrieval: embedding-similarity entity lookup plus a triple store.

Entities are ranked by cosine similarity between a query built from the
latest user utterance and the inferred preference summary, then each
retrieved entity pulls its facts from the knowledge-graph triple store.

File formats (all UTF-8, '#' starts a comment line):
  triples:   head<TAB>relation<TAB>tail
  profiles:  entity name<TAB>profile text
  index:     binary; magic line, JSON header, names, raw float64 vectors

Fact rendering grammar, one triple per line:
  entity — relation: tail
Entity names must not contain " — " and relations must not contain ": ";
tails are free text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np
import requests

from . import kernels
from .features import fnv1a_64, tokenize

EMBED_DIM = 256
_INDEX_MAGIC = b"STRATREC-EIDX-1\n"

FACT_SEP = " — "  # " — "


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


@dataclass
class HashingEmbedder:
    """Deterministic offline embedder: token-hash bucket counts, L2-normalized."""

    dim: int = EMBED_DIM

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim)
        for tok in tokenize(text):
            vec[fnv1a_64(tok.encode("utf-8")) % self.dim] += 1.0
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # text had no alphanumeric tokens; give it a stable direction
            vec[0] = 1.0
            norm = 1.0
        return vec / norm


@dataclass
class RemoteEmbedder:
    """Embeddings-endpoint client ({model, input} -> {data: [{embedding}]})."""

    endpoint: str
    model: str
    dim: int
    timeout: float = 30.0

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ValueError("cannot embed empty text")
        resp = requests.post(
            self.endpoint,
            json={"model": self.model, "input": text},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"embedding dim mismatch: got {vec.shape}, expected ({self.dim},)")
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise ValueError("remote embedder returned a zero vector")
        return vec / norm


@dataclass(frozen=True)
class KnowledgeTriple:
    head: str
    relation: str
    tail: str

    def __post_init__(self) -> None:
        if not (self.head and self.relation and self.tail):
            raise ValueError("triple fields must be non-empty")


@dataclass
class EntityIndex:
    names: list[str]
    profiles: list[str]
    vectors: np.ndarray  # (n, dim), rows L2-normalized

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.names):
            raise ValueError("vector matrix must have one row per entity")
        norms = np.linalg.norm(self.vectors, axis=1)
        if (norms == 0.0).any():
            raise ValueError("entity embeddings must have non-zero norm")

    def __len__(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class FactBundle:
    entities: tuple[tuple[str, float], ...]  # (name, similarity), descending
    triples: tuple[tuple[str, tuple[KnowledgeTriple, ...]], ...]  # grouped by entity
    rendered: str

    def entity_names(self) -> list[str]:
        return [name for name, _ in self.entities]


EMPTY_FACTS = FactBundle(entities=(), triples=(), rendered="")


def load_triples(path: str | Path) -> list[KnowledgeTriple]:
    """Read tab-separated triples, deduplicated on exact equality, order kept."""
    triples: list[KnowledgeTriple] = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        triple = KnowledgeTriple(*(p.strip() for p in parts))
        key = (triple.head, triple.relation, triple.tail)
        if key not in seen:
            seen.add(key)
            triples.append(triple)
    return triples


def load_profiles(path: str | Path) -> list[tuple[str, str]]:
    profiles = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'name<TAB>profile'")
        profiles.append((parts[0].strip(), parts[1].strip()))
    return profiles


def build_index(profiles: Sequence[tuple[str, str]], provider: EmbeddingProvider) -> EntityIndex:
    if not profiles:
        raise ValueError("cannot build an index from zero profiles")
    names = [name for name, _ in profiles]
    texts = [text for _, text in profiles]
    vectors = np.stack([provider.embed(t) for t in texts])
    return EntityIndex(names=names, profiles=texts, vectors=vectors)


def save_index(index: EntityIndex, path: str | Path) -> None:
    header = {
        "dim": index.dim,
        "count": len(index),
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(_INDEX_MAGIC)
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write((json.dumps(index.names) + "\n").encode("utf-8"))
        fh.write((json.dumps(index.profiles) + "\n").encode("utf-8"))
        fh.write(index.vectors.astype("<f8").tobytes())


def load_index(path: str | Path, expect_dim: Optional[int] = None) -> EntityIndex:
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != _INDEX_MAGIC:
            raise ValueError(f"{path}: not an entity index file")
        header = json.loads(fh.readline())
        names = json.loads(fh.readline())
        profiles = json.loads(fh.readline())
        raw = fh.read()
    dim, count = header["dim"], header["count"]
    if expect_dim is not None and dim != expect_dim:
        raise ValueError(f"{path}: index dim {dim} does not match configured provider dim {expect_dim}")
    vectors = np.frombuffer(raw, dtype="<f8").reshape(count, dim).copy()
    return EntityIndex(names=names, profiles=profiles, vectors=vectors)


def retrieve_entities(
    index: EntityIndex,
    query_text: str,
    provider: EmbeddingProvider,
    k: int,
) -> list[tuple[str, float]]:
    """Top-k entities by cosine similarity; ties break by ascending name.

    Ties are detected after rounding similarities to 12 decimals so the
    ranking does not depend on float summation order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise ValueError("entity index is empty")
    q = provider.embed(query_text)
    # index rows and query are unit vectors, so the dot product is the cosine
    sims = kernels.matvec_scores(index.vectors, q)
    order = sorted(range(len(index)), key=lambda i: (-round(sims[i], 12), index.names[i]))
    return [(index.names[i], float(sims[i])) for i in order[: min(k, len(index))]]


def build_query(last_user_text: Optional[str], preference_text: str, transcript: Optional[str] = None) -> str:
    """Entity-retrieval query: latest user utterance + preference summary.

    ``transcript`` swaps in the full conversation when full-transcript
    querying is enabled.
    """
    if transcript is not None:
        return f"{transcript}\n{preference_text}"
    return f"{last_user_text or ''} {preference_text}".strip()


def retrieve_facts(
    store: Sequence[KnowledgeTriple],
    entities: Sequence[tuple[str, float]],
    per_entity_cap: int,
) -> FactBundle:
    """Collect up to ``per_entity_cap`` triples per retrieved entity, store order."""
    if per_entity_cap < 1:
        raise ValueError("per_entity_cap must be >= 1")
    groups = []
    lines = []
    for name, _ in entities:
        matched = tuple(t for t in store if t.head == name)[:per_entity_cap]
        if matched:
            groups.append((name, matched))
            for t in matched:
                lines.append(f"{t.head}{FACT_SEP}{t.relation}: {t.tail}")
    return FactBundle(
        entities=tuple((n, s) for n, s in entities),
        triples=tuple(groups),
        rendered="\n".join(lines),
    )
