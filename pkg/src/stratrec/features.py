"""Planner input featurization.

The planner conditions on a fixed sparse layout over D = 4131 slots:

    [0]          bias, always 1
    [1..14]      one-hot previous strategy; slot 1 = none, slot 2+id otherwise
    [15]         turn / turn_cap
    [16..28]     per-strategy usage counts, clipped to 5 then divided by 5
    [29..34]     last-reward bucket one-hot:
                 missing, [0,.2), [.2,.4), [.4,.6), [.6,.8), [.8,1]
    [35..4130]   hashed unigrams + bigrams of the latest user utterance,
                 4096 buckets, value = occurrence count

Text hashing is 64-bit FNV-1a over lowercase tokens (split on
non-alphanumerics), bigram key = the two tokens joined by one space. An
external text encoder can replace the hashed block with a dense vector of
the same width; the layout version string tracks which encoding a
checkpoint was trained against.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dialogue import DialogueState

BIAS_SLOT = 0
PREV_STRATEGY_OFFSET = 1  # 14 slots, slot 0 of the group = "none"
TURN_FRACTION_SLOT = 15
USAGE_OFFSET = 16  # 13 slots
REWARD_BUCKET_OFFSET = 29  # 6 slots, slot 0 of the group = "missing"
TEXT_OFFSET = 35
TEXT_BUCKETS = 4096
FEATURE_DIM = TEXT_OFFSET + TEXT_BUCKETS  # 4131

LAYOUT_VERSION = "fv1:hash4096"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_TOKEN_RE = re.compile(r"[0-9a-z]+")

TextEncoder = Callable[[str], np.ndarray]


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a; deterministic and portable across platforms."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def text_bucket(key: str) -> int:
    return fnv1a_64(key.encode("utf-8")) % TEXT_BUCKETS


@dataclass(frozen=True)
class FeatureVector:
    """Sparse feature vector: sorted unique indices with parallel values."""

    indices: np.ndarray  # int64, strictly increasing
    values: np.ndarray  # float64
    dim: int = FEATURE_DIM

    def __post_init__(self) -> None:
        if self.indices.shape != self.values.shape:
            raise ValueError("indices and values must align")
        if len(self.indices) and (np.diff(self.indices) <= 0).any():
            raise ValueError("indices must be strictly increasing")
        if not np.isfinite(self.values).all():
            raise ValueError("feature values must be finite")

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[self.indices] = self.values
        return dense

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.indices.astype("<i8").tobytes())
        h.update(self.values.astype("<f8").tobytes())
        return h.hexdigest()[:16]


def _from_slots(slots: dict[int, float], dim: int = FEATURE_DIM) -> FeatureVector:
    idx = np.array(sorted(slots), dtype=np.int64)
    vals = np.array([slots[i] for i in idx], dtype=np.float64)
    return FeatureVector(indices=idx, values=vals, dim=dim)


def reward_bucket(last_reward: Optional[float]) -> int:
    """Bucket offset within the reward group: 0 = missing, 1..5 = fifths of [0,1]."""
    if last_reward is None:
        return 0
    if last_reward >= 1.0:
        return 5
    return 1 + int(last_reward * 5)


def extract_features(
    state: DialogueState,
    turn_cap: int,
    text_encoder: Optional[TextEncoder] = None,
) -> FeatureVector:
    """Deterministic featurization of a dialogue state.

    ``text_encoder``, when given, must return a dense vector of width
    ``TEXT_BUCKETS`` that replaces the hashed-text block.
    """
    slots: dict[int, float] = {BIAS_SLOT: 1.0}

    prev = 0 if state.last_strategy is None else 1 + state.last_strategy
    slots[PREV_STRATEGY_OFFSET + prev] = 1.0

    slots[TURN_FRACTION_SLOT] = state.turn / turn_cap

    for sid, count in enumerate(state.strategy_counts):
        if count:
            slots[USAGE_OFFSET + sid] = min(count, 5) / 5.0

    slots[REWARD_BUCKET_OFFSET + reward_bucket(state.last_reward)] = 1.0

    text = state.last_user_text()
    if text is not None:
        if text_encoder is not None:
            dense = np.asarray(text_encoder(text), dtype=np.float64)
            if dense.shape != (TEXT_BUCKETS,):
                raise ValueError(f"text encoder must return shape ({TEXT_BUCKETS},), got {dense.shape}")
            for j in np.nonzero(dense)[0]:
                slots[TEXT_OFFSET + int(j)] = float(dense[j])
        else:
            tokens = tokenize(text)
            for tok in tokens:
                slot = TEXT_OFFSET + text_bucket(tok)
                slots[slot] = slots.get(slot, 0.0) + 1.0
            for a, b in zip(tokens, tokens[1:]):
                slot = TEXT_OFFSET + text_bucket(f"{a} {b}")
                slots[slot] = slots.get(slot, 0.0) + 1.0

    return _from_slots(slots)
