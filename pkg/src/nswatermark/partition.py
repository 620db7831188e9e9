"""Keyed green/red split of the vocabulary, seeded by the previous token.

Every token gets a 64-bit score from ``(key, prev, cand)``; the
``green_size`` lowest scores (ties by id) are green. Generator and detector
call the same code, so the split is bit-identical on both sides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mixing import MASK64, mix64, mix64_array


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def green_size(gamma: float, vocab_size: int) -> int:
    """``max(1, round(gamma * |V|))`` clamped so red is never empty."""
    return min(max(1, round_half_away(gamma * vocab_size)), vocab_size - 1)


def parse_key(text) -> int:
    """Hex string (``0x`` prefix optional) or int; must fit in 64 unsigned bits."""
    value = text if isinstance(text, int) else int(str(text).strip(), 16)
    if value < 0 or value > MASK64:
        raise ValueError(f"key must fit in 64 unsigned bits, got {text!r}")
    return value


def token_score(key: int, prev_id: int, cand_id: int) -> int:
    return mix64(mix64(mix64(key) ^ prev_id) ^ cand_id)


@dataclass(frozen=True)
class Partition:
    green: frozenset
    red: frozenset


@dataclass(frozen=True)
class PartitionParams:
    key: int
    gamma: float
    vocab_size: int
    _masks: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0,1)")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if not 0 <= self.key <= MASK64:
            raise ValueError("key must be an unsigned 64-bit integer")

    @property
    def green_size(self) -> int:
        return green_size(self.gamma, self.vocab_size)

    def scores(self, prev_id: int) -> np.ndarray:
        seed = np.uint64(mix64(mix64(self.key) ^ (prev_id & MASK64)))
        return mix64_array(seed ^ np.arange(self.vocab_size, dtype=np.uint64))

    def green_mask(self, prev_id: int) -> np.ndarray:
        """Read-only boolean mask of green ids after ``prev_id`` (cached)."""
        mask = self._masks.get(prev_id)
        if mask is None:
            order = np.argsort(self.scores(prev_id), kind="stable")
            mask = np.zeros(self.vocab_size, dtype=bool)
            mask[order[: self.green_size]] = True
            mask.flags.writeable = False
            self._masks[prev_id] = mask
        return mask


def partition_for(params: PartitionParams, prev_id: int) -> Partition:
    mask = params.green_mask(prev_id)
    ids = np.arange(params.vocab_size)
    return Partition(frozenset(ids[mask].tolist()), frozenset(ids[~mask].tolist()))


def is_green(params: PartitionParams, prev_id: int, cand_id: int) -> bool:
    return bool(params.green_mask(prev_id)[cand_id])
