"""Green-word counting and the one-sided z-test."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np

from .lm import EOS_ID
from .partition import PartitionParams


@dataclass(frozen=True)
class DetectionReport:
    length_T: int
    green_count: int
    z: float
    threshold_Z: float
    is_watermarked: bool

    def to_json(self) -> dict:
        return {"T": self.length_T, "green": self.green_count, "z": self.z, "watermarked": self.is_watermarked}

    def asdict(self) -> dict:
        return asdict(self)


def count_green(params: PartitionParams, tokens: Sequence[int]) -> int:
    """Number of positions 2..T whose token is green w.r.t. its predecessor."""
    return sum(bool(params.green_mask(prev)[cur]) for prev, cur in zip(tokens, tokens[1:]))


def z_score(gamma: float, length_T: int, green_count: int) -> float:
    if length_T < 2:
        raise ValueError("text too short to score")
    if not 0 < gamma < 1:
        raise ValueError("gamma must be in (0,1)")
    n = length_T - 1
    return (green_count - gamma * n) / math.sqrt(gamma * (1 - gamma) * n)


def strip_eos(tokens: Sequence[int]) -> list[int]:
    tokens = list(tokens)
    if tokens and tokens[-1] == EOS_ID:
        tokens.pop()
    return tokens


def detect(params: PartitionParams, tokens: Sequence[int], Z: float) -> DetectionReport:
    """Score a token-id sequence; a trailing EOS is ignored, T < 2 is never flagged."""
    tokens = strip_eos(tokens)
    T = len(tokens)
    if T < 2:
        return DetectionReport(T, 0, -math.inf, Z, False)
    g = count_green(params, tokens)
    z = z_score(params.gamma, T, g)
    return DetectionReport(T, g, z, Z, z >= Z)


def detect_text(params: PartitionParams, vocabulary, text: str, Z: float) -> DetectionReport:
    return detect(params, vocabulary.encode(text.split()), Z)


def null_exceedance(gamma: float, T: int, Z: float, draws: int, rng: np.random.Generator) -> float:
    """Monte-Carlo P(z >= Z) when every pair is green independently with prob gamma."""
    greens = rng.binomial(T - 1, gamma, size=draws)
    z = (greens - gamma * (T - 1)) / math.sqrt(gamma * (1 - gamma) * (T - 1))
    return float(np.mean(z >= Z))
