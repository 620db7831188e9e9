"""Comparison decoders: unwatermarked, hard green-only, soft logit offset,
and soft with a per-text binary search over the offset grid."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .config import WatermarkConfig
from .detector import detect
from .lm import LogitProvider, log_softmax
from .search import NEG_INF, DecodeResult, Scorer, beam_search


@dataclass(frozen=True)
class SoftParams:
    delta: float
    gamma: float = 0.01
    Z: float = 4.0
    key: int = 0
    T_max: int = 100
    beam_k: int = 1

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")

    @classmethod
    def from_config(cls, cfg: WatermarkConfig, delta: float, beam_k: int = 1) -> "SoftParams":
        return cls(delta, cfg.gamma, cfg.Z, cfg.key, cfg.T_max, beam_k)

    def config(self) -> WatermarkConfig:
        return WatermarkConfig(gamma=self.gamma, Z=self.Z, key=self.key, T_max=self.T_max, beam_k=self.beam_k)


def decode_plain(cfg: WatermarkConfig, model: LogitProvider, prompt: Sequence[int]) -> DecodeResult:
    best = beam_search(Scorer(model, prompt), cfg.beam_k, cfg.T_max)
    return DecodeResult.from_hyp(best)


def decode_hard(cfg: WatermarkConfig, model: LogitProvider, prompt: Sequence[int]) -> DecodeResult:
    """Every token after the first must be green w.r.t. its predecessor (EOS included)."""
    scorer = Scorer(model, prompt)
    params = cfg.partition(scorer.vocab_size)

    def adjust(parent, lp):
        return np.where(params.green_mask(parent.last), lp, NEG_INF)

    return DecodeResult.from_hyp(beam_search(scorer, cfg.beam_k, cfg.T_max, adjust))


def decode_soft(soft: SoftParams, model: LogitProvider, prompt: Sequence[int]) -> DecodeResult:
    """Add ``delta`` to green logits, renormalise, search; first token untouched."""
    scorer = Scorer(model, prompt)
    params = soft.config().partition(scorer.vocab_size)

    def adjust(parent, lp):
        return log_softmax(lp + soft.delta * params.green_mask(parent.last))

    result = DecodeResult.from_hyp(beam_search(scorer, soft.beam_k, soft.T_max, adjust))
    result.info["delta_used"] = soft.delta
    return result


def decode_adaptive_soft(cfg: WatermarkConfig, model: LogitProvider, prompt: Sequence[int]) -> DecodeResult:
    """Smallest offset in ``cfg.delta_grid`` whose soft output passes the z-test.

    Binary search over the ascending grid; falls back to the largest offset
    if none passes. ``info["calls"]`` counts soft decodes performed.
    """
    grid = cfg.delta_grid
    params = cfg.partition(model.vocab_size)
    outputs: dict[int, DecodeResult] = {}

    def run(i: int) -> DecodeResult:
        if i not in outputs:
            outputs[i] = decode_soft(SoftParams.from_config(cfg, grid[i], cfg.beam_k), model, prompt)
        return outputs[i]

    lo, hi, chosen = 0, len(grid) - 1, None
    while lo <= hi:
        mid = (lo + hi) // 2
        if detect(params, run(mid).tokens, cfg.Z).is_watermarked:
            chosen, hi = mid, mid - 1
        else:
            lo = mid + 1
    if chosen is None:
        chosen = len(grid) - 1
    result = run(chosen)
    result.info.update(delta_used=grid[chosen], calls=len(outputs))
    return result
