"""Linear-time variant: keep the running green count inside a band.

The unwatermarked output length ``T_hat`` fixes a target green rate ``L``;
row ``g`` of column ``t`` is visited only if ``|g - L (t-1)| <= alpha``
(clipped to ``G_max``), so each step touches at most ``2 alpha + 1`` cells.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

from .config import WatermarkConfig
from .lm import LogitProvider
from .ns_decoder import InfeasibleError, fill_table, final_candidates, g_max
from .search import DecodeResult, Scorer, beam_search, best_of


@dataclass(frozen=True)
class LengthEstimate:
    T_hat: int
    source_logprob: float


def estimate_length(model: LogitProvider, prompt: Sequence[int], cfg: WatermarkConfig, scorer: Scorer | None = None) -> LengthEstimate:
    """Emitted length of the plain beam-search output (EOS excluded)."""
    scorer = scorer or Scorer(model, prompt)
    best = beam_search(scorer, cfg.beam_k, cfg.T_max)
    return LengthEstimate(best.length - int(best.ends_with_eos), best.logprob)


def target_rate(cfg: WatermarkConfig, T_hat: int) -> float:
    if T_hat <= 2:
        return 1.0
    return min(1.0, cfg.gamma + cfg.beta + cfg.Z * math.sqrt(cfg.gamma * (1 - cfg.gamma) / (T_hat - 1)))


def band_bounds(cfg: WatermarkConfig, T_hat: int, t: int, G: int | None = None) -> tuple[int, int]:
    G = g_max(cfg) if G is None else G
    centre = target_rate(cfg, T_hat) * (t - 1)
    lo = min(G, max(0, math.ceil(centre - cfg.alpha)))
    hi = min(G, t - 1, math.floor(centre + cfg.alpha))
    return lo, hi


def decode_ns_linear(cfg: WatermarkConfig, model: LogitProvider, prompt: Sequence[int]) -> DecodeResult:
    scorer = Scorer(model, prompt)
    est = estimate_length(model, prompt, cfg, scorer)
    G = g_max(cfg)
    table = fill_table(
        cfg,
        scorer,
        cfg.partition(scorer.vocab_size),
        g_range=lambda t: band_bounds(cfg, est.T_hat, t, G),
    )
    best = best_of(final_candidates(table, cfg))
    if best is None:
        raise InfeasibleError("no feasible watermarked text in band")
    return DecodeResult.from_hyp(best, cells=table.populated, G_max=G, t_hat=est.T_hat)
