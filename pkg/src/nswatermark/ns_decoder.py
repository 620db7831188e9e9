"""Dynamic-programming beam search for the minimum-green-count watermark.

Table cell ``(t, g)`` keeps the ``beam_k`` most probable length-``t`` texts
with exactly ``g`` green words; column ``G_max`` is absorbing and holds texts
with at least ``G_max`` greens. EOS never counts as a word or as green:
an EOS-terminated text is accepted iff its emitted part passes the z-test.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from itertools import islice

import numpy as np

from .config import WatermarkConfig
from .detector import z_score
from .lm import EOS_ID, LogitProvider
from .partition import PartitionParams
from .search import NEG_INF, DecodeResult, Hyp, Scorer, best_of, rank_candidates


class InfeasibleError(RuntimeError):
    pass


def required_green(cfg: WatermarkConfig, T: int) -> float:
    """Real-valued green count a length-``T`` text must reach (margin included)."""
    if T < 2:
        raise ValueError("T must be >= 2")
    n = T - 1
    return (cfg.gamma + cfg.beta) * n + cfg.Z * math.sqrt(cfg.gamma * (1 - cfg.gamma) * n)


def is_feasible(cfg: WatermarkConfig, T: int, green: int) -> bool:
    """``green >= required_green(cfg, T)``, evaluated through the detector's z.

    With ``beta = 0`` this is literally ``z_score(...) >= Z``, so the
    generator and the detector can never disagree on a boundary case.
    """
    if T < 2:
        return False
    return z_score(cfg.gamma, T, green - cfg.beta * (T - 1)) >= cfg.Z


def g_max(cfg: WatermarkConfig) -> int:
    """Smallest green count that is feasible at ``T_max`` (hence at every length)."""
    g = max(0, math.ceil(required_green(cfg, cfg.T_max)))
    while g > 0 and is_feasible(cfg, cfg.T_max, g - 1):
        g -= 1
    while not is_feasible(cfg, cfg.T_max, g):
        g += 1
    return g


@dataclass
class DPTable:
    G_max: int
    beam_k: int
    cells: dict = field(default_factory=dict)
    finished: list = field(default_factory=list)

    def cell(self, t: int, g: int) -> list[Hyp]:
        return self.cells.get((t, g), [])

    @property
    def populated(self) -> int:
        return sum(1 for hyps in self.cells.values() if hyps)


class _Masks:
    """Per-predecessor allowed-token masks for green, red and any extensions."""

    def __init__(self, params: PartitionParams):
        self.params = params
        self._green: dict[int, np.ndarray] = {}
        self._red: dict[int, np.ndarray] = {}

    def green(self, prev: int) -> np.ndarray:
        m = self._green.get(prev)
        if m is None:
            m = self.params.green_mask(prev).copy()
            m[EOS_ID] = False
            self._green[prev] = m
        return m

    def red(self, prev: int) -> np.ndarray:
        m = self._red.get(prev)
        if m is None:
            m = ~self.params.green_mask(prev)
            m[EOS_ID] = True
            self._red[prev] = m
        return m


def branches(t: int, g: int, G: int) -> list[tuple[int, str]]:
    """Source cells ``(g_src, kind)`` feeding cell ``(t, g)``, first match wins."""
    if g == 0:
        return [(0, "red")]
    if g == t - 1:
        return [(g - 1, "green")]
    if g < G:
        return [(g - 1, "green"), (g, "red")]
    if g == G:
        return [(g - 1, "green"), (g, "any")]
    raise ValueError(f"g={g} exceeds G_max={G}")


def feasible_extensions(table: DPTable, t: int, g: int, scorer: Scorer, masks: _Masks):
    """Candidate extensions for cell ``(t, g)``.

    Returns ``(parents, rows)`` where ``rows[i][v]`` is the log-probability of
    ``parents[i] + [v]`` or ``-inf`` when ``v`` is not an allowed extension.
    EOS appears only in red/any rows: it keeps the green count unchanged.
    """
    parents: list[Hyp] = []
    rows: list[np.ndarray] = []
    for g_src, kind in branches(t, g, table.G_max):
        for h in table.cell(t - 1, g_src):
            lp = scorer.logprobs(h)
            if kind == "any":
                row = h.logprob + lp
            else:
                ok = masks.green(h.last) if kind == "green" else masks.red(h.last)
                row = np.where(ok, lp, NEG_INF) + h.logprob
            parents.append(h)
            rows.append(row)
    return parents, rows


def update_cell(table: DPTable, cfg: WatermarkConfig, scorer: Scorer, parents, rows, t: int, g: int) -> None:
    """Pop candidates best-first into ``T[t][g]``; feasible EOS texts go to ``S``."""
    cell: list[Hyp] = []
    for _score, src, tok in rank_candidates(parents, rows, table.beam_k + len(parents)):
        parent = parents[src]
        if tok == EOS_ID:
            if is_feasible(cfg, t - 1, parent.green):
                table.finished.append(scorer.extend(parent, tok, parent.green))
            continue
        cell.append(scorer.extend(parent, tok, g))
        if len(cell) >= table.beam_k:
            break
    table.cells[(t, g)] = cell


GRange = Callable[[int], "tuple[int, int]"]


def fill_table(cfg: WatermarkConfig, scorer: Scorer, params: PartitionParams, g_range: GRange | None = None) -> DPTable:
    """Run the DP. ``g_range(t)`` may narrow the visited rows (inclusive bounds)."""
    G = g_max(cfg)
    table = DPTable(G, cfg.beam_k)
    masks = _Masks(params)
    first = np.array(scorer.logprobs(None))
    first[EOS_ID] = NEG_INF
    table.cells[(1, 0)] = [
        scorer.extend(None, tok, 0) for _s, _src, tok in islice(rank_candidates([None], [first], cfg.beam_k), cfg.beam_k)
    ]
    for t in range(2, cfg.T_max + 1):
        hi = min(t - 1, G)
        lo = 0
        if g_range is not None:
            b_lo, b_hi = g_range(t)
            lo, hi = max(lo, b_lo), min(hi, b_hi)
        for g in range(lo, hi + 1):
            parents, rows = feasible_extensions(table, t, g, scorer, masks)
            update_cell(table, cfg, scorer, parents, rows, t, g)
    return table


def final_candidates(table: DPTable, cfg: WatermarkConfig) -> list[Hyp]:
    return table.finished + table.cell(cfg.T_max, table.G_max)


def decode_ns(cfg: WatermarkConfig, model: LogitProvider, prompt: Sequence[int]) -> DecodeResult:
    """Most probable text whose z-score (after the beta margin) reaches Z."""
    scorer = Scorer(model, prompt)
    table = fill_table(cfg, scorer, cfg.partition(scorer.vocab_size))
    best = best_of(final_candidates(table, cfg))
    if best is None:
        raise InfeasibleError("no feasible watermarked text")
    return DecodeResult.from_hyp(best, cells=table.populated, G_max=table.G_max)
