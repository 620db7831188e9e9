"""Hypotheses, cached scoring and plain beam search shared by every decoder."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from itertools import islice

import numpy as np

from .lm import EOS_ID, LogitProvider, log_softmax

NEG_INF = -np.inf


class Hyp:
    """A partial text stored as a parent-linked list, so extension is O(1).

    ``logprob`` is always under the unmodified model; ``score`` is what the
    search ranks by (equal to ``logprob`` unless a decoder biases logits).
    ``green`` is the decoder's green count (clamped in the absorbing column).
    """

    __slots__ = ("token", "parent", "length", "green", "logprob", "score", "tail")

    def __init__(self, token, parent, length, green, logprob, score, tail):
        self.token = token
        self.parent = parent
        self.length = length
        self.green = green
        self.logprob = logprob
        self.score = score
        self.tail = tail

    @property
    def tokens(self) -> list[int]:
        out = []
        node = self
        while node is not None:
            out.append(node.token)
            node = node.parent
        out.reverse()
        return out

    @property
    def last(self) -> int:
        return self.token

    @property
    def ends_with_eos(self) -> bool:
        return self.token == EOS_ID

    def __repr__(self) -> str:
        return f"Hyp(tokens={self.tokens}, green={self.green}, logprob={self.logprob:.6g})"


class Scorer:
    """Wraps a provider for one prompt, caching log-softmax rows by context."""

    def __init__(self, model: LogitProvider, prompt: Sequence[int]):
        self.model = model
        self.prompt = tuple(int(i) for i in prompt)
        self.vocab_size = int(model.vocab_size)
        self.context_size = getattr(model, "context_size", None)
        self._cache: dict[tuple, np.ndarray] = {}
        self.root_tail = self._trim(self.prompt)
        self.calls = 0

    def _trim(self, seq: tuple) -> tuple:
        m = self.context_size
        if m is None:
            return seq
        return seq[len(seq) - m :] if m else ()

    def child_tail(self, parent: Hyp | None, token: int) -> tuple:
        base = self.root_tail if parent is None else parent.tail
        return self._trim(base + (token,))

    def logprobs(self, hyp: Hyp | None) -> np.ndarray:
        tail = self.root_tail if hyp is None else hyp.tail
        row = self._cache.get(tail)
        if row is None:
            self.calls += 1
            if self.context_size is None:
                raw = self.model.logits(self.prompt, tail[len(self.prompt) :])
            else:
                raw = self.model.logits((), tail)
            raw = np.asarray(raw, dtype=np.float64)
            if raw.shape != (self.vocab_size,):
                raise ValueError(f"wrong logit length: got {raw.shape}, expected ({self.vocab_size},)")
            row = log_softmax(raw)
            row.flags.writeable = False
            self._cache[tail] = row
        return row

    def extend(self, parent: Hyp | None, token: int, green: int, score: float | None = None) -> Hyp:
        lp = float(self.logprobs(parent)[token])
        logprob = lp if parent is None else parent.logprob + lp
        return Hyp(
            token,
            parent,
            1 if parent is None else parent.length + 1,
            green,
            logprob,
            logprob if score is None else score,
            self.child_tail(parent, token),
        )


def rank_candidates(parents: Sequence[Hyp | None], rows: Sequence[np.ndarray], limit: int):
    """Iterate the best ``limit`` (score, source index, token) triples.

    ``rows[i]`` holds candidate scores for extending ``parents[i]``; ``-inf``
    marks a disallowed token. All parents must have the same length. Order
    is descending score, ties broken by the lexicographically smaller full
    token sequence. Ties straddling the cut are all kept, so the result may
    exceed ``limit``.
    """
    if not rows or limit <= 0:
        return iter(())
    v = rows[0].shape[0]
    flat = np.concatenate(rows) if len(rows) > 1 else rows[0]
    finite = np.isfinite(flat)
    n_ok = int(np.count_nonzero(finite))
    if n_ok == 0:
        return iter(())
    if limit < n_ok:
        kth = np.partition(flat[finite], n_ok - limit)[n_ok - limit]
        idx = np.flatnonzero(flat >= kth)
    else:
        idx = np.flatnonzero(finite)
    src, tok, score = idx // v, idx % v, flat[idx]
    order = np.lexsort((tok, src, -score))
    if len(parents) > 1:
        s_src, s_score = src[order], score[order]
        if np.any((s_score[1:] == s_score[:-1]) & (s_src[1:] != s_src[:-1])):
            # equal-length sequences compare by parent first, then by last token
            seqs = [[] if p is None else p.tokens for p in parents]
            rank = np.empty(len(parents), dtype=np.int64)
            rank[sorted(range(len(parents)), key=seqs.__getitem__)] = np.arange(len(parents))
            order = np.lexsort((tok, rank[src], -score))
    return ((float(score[i]), int(src[i]), int(tok[i])) for i in order)


def best_of(hyps: Sequence[Hyp], by: str = "logprob") -> Hyp | None:
    best = None
    for h in hyps:
        if best is None:
            best = h
            continue
        a, b = getattr(h, by), getattr(best, by)
        if a > b or (a == b and h.tokens < best.tokens):
            best = h
    return best


@dataclass
class DecodeResult:
    """Decoder output; ``tokens`` never includes the trailing EOS."""

    tokens: list[int]
    logprob: float
    eos: bool
    info: dict = field(default_factory=dict)

    @property
    def scored_length(self) -> int:
        return len(self.tokens) + int(self.eos)

    @classmethod
    def from_hyp(cls, hyp: Hyp, **info) -> "DecodeResult":
        toks = hyp.tokens
        eos = bool(toks) and toks[-1] == EOS_ID
        return cls(toks[:-1] if eos else toks, hyp.logprob, eos, dict(info))


RowFn = Callable[[Hyp, np.ndarray], np.ndarray]


def beam_search(scorer: Scorer, beam_k: int, T_max: int, adjust: RowFn | None = None) -> Hyp:
    """Beam search without length penalty.

    ``adjust(parent, logprobs)`` returns the per-token search scores for
    positions >= 2 (``-inf`` forbids a token); position 1 is always plain.
    EOS is never allowed at position 1. Candidates are popped best-first:
    EOS ones are finished, others fill the beam up to ``beam_k``. Search
    stops once the best finished text beats every live one, or at ``T_max``.
    """
    first = np.array(scorer.logprobs(None))
    first[EOS_ID] = NEG_INF
    beams: list[Hyp] = []
    for _score, _, tok in islice(rank_candidates([None], [first], beam_k), beam_k):
        beams.append(scorer.extend(None, tok, 0))
    finished: list[Hyp] = []
    for _t in range(2, T_max + 1):
        rows = []
        for h in beams:
            lp = scorer.logprobs(h)
            step = lp if adjust is None else adjust(h, lp)
            rows.append(h.score + step)
        nxt: list[Hyp] = []
        for score, src, tok in rank_candidates(beams, rows, beam_k + len(beams)):
            parent = beams[src]
            child = scorer.extend(parent, tok, parent.green, score)
            if tok == EOS_ID:
                finished.append(child)
            elif len(nxt) < beam_k:
                nxt.append(child)
            if len(nxt) >= beam_k:
                break
        beams = nxt
        best_done = best_of(finished, "score")
        if not beams or (best_done is not None and best_done.score >= max(h.score for h in beams)):
            break
    return best_of(finished + [h for h in beams if h.length == T_max], "score") or best_of(finished, "score")
