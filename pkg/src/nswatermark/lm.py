"""Vocabulary, the smoothed n-gram model and the logit-provider contract."""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

UNK = "<unk>"
EOS = "</s>"
UNK_ID = 0
EOS_ID = 1

MODEL_FORMAT = "nswatermark-ngram"


class Vocabulary:
    """Dense token <-> id map with ``<unk>`` at 0 and ``</s>`` at 1."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tokens[:2] != [UNK, EOS]:
            raise ValueError(f"vocabulary must start with {UNK!r}, {EOS!r}")
        if len(tokens) < 3:
            raise ValueError("vocabulary needs at least one content token")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.tokens = tokens
        self.id_of = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def encode(self, words: Iterable[str]) -> list[int]:
        return [self.id_of.get(w, UNK_ID) for w in words]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def to_text(self, ids: Iterable[int]) -> str:
        return " ".join(self.decode(i for i in ids if i != EOS_ID))

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def tokenize(line: str) -> list[str]:
    return line.split()


def _flatten(corpus) -> list[str]:
    if isinstance(corpus, str):
        return tokenize(corpus)
    out: list[str] = []
    for item in corpus:
        if isinstance(item, str):
            out.extend(tokenize(item))
        else:
            out.extend(item)
    return out


def build_vocab(corpus, min_count: int = 1) -> Vocabulary:
    """Vocabulary of tokens seen at least ``min_count`` times.

    ``corpus`` is a string, an iterable of lines, or an iterable of token
    lists. Ids are assigned by descending frequency, ties alphabetically.
    """
    words = _flatten(corpus)
    if not words:
        raise ValueError("empty corpus")
    counts = Counter(w for w in words if w not in (UNK, EOS))
    kept = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    if not kept:
        raise ValueError(f"no token reaches min_count={min_count}")
    return Vocabulary([UNK, EOS, *kept])


@runtime_checkable
class LogitProvider(Protocol):
    """Anything that maps (prompt ids, generated prefix ids) to |V| logits.

    Providers may expose ``context_size``: an int ``m`` promising that the
    logits depend only on the last ``m`` tokens of ``prompt + prefix``
    (left-padded by the provider as it sees fit). ``None`` means unbounded.
    """

    vocab_size: int

    def logits(self, prompt: Sequence[int], prefix: Sequence[int]) -> np.ndarray: ...


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits)
    shifted = logits - m
    return shifted - math.log(np.exp(shifted).sum())


class NGramModel:
    """Additively smoothed n-gram model.

    Each training sentence is left-padded with ``order - 1`` EOS tokens and
    terminated by one EOS, so the model learns both sentence starts and when
    to stop. ``logits`` returns exact log-probabilities.
    """

    def __init__(self, vocabulary: Vocabulary, order: int = 3, smoothing_alpha: float = 0.1, counts=None):
        if order < 1:
            raise ValueError("order must be >= 1")
        if not smoothing_alpha > 0:
            raise ValueError("smoothing_alpha must be positive")
        self.vocabulary = vocabulary
        self.order = order
        self.smoothing_alpha = float(smoothing_alpha)
        self.counts: dict[tuple[int, ...], dict[int, float]] = {}
        self.totals: dict[tuple[int, ...], float] = {}
        for ctx, row in (counts or {}).items():
            self.counts[tuple(ctx)] = dict(row)
        for ctx, row in self.counts.items():
            if len(ctx) != order - 1:
                raise ValueError(f"context {ctx} has wrong length for order {order}")
            self.totals[ctx] = float(sum(row.values()))
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    @property
    def context_size(self) -> int:
        return self.order - 1

    def context(self, prompt: Sequence[int], prefix: Sequence[int]) -> tuple[int, ...]:
        m = self.order - 1
        if m == 0:
            return ()
        seq = [*prompt, *prefix][-m:]
        return (EOS_ID,) * (m - len(seq)) + tuple(seq)

    def _check_ids(self, ids: Iterable[int]) -> None:
        v = self.vocab_size
        for i in ids:
            if not 0 <= i < v:
                raise ValueError(f"token id {i} out of range for |V|={v}")

    def logprobs_for_context(self, ctx: tuple[int, ...]) -> np.ndarray:
        cached = self._cache.get(ctx)
        if cached is not None:
            return cached
        v = self.vocab_size
        a = self.smoothing_alpha
        num = np.full(v, a)
        row = self.counts.get(ctx)
        total = 0.0
        if row:
            ids = np.fromiter(row.keys(), dtype=np.int64, count=len(row))
            num[ids] += np.fromiter(row.values(), dtype=np.float64, count=len(row))
            total = self.totals[ctx]
        out = np.log(num) - math.log(total + a * v)
        out.flags.writeable = False
        self._cache[ctx] = out
        return out

    def prob(self, token: int, ctx: Sequence[int]) -> float:
        return float(math.exp(self.logprobs_for_context(tuple(ctx))[token]))

    def logits(self, prompt: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        self._check_ids(prompt)
        self._check_ids(prefix)
        return self.logprobs_for_context(self.context(prompt, prefix))

    def save(self, path) -> None:
        rows = [[*ctx, tok, c] for ctx, row in sorted(self.counts.items()) for tok, c in sorted(row.items())]
        doc = {
            "format": MODEL_FORMAT,
            "version": 1,
            "order": self.order,
            "smoothing_alpha": self.smoothing_alpha,
            "tokens": self.vocabulary.tokens,
            "counts": rows,
        }
        Path(path).write_text(json.dumps(doc), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NGramModel":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
        order = int(doc["order"])
        counts: dict[tuple[int, ...], dict[int, float]] = defaultdict(dict)
        for row in doc["counts"]:
            ctx, tok, c = tuple(row[: order - 1]), row[order - 1], row[order]
            counts[ctx][tok] = c
        return cls(Vocabulary(doc["tokens"]), order, doc["smoothing_alpha"], counts)


def train_ngram(
    corpus,
    order: int = 3,
    smoothing_alpha: float = 0.1,
    vocabulary: Vocabulary | None = None,
    min_count: int = 1,
) -> NGramModel:
    """Count n-grams over ``corpus`` (lines or token lists, one per sentence)."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if isinstance(corpus, str):
        corpus = [corpus]
    sentences = [tokenize(s) if isinstance(s, str) else list(s) for s in corpus]
    sentences = [s for s in sentences if s]
    if vocabulary is None:
        vocabulary = build_vocab(sentences, min_count)
    pad = [EOS_ID] * (order - 1)
    counts: dict[tuple[int, ...], dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for sent in sentences:
        ids = pad + vocabulary.encode(sent) + [EOS_ID]
        for i in range(order - 1, len(ids)):
            counts[tuple(ids[i - order + 1 : i])][ids[i]] += 1
    return NGramModel(vocabulary, order, smoothing_alpha, counts)


def sequence_logprob(model: LogitProvider, prompt: Sequence[int], tokens: Sequence[int]) -> float:
    """Chain-rule log-probability of ``tokens`` following ``prompt``."""
    if len(tokens) == 0:
        raise ValueError("tokens must be nonempty")
    total = 0.0
    for t, tok in enumerate(tokens):
        lp = log_softmax(np.asarray(model.logits(prompt, tokens[:t]), dtype=np.float64))
        if not 0 <= tok < len(lp):
            raise ValueError(f"token id {tok} out of range for |V|={len(lp)}")
        total += float(lp[tok])
    return total
