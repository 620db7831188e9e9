"""Reproducible synthetic text for training the desk-scale n-gram model.

Words sit in ``n_layers`` layers and each word's successors are drawn from
the next couple of layers, so sentences move forward and never cycle. Every
word has its own stopping layer, past which ``.`` becomes likely. That gives
peaked next-token distributions, a greedy decode that terminates, and output
lengths that depend on the prompt.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

PERIOD = "."


def synthetic_corpus(
    n_sentences: int = 20000,
    n_words: int = 2000,
    seed: int = 0,
    fanout: int = 30,
    n_layers: int = 100,
    mean_stop: float = 40.0,
    zipf_s: float = 1.6,
) -> list[list[str]]:
    """Sentences of made-up words, each ending in ``.``.

    A word's successors are ``fanout`` words from the next two layers with
    Zipfian weights ``rank ** -zipf_s``; the chance of stopping ramps up
    once the layer passes the word's (normally distributed) stop layer.
    """
    rng = np.random.default_rng(seed)
    words = [f"w{i:04d}" for i in range(n_words)]
    layer = np.sort(rng.integers(0, n_layers, size=n_words))
    by_layer = [np.flatnonzero(layer == i) for i in range(n_layers)]

    succ = np.full((n_words, fanout), -1, dtype=np.int64)
    cum = np.ones((n_words, fanout))
    zipf = np.arange(1, fanout + 1, dtype=float) ** -zipf_s
    for w in range(n_words):
        pool = np.concatenate([by_layer[i] for i in range(layer[w] + 1, min(layer[w] + 3, n_layers))] + [np.empty(0, int)])
        if len(pool) == 0:
            continue
        k = min(fanout, len(pool))
        succ[w, :k] = rng.choice(pool, size=k, replace=False)
        cum[w, :k] = np.cumsum(zipf[:k]) / zipf[:k].sum()
    stop_layer = rng.normal(mean_stop, mean_stop / 4, size=n_words)
    stop = np.clip((layer - stop_layer + 1) / 4.0, 0.0, 0.9)
    stop[succ[:, 0] < 0] = 1.0
    starts = by_layer[0]
    start_cum = np.cumsum(rng.dirichlet(np.ones(len(starts))))

    corpus = []
    for _ in range(n_sentences):
        w = starts[min(np.searchsorted(start_cum, rng.random()), len(starts) - 1)]
        sent = [words[w]]
        u = rng.random(2 * n_layers + 2)
        i = 0
        while u[i] >= stop[w]:
            w = succ[w, min(np.searchsorted(cum[w], u[i + 1]), fanout - 1)]
            sent.append(words[w])
            i += 2
        sent.append(PERIOD)
        corpus.append(sent)
    return corpus


def read_corpus(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh if line.strip()]


def make_prompts(sentences: Sequence[Sequence[str]], n: int, seed: int = 0, min_len: int = 2, max_len: int = 4) -> list[list[str]]:
    """Sentence-initial word spans used as prompts."""
    rng = np.random.default_rng(seed)
    pool = [s for s in sentences if len(s) > max_len]
    if not pool:
        raise ValueError("no sentence long enough to cut a prompt from")
    out = []
    for _ in range(n):
        s = pool[rng.integers(len(pool))]
        out.append(list(s[: rng.integers(min_len, max_len + 1)]))
    return out


def split_validation_test(items: Sequence, validation_fraction: float = 0.1, seed: int = 0):
    """Shuffle and cut into (validation, test), 10/90 by default."""
    if not 0 < validation_fraction < 1:
        raise ValueError("validation_fraction must be in (0,1)")
    order = np.random.default_rng(seed).permutation(len(items))
    cut = int(round(validation_fraction * len(items)))
    return [items[i] for i in order[:cut]], [items[i] for i in order[cut:]]
