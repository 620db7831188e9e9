"""Monte-Carlo model of the adaptively tuned soft watermark.

Idealized setting: greedy decoding, per-position logit gaps ``L_t`` (chosen
logit minus best green logit) i.i.d. from a continuous law, a continuum of
bias values, and a single green word being enough to pass detection. The
tuned bias is then ``min_t L_t``, the first green lands at the argmin, and
each later position turns green independently with probability
``1 - c(L_min)`` where ``c`` is the survival function of the gap law.

Randomness is counter based: run ``r`` of seed ``s`` reads uniforms
``u(stream_key(s, r), i)``, so any chunking or worker split of the runs
gives identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .mixing import counter_uniforms, stream_key, stream_keys

DISTRIBUTIONS = {
    "uniform01": stats.uniform(),
    "exp1": stats.expon(),
    "stdnormal": stats.norm(),
}
THRESHOLD_EPS = 1e-9

# counter offsets inside one run's stream
_C_MIN, _C_TSTAR, _C_REPLAY = 0, 1, 2


def get_dist(name: str):
    try:
        return DISTRIBUTIONS[name]
    except KeyError:
        raise ValueError(f"unknown dist {name!r}; expected one of {', '.join(DISTRIBUTIONS)}") from None


def _check_T(T: int) -> None:
    if T < 2:
        raise ValueError("T must be >= 2")


@dataclass(frozen=True)
class IdealizedRun:
    T: int
    gaps: np.ndarray  # L_2..L_T
    delta_star: float
    t_star: int
    green_count: int


def draw_gaps(T: int, dist: str, seed: int, run: int = 0) -> np.ndarray:
    """The ``T - 1`` gaps of one run (counters ``0 .. T-2``)."""
    _check_T(T)
    u = counter_uniforms(stream_key(seed, run), np.arange(T - 1, dtype=np.uint64))
    return get_dist(dist).ppf(u)


def sample_run(T: int, dist: str = "uniform01", rng_seed: int = 0, run: int = 0) -> IdealizedRun:
    """Replay one run position by position.

    The first green is at ``t_star`` (the first argmin of the gaps, which is
    uniform on ``2..T`` by exchangeability). Each of the ``T - t_star`` later
    positions draws a fresh gap and turns green iff it is ``<= delta_star``.
    """
    d = get_dist(dist)
    gaps = draw_gaps(T, dist, rng_seed, run)
    i = int(np.argmin(gaps))
    delta_star = float(gaps[i])
    t_star = i + 2
    key = stream_key(rng_seed, run)
    fresh = d.ppf(counter_uniforms(key, np.arange(T - 1, T - 1 + T - t_star, dtype=np.uint64)))
    return IdealizedRun(T, gaps, delta_star, t_star, 1 + int(np.count_nonzero(fresh <= delta_star)))


def survival_at_min(T: int, N: int, dist: str, seed: int, start: int = 0):
    """``(L_min, c(L_min), keys)`` for runs ``start .. start+N-1``.

    ``c(L_min)`` is the maximum of ``T - 1`` i.i.d. uniforms, so it is drawn
    directly as ``U ** (1 / (T - 1))`` and mapped through the gap law.
    """
    _check_T(T)
    d = get_dist(dist)
    keys = stream_keys(seed, np.arange(start, start + N, dtype=np.uint64))
    u = counter_uniforms(keys, _C_MIN)
    c_top = np.exp(np.log(u) / (T - 1))
    l_min = d.isf(c_top)
    return l_min, d.sf(l_min), keys


def green_counts(T: int, N: int, dist: str = "uniform01", seed: int = 0, start: int = 0) -> np.ndarray:
    """Green counts of runs ``start .. start+N-1`` via the order-statistic shortcut."""
    _, c, keys = survival_at_min(T, N, dist, seed, start)
    t_star = 2 + np.minimum((counter_uniforms(keys, _C_TSTAR) * (T - 1)).astype(np.int64), T - 2)
    u = counter_uniforms(keys, _C_REPLAY)
    extra = stats.binom.ppf(u, T - t_star, 1.0 - c)
    return 1 + extra.astype(np.int64)


def estimate_multi_green_prob(T: int, N: int, dist: str = "uniform01", seed: int = 0) -> float:
    """Fraction of runs whose tuned text holds two or more green words."""
    return float(np.mean(green_counts(T, N, dist, seed) >= 2))


def estimate_one_green_prob(T: int, N: int, dist: str = "uniform01", seed: int = 0) -> float:
    return float(np.mean(green_counts(T, N, dist, seed) == 1))


def one_green_prob_given(c: np.ndarray, T: int) -> np.ndarray:
    """P(exactly one green | c(L_min) = c), averaged over a uniform t_star."""
    c = np.asarray(c, dtype=np.float64)
    n = T - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.expm1(n * np.log(c)) / (n * (1.0 - c))
    return np.where(c >= 1.0, 1.0, out)


def y_statistic_sample(T: int, N: int, dist: str = "uniform01", seed: int = 0) -> np.ndarray:
    """``Y = (T - 1) * (1 - c(L_min))``; tends to Exp(1) in law."""
    _, c, _ = survival_at_min(T, N, dist, seed)
    return (T - 1) * (1.0 - c)


def y_cdf(s: float, T: int) -> float:
    """Exact finite-``T`` CDF of ``Y``."""
    n = T - 1
    if s <= 0:
        return 0.0
    if s >= n:
        return 1.0
    return -math.expm1(n * math.log1p(-s / n))


def ks_exp1(y: np.ndarray) -> float:
    return float(stats.kstest(y, "expon").statistic)


def greens_below(gaps: np.ndarray, delta) -> np.ndarray:
    """Whether the soft watermark at bias ``delta`` emits any green word.

    With greedy decoding the text is unchanged until the first position
    whose gap is ``<= delta``; that position turns green. ``gaps`` may be
    2-D (runs x positions) with ``delta`` per run.
    """
    gaps = np.atleast_2d(gaps)
    delta = np.asarray(delta, dtype=np.float64).reshape(-1, 1)
    return np.any(gaps <= delta, axis=1)


def verify_lemma1(T: int, N: int, dist: str = "uniform01", seed: int = 0, chunk_cells: int = 1 << 24) -> bool:
    """Check the threshold property on every run.

    For each run the smallest bias giving a green word must be exactly the
    minimum gap: ``delta_star - 1e-9`` gives none and ``delta_star`` gives one.
    """
    _check_T(T)
    d = get_dist(dist)
    counters = np.arange(T - 1, dtype=np.uint64)
    step = max(1, chunk_cells // (T - 1))
    for start in range(0, N, step):
        runs = np.arange(start, min(N, start + step), dtype=np.uint64)
        gaps = d.ppf(counter_uniforms(stream_keys(seed, runs)[:, None], counters[None, :]))
        delta_star = gaps.min(axis=1)
        if np.any(greens_below(gaps, delta_star - THRESHOLD_EPS)):
            return False
        if not np.all(greens_below(gaps, delta_star)):
            return False
    return True


def simulation_report(T: int, N: int, dist: str = "uniform01", seed: int = 0, lemma_runs: int | None = None) -> dict:
    """Summary written by ``simulate --theorem1``."""
    g = green_counts(T, N, dist, seed)
    y = y_statistic_sample(T, N, dist, seed)
    return {
        "p_multi_green": float(np.mean(g >= 2)),
        "p_one_green": float(np.mean(g == 1)),
        "ks_Y_exp1": ks_exp1(y),
        "lemma1_ok": verify_lemma1(T, min(N, 10_000) if lemma_runs is None else lemma_runs, dist, seed),
    }
