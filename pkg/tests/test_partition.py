import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nswatermark.mixing import MASK64
from nswatermark.partition import (
    PartitionParams,
    green_size,
    is_green,
    parse_key,
    partition_for,
    round_half_away,
    token_score,
)


@pytest.mark.parametrize(
    "x, expected", [(0.5, 1), (1.5, 2), (2.5, 3), (-0.5, -1), (2.4999, 2), (0.0, 0)]
)
def test_round_half_away(x, expected):
    assert round_half_away(x) == expected


@pytest.mark.parametrize(
    "gamma, V, expected",
    [
        (0.5, 5, 3),  # 2.5 rounds up
        (0.25, 10, 3),  # 2.5 rounds up
        (0.01, 10, 1),  # floor at one green
        (0.99, 10, 9),  # red never empty
        (0.9, 2, 1),
        (0.1, 950, 95),
        (0.0001, 256_000, 26),
    ],
)
def test_green_size_table(gamma, V, expected):
    assert green_size(gamma, V) == expected


def test_parse_key():
    assert parse_key("0xDEADBEEF") == 0xDEADBEEF
    assert parse_key("deadbeef") == 0xDEADBEEF
    assert parse_key(5) == 5
    assert parse_key("ffffffffffffffff") == MASK64
    for bad in ["0x1" + "0" * 16, "xyz", -1]:
        with pytest.raises(ValueError):
            parse_key(bad)


def test_params_validation():
    with pytest.raises(ValueError, match="gamma must be in"):
        PartitionParams(1, 1.5, 10)
    with pytest.raises(ValueError):
        PartitionParams(1, 0.5, 1)


def test_vectorized_scores_match_scalar_exhaustively():
    # |V| = 64: every (prev, cand) pair against the scalar definition
    p = PartitionParams(0xC0FFEE, 0.25, 64)
    for prev in range(64):
        scalar = [token_score(p.key, prev, c) for c in range(64)]
        assert [int(x) for x in p.scores(prev)] == scalar
        order = sorted(range(64), key=lambda c: (scalar[c], c))
        assert partition_for(p, prev).green == frozenset(order[: p.green_size])


def test_no_score_collisions_small_vocab():
    p = PartitionParams(0xDEADBEEF, 0.1, 4096)
    for prev in range(0, 4096, 97):
        assert len(np.unique(p.scores(prev))) == 4096


@settings(max_examples=50, deadline=None)
@given(st.integers(0, MASK64), st.floats(0.001, 0.999), st.integers(2, 300), st.integers(0, 299))
def test_exact_green_count_and_disjoint(key, gamma, V, prev):
    prev %= V
    p = PartitionParams(key, gamma, V)
    part = partition_for(p, prev)
    assert len(part.green) == green_size(gamma, V)
    assert part.green.isdisjoint(part.red)
    assert part.green | part.red == frozenset(range(V))
    cand = (prev * 7 + 3) % V
    assert is_green(p, prev, cand) == (cand in part.green)


def test_masks_are_cached_and_read_only():
    p = PartitionParams(3, 0.3, 50)
    m = p.green_mask(4)
    assert p.green_mask(4) is m
    with pytest.raises(ValueError):
        m[0] = True


def test_depends_on_key_and_prev():
    a = PartitionParams(1, 0.5, 200)
    b = PartitionParams(2, 0.5, 200)
    assert not np.array_equal(a.green_mask(0), b.green_mask(0))
    assert not np.array_equal(a.green_mask(0), a.green_mask(1))


def test_monte_carlo_green_frequency():
    # a fixed candidate is green for about gamma of all predecessors
    gamma, V = 0.1, 2000
    p = PartitionParams(0xABCDEF, gamma, V)
    hits = np.array([p.green_mask(prev)[17] for prev in range(V)])
    se = np.sqrt(gamma * (1 - gamma) / V)
    assert abs(hits.mean() - gamma) < 4 * se
