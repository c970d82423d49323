import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdroot import combinatorics as cb
from rdroot.implicit import rhs_terms


def brute_partitions(n):
    """Non-increasing sequences summing to n, by filtering all compositions."""
    out = set()
    for k in range(1, n + 1):
        for combo in itertools.product(range(1, n + 1), repeat=k):
            if sum(combo) == n:
                out.add(tuple(sorted(combo, reverse=True)))
    return out


def test_partitions_of_three():
    seqs = [p.as_sequence() for p in cb.partitions(3)]
    assert seqs == [(3,), (2, 1), (1, 1, 1)]


def test_partitions_of_one():
    assert [p.as_sequence() for p in cb.partitions(1)] == [(1,)]


def test_partition_of_zero_needs_flag():
    with pytest.raises(ValueError):
        cb.partitions(0)
    assert cb.partitions(0, allow_zero=True)[0].n == 0


@pytest.mark.parametrize("n", range(1, 9))
def test_partitions_match_brute_force(n):
    got = [p.as_sequence() for p in cb.partitions(n)]
    assert len(got) == len(set(got))
    assert set(got) == brute_partitions(n)
    assert all(sum(s) == n for s in got)


def test_partition_counts():
    assert [cb.partition_count(n) for n in range(9)] == [1, 1, 2, 3, 5, 7, 11, 15, 22]
    assert len(cb.partitions(6)) == 11


def test_exact_part_counts():
    assert cb.partitions_exact(4, 2) == 2
    assert cb.partitions_exact(6, 3) == 3
    assert cb.partitions_exact(0, 0) == 1


def test_bounded_counts():
    assert cb.partitions_bounded(6, 6) == 11
    assert cb.partitions_bounded(4, 2) == 3  # 4, 3+1, 2+2
    assert cb.partitions_bounded(0, 0) == 1


def test_taylor_coefficients():
    assert cb.taylor_coefficient(3, 0, cb.IntPartition((1, 2), (1, 1))) == 3
    assert cb.taylor_coefficient(3, 3, cb.IntPartition((1,), (3,))) == 1
    assert cb.taylor_coefficient(4, 0, cb.IntPartition((2,), (2,))) == 3


def test_taylor_coefficient_rejects_bad_b():
    with pytest.raises(ValueError):
        cb.taylor_coefficient(3, 1, cb.IntPartition((3,), (1,)))


def test_multi_indices_and_counts():
    idx = cb.multi_indices(3, 2)
    assert idx[0] == (0, 0) and idx[-1] == (2, 2)
    assert len(idx) == math.comb(3 + 2 - 1, 2)
    assert cb.index_counts((0, 2, 2), 3) == (1, 0, 2)


def test_compositions():
    comps = list(cb.compositions(2, 3))
    assert len(comps) == math.comb(4, 2)
    assert all(sum(c) == 2 for c in comps)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=6))
def test_sequence_round_trip(seq):
    part = cb.IntPartition.from_sequence(seq)
    assert part.n == sum(seq)
    assert sorted(part.as_sequence()) == sorted(seq)


@pytest.mark.parametrize("l", range(1, 13))
def test_summand_count(l):
    """Non-trivial summands number sum_{j=0}^{l} p(j) - 1, the trivial partition excluded."""
    brute = sum(part.ones + 1 for part in cb.partitions(l)) - 1
    assert len(rhs_terms(l)) == brute
    assert brute == sum(cb.partition_count(j) for j in range(l + 1)) - 1
