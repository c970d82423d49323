"""Integer partitions, multi-indices and the coefficients of the implicit-derivative formula."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator


@dataclass(frozen=True)
class IntPartition:
    """A partition of ``n`` written as distinct parts with multiplicities.

    ``parts`` is strictly increasing and ``multiplicities[i]`` counts how often
    ``parts[i]`` occurs, so ``sum(m * p) == n``.
    """

    parts: tuple[int, ...]
    multiplicities: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.parts) != len(self.multiplicities):
            raise ValueError("parts and multiplicities differ in length")
        if any(p <= 0 for p in self.parts) or any(m <= 0 for m in self.multiplicities):
            raise ValueError("parts and multiplicities must be positive")
        if any(a >= b for a, b in zip(self.parts, self.parts[1:])):
            raise ValueError("parts must be strictly increasing")

    @property
    def n(self) -> int:
        return sum(p * m for p, m in zip(self.parts, self.multiplicities))

    @property
    def total_multiplicity(self) -> int:
        return sum(self.multiplicities)

    @property
    def ones(self) -> int:
        """Number of parts equal to 1."""
        return self.multiplicities[0] if self.parts and self.parts[0] == 1 else 0

    def as_sequence(self) -> tuple[int, ...]:
        """Parts listed with repetition, in non-increasing order."""
        seq: list[int] = []
        for p, m in zip(reversed(self.parts), reversed(self.multiplicities)):
            seq.extend([p] * m)
        return tuple(seq)

    @classmethod
    def from_sequence(cls, seq: tuple[int, ...] | list[int]) -> "IntPartition":
        counts: dict[int, int] = {}
        for part in seq:
            counts[part] = counts.get(part, 0) + 1
        parts = tuple(sorted(counts))
        return cls(parts, tuple(counts[p] for p in parts))

    def is_trivial(self) -> bool:
        """True for the one-part partition ``n = n``."""
        return self.total_multiplicity == 1


def _descending_sequences(n: int, largest: int) -> Iterator[tuple[int, ...]]:
    if n == 0:
        yield ()
        return
    for first in range(min(n, largest), 0, -1):
        for rest in _descending_sequences(n - first, first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _partitions_cached(n: int) -> tuple[IntPartition, ...]:
    return tuple(IntPartition.from_sequence(s) for s in _descending_sequences(n, n))


def partitions(n: int, *, allow_zero: bool = False) -> list[IntPartition]:
    """All partitions of ``n``.

    Partitions are ordered by their non-increasing part sequences in
    descending lexicographic order, e.g. ``3``, ``2+1``, ``1+1+1``.
    The empty partition of 0 is only returned when ``allow_zero`` is set.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        if not allow_zero:
            raise ValueError("n must be >= 1 unless allow_zero=True")
        return [IntPartition((), ())]
    return list(_partitions_cached(n))


@lru_cache(maxsize=None)
def partition_count(n: int) -> int:
    """The partition function p(n), with p(0) = 1."""
    if n < 0:
        return 0
    return sum(partitions_exact(n, k) for k in range(n + 1))


@lru_cache(maxsize=None)
def partitions_exact(n: int, k: int) -> int:
    """Number of partitions of ``n`` into exactly ``k`` parts.

    Uses p_k(n) = p_{k-1}(n-1) + p_k(n-k) with p_0(0) = 1.
    """
    if n < 0 or k < 0:
        return 0
    if n == 0 and k == 0:
        return 1
    if n == 0 or k == 0:
        return 0
    return partitions_exact(n - 1, k - 1) + partitions_exact(n - k, k)


def partitions_bounded(n: int, max_parts: int) -> int:
    """Number of partitions of ``n`` into at most ``max_parts`` parts."""
    if n < 0 or max_parts < 0:
        return 0
    return sum(partitions_exact(n, k) for k in range(max_parts + 1))


def taylor_coefficient(l: int, b: int, partition: IntPartition) -> float:
    """Coefficient of a summand in the order-``l`` implicit-derivative formula.

    ``b`` of the ones of the partition are turned into beta-differentiations;
    the value is ``l! / (b! (m1-b)! m2! ... ms! (p1!)^m1 ... (ps!)^ms)``.
    Python integers keep the computation exact at every order.
    """
    if partition.n != l:
        raise ValueError(f"partition of {partition.n} given for order {l}")
    if not 0 <= b <= partition.ones:
        raise ValueError(f"b={b} outside [0, {partition.ones}]")
    denom = math.factorial(b)
    for i, (p, m) in enumerate(zip(partition.parts, partition.multiplicities)):
        mult = m - b if i == 0 and p == 1 else m
        denom *= math.factorial(mult) * math.factorial(p) ** m
    num = math.factorial(l)
    if num % denom:
        raise ArithmeticError("non-integral Taylor coefficient")
    return float(num // denom)


def multi_indices(size: int, order: int) -> list[tuple[int, ...]]:
    """Sorted index tuples of length ``order`` over ``range(size)``.

    These are the canonical representatives of symmetric tensor entries,
    enumerated as combinations with repetition in lexicographic order.
    """
    return list(itertools.combinations_with_replacement(range(size), order))


def index_counts(index: tuple[int, ...], size: int) -> tuple[int, ...]:
    """Convert an index tuple to a multi-index of occurrence counts."""
    counts = [0] * size
    for i in index:
        counts[i] += 1
    return tuple(counts)


def compositions(total: int, slots: int) -> Iterator[tuple[int, ...]]:
    """All vectors of ``slots`` non-negative integers summing to ``total``."""
    if slots == 0:
        if total == 0:
            yield ()
        return
    if slots == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in compositions(total - head, slots - 1):
            yield (head,) + tail


def multi_factorial(alpha: tuple[int, ...] | list[int]) -> int:
    """alpha! = product of the factorials of the entries."""
    out = 1
    for a in alpha:
        out *= math.factorial(a)
    return out
