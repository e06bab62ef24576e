"""
Lexicographic order on bounded integer multisets.

A multiset with at most L elements drawn from [0, M-1] is sorted and padded
with the value M up to length L. Two multisets compare as their padded
sequences do, position by position.
"""

import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence, Tuple

from config import ERROR_MESSAGES
from utils.errors import DomainError

logger = logging.getLogger(__name__)

# A multiset is carried as any iterable of ints; sorted tuples are canonical.
IntMultiset = Sequence[int]


class Ordering(IntEnum):
    LT = -1
    EQ = 0
    GT = 1


@dataclass(frozen=True)
class PaddedSequence:
    values: Tuple[int, ...]
    M: int
    L: int

    def __post_init__(self):
        if len(self.values) != self.L:
            raise DomainError(ERROR_MESSAGES["size_mismatch"].format(expected=self.L, actual=len(self.values)))
        if any(b < a for a, b in zip(self.values, self.values[1:])):
            raise DomainError(f"Padded sequence {self.values} is not non-decreasing")
        if any(x < 0 or x > self.M for x in self.values):
            raise DomainError(f"Padded sequence {self.values} has elements outside [0, {self.M}]")


def _check_admissible(ms: Iterable[int], M: int, L: int) -> Tuple[int, ...]:
    elements = tuple(sorted(ms))
    if len(elements) > L or any(x < 0 or x >= M for x in elements):
        raise DomainError(ERROR_MESSAGES["inadmissible_multiset"].format(elements=elements, M=M, L=L))
    return elements


def pad(ms: IntMultiset, M: int, L: int) -> PaddedSequence:
    """
    Sort a multiset and pad it with M up to length L.

    Args:
        ms: Multiset with at most L elements in [0, M-1]
        M: Padding value
        L: Sequence length

    Returns:
        The padded, non-decreasing sequence
    """
    elements = _check_admissible(ms, M, L)
    return PaddedSequence(elements + (M,) * (L - len(elements)), M, L)


def lex_key(ms: IntMultiset, M: int, L: int) -> Tuple[int, ...]:
    """Padded sequence as a plain tuple, for use as a sort key. Does not validate."""
    elements = tuple(sorted(ms))
    return elements + (M,) * (L - len(elements))


def lex_compare(a: IntMultiset, b: IntMultiset, M: int, L: int) -> Ordering:
    """
    Compare two multisets in lexicographic order of their padded sequences.

    The comparison walks both sorted multisets and substitutes M for
    positions past the end, which is the same as padding first.

    Args:
        a: First multiset
        b: Second multiset
        M: Padding value (elements must be below M)
        L: Maximum cardinality

    Returns:
        Ordering.LT, Ordering.EQ or Ordering.GT
    """
    sa = _check_admissible(a, M, L)
    sb = _check_admissible(b, M, L)
    for i in range(L):
        x = sa[i] if i < len(sa) else M
        y = sb[i] if i < len(sb) else M
        if x != y:
            return Ordering.LT if x < y else Ordering.GT
    return Ordering.EQ


def restrict(ms: IntMultiset, m: int) -> Tuple[int, ...]:
    """
    Keep the elements strictly below m, i.e. intersect with {0, ..., m-1}.

    Args:
        ms: Multiset
        m: Cut-off, at least 1

    Returns:
        Sorted sub-multiset of elements < m
    """
    if m < 1:
        raise DomainError(f"Restriction bound must be at least 1, got {m}")
    return tuple(sorted(x for x in ms if x < m))
