"""Permutations of {0, ..., n-1} in one-line notation.

Permutations are plain tuples ``p`` with ``p[i]`` the image of ``i``.
Products are taken left to right: ``compose(p, q)`` applies ``p`` first,
so composing the transpositions (0 2) and (0 1) gives the 3-cycle
0 -> 2 -> 1 -> 0.  Tuples keep composition O(n), hash for free, and make
state indexing canonical.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache


def identity(n: int) -> tuple:
    return tuple(range(n))


def compose(p: tuple, q: tuple) -> tuple:
    """Left-to-right product: apply p, then q."""
    return tuple(q[v] for v in p)


def inverse(p: tuple) -> tuple:
    inv = [0] * len(p)
    for i, v in enumerate(p):
        inv[v] = i
    return tuple(inv)


def transposition(n: int, a: int, b: int) -> tuple:
    t = list(range(n))
    t[a], t[b] = b, a
    return tuple(t)


def mul_transposition(p: tuple, a: int, b: int) -> tuple:
    """Right-multiply by (a b): swap which points map to a and to b."""
    out = list(p)
    for i, v in enumerate(p):
        if v == a:
            out[i] = b
        elif v == b:
            out[i] = a
    return tuple(out)


def fixed_points(p: tuple) -> tuple:
    return tuple(i for i, v in enumerate(p) if v == i)


def is_derangement(p: tuple) -> bool:
    return all(v != i for i, v in enumerate(p))


def cycles(p: tuple) -> tuple:
    """Cycle decomposition, each cycle rotated to start at its least element,
    cycles sorted by that element.  Fixed points appear as 1-cycles."""
    seen = [False] * len(p)
    out = []
    for start in range(len(p)):
        if seen[start]:
            continue
        cyc = [start]
        seen[start] = True
        v = p[start]
        while v != start:
            cyc.append(v)
            seen[v] = True
            v = p[v]
        out.append(tuple(cyc))
    return tuple(out)


def cycle_type(p: tuple) -> tuple:
    return tuple(sorted(len(c) for c in cycles(p)))


def all_permutations(n: int):
    return itertools.permutations(range(n))


@lru_cache(maxsize=None)
def derangements(n: int) -> tuple:
    return tuple(p for p in itertools.permutations(range(n)) if is_derangement(p))


@lru_cache(maxsize=None)
def full_cycles(n: int) -> tuple:
    """All n-cycles of S_n, as one-line tuples."""
    return tuple(p for p in itertools.permutations(range(n))
                 if len(cycles(p)) == 1 and n > 1)


def transposition_difference(p: tuple, q: tuple):
    """Return (a, b) with q = p * (a b) if p and q differ by one
    transposition, else None."""
    diff = [i for i in range(len(p)) if p[i] != q[i]]
    if len(diff) != 2:
        return None
    i, j = diff
    if p[i] == q[j] and p[j] == q[i]:
        return (p[i], p[j])
    return None


@dataclass(frozen=True)
class Permutation:
    """One-line permutation with cached cycle data."""

    mapping: tuple

    def __post_init__(self):
        if sorted(self.mapping) != list(range(len(self.mapping))):
            raise ValueError(f"not a permutation: {self.mapping}")

    @property
    def n(self) -> int:
        return len(self.mapping)

    @property
    def cycles(self) -> tuple:
        return cycles(self.mapping)

    @property
    def fixed(self) -> tuple:
        return fixed_points(self.mapping)

    @property
    def is_derangement(self) -> bool:
        return is_derangement(self.mapping)

    def __mul__(self, other: "Permutation") -> "Permutation":
        return Permutation(compose(self.mapping, other.mapping))

    def inv(self) -> "Permutation":
        return Permutation(inverse(self.mapping))
