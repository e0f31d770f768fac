"""Multi-index sets, mixed differences and the sparse combination technique.

An *evaluator* is any callable mapping a multi-index (tuple of ints) to a
value; values may be scalars or numpy arrays (one entry per parameter
sample), so the same code serves synthetic tables and batched PDE solves.
Evaluators are only ever called on non-negative indices: the convention
P_ell := 0 for any negative component is applied here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Callable, Dict, List

import numpy as np

from .grid import MultiIndex, as_multi_index, norm1

Evaluator = Callable[[MultiIndex], object]


def shell(level: int, d: int) -> List[MultiIndex]:
    """All multi-indices with ``|ell|_1 == level``, in lexicographic order."""
    if level < 0:
        return []
    if d == 1:
        return [(level,)]
    out = []
    for first in range(level + 1):
        out.extend((first,) + rest for rest in shell(level - first, d - 1))
    return out


def simplex(level: int, d: int) -> List[MultiIndex]:
    """The total-degree set ``{ell >= 0 : |ell|_1 <= level}``, shell by shell."""
    return [ell for k in range(level + 1) for ell in shell(k, d)]


@dataclass(frozen=True)
class IndexSet:
    d: int
    L: int

    @property
    def members(self) -> List[MultiIndex]:
        return simplex(self.L, self.d)

    def __len__(self):
        return comb(self.L + self.d, self.d)

    def __contains__(self, ell):
        ell = as_multi_index(ell)
        return len(ell) == self.d and min(ell) >= 0 and norm1(ell) <= self.L


def corners(d: int):
    """Offsets b in {0,1}^d with their signs (-1)^|b|."""
    return [(b, -1 if sum(b) % 2 else 1) for b in itertools.product((0, 1), repeat=d)]


def _value(evaluator: Evaluator, ell: MultiIndex):
    if min(ell) < 0:
        return 0.0
    return evaluator(ell)


def mixed_difference(evaluator: Evaluator, ell) -> object:
    """``(prod_j Delta_j) P`` at ``ell``, expanded over the 2^d corners."""
    ell = as_multi_index(ell)
    total = 0.0
    for b, sign in corners(len(ell)):
        lower = tuple(l - o for l, o in zip(ell, b))
        if min(lower) < 0:
            continue
        total = total + sign * evaluator(lower)
    return total


def summation_identity_check(evaluator: Evaluator, ell_prime):
    """Compare ``P_ell'`` with the sum of mixed differences below it.

    Returns ``(lhs, rhs, max_abs_diff)``.
    """
    ell_prime = as_multi_index(ell_prime)
    lhs = _value(evaluator, ell_prime)
    rhs = 0.0
    for ell in itertools.product(*(range(l + 1) for l in ell_prime)):
        rhs = rhs + mixed_difference(evaluator, ell)
    return lhs, rhs, float(np.max(np.abs(np.asarray(lhs) - np.asarray(rhs))))


def shell_sum(evaluator: Evaluator, level: int, d: int):
    """``S_level``: sum of P over the shell; zero for negative level."""
    total = 0.0
    for ell in shell(level, d):
        total = total + evaluator(ell)
    return total


def combination_value(evaluator: Evaluator, level: int, d: int):
    """Sparse combination value ``sum_k (-1)^k C(d-1, k) S_{level-k}``."""
    if level < 0:
        return 0.0
    total = 0.0
    for k in range(d):
        if level - k < 0:
            break
        total = total + (-1) ** k * comb(d - 1, k) * shell_sum(evaluator, level - k, d)
    return total


def truncated_sum(evaluator: Evaluator, level: int, d: int):
    """``sum_{|ell|_1 <= level}`` of the mixed differences (same value as above)."""
    total = 0.0
    for ell in simplex(level, d):
        total = total + mixed_difference(evaluator, ell)
    return total


def shell_difference(evaluator: Evaluator, level: int, d: int):
    """Sum of mixed differences over the shell ``|ell|_1 == level``."""
    total = 0.0
    for ell in shell(level, d):
        total = total + mixed_difference(evaluator, ell)
    return total


class Memo:
    """Caches evaluator values by multi-index.

    Used per batch of parameter samples so that overlapping alternating sums
    solve each grid only once.
    """

    def __init__(self, evaluator: Evaluator):
        self.evaluator = evaluator
        self.cache: Dict[MultiIndex, object] = {}

    def __call__(self, ell):
        ell = as_multi_index(ell)
        if ell not in self.cache:
            self.cache[ell] = self.evaluator(ell)
        return self.cache[ell]
