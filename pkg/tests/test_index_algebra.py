import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multiindex_qmc.index_algebra import (IndexSet, Memo, combination_value, mixed_difference,
                                          shell, shell_difference, simplex,
                                          summation_identity_check, truncated_sum)


def brute_mixed(table, ell):
    # independent oracle: nested one-dimensional backward differences
    def value(e):
        return 0.0 if min(e) < 0 else table(e)

    def diff(e, j):
        if j == len(e):
            return value(e)
        lower = e[:j] + (e[j] - 1,) + e[j + 1:]
        return diff(e, j + 1) - diff(lower, j + 1)

    return diff(tuple(ell), 0)


def random_table(d, top, seed=0):
    rng = np.random.default_rng(seed)
    vals = {e: rng.standard_normal() for e in itertools.product(range(top + 1), repeat=d)}
    return lambda e: vals[tuple(e)]


def test_shell_examples():
    assert shell(1, 2) == [(0, 1), (1, 0)]
    assert len(shell(2, 3)) == 6
    assert shell(5, 1) == [(5,)]
    for d in (1, 2, 3):
        for k in range(6):
            assert len(shell(k, d)) == math.comb(k + d - 1, d - 1)


def test_index_set_count_and_downward_closure():
    for d in (1, 2, 3):
        for L in range(6):
            s = IndexSet(d, L)
            assert len(s) == len(s.members) == math.comb(L + d, d)
            for ell in s.members:
                for j in range(d):
                    if ell[j] > 0:
                        lower = ell[:j] + (ell[j] - 1,) + ell[j + 1:]
                        assert lower in s


def test_mixed_difference_examples():
    assert mixed_difference(lambda e: 7.0, (0,)) == 7.0
    table = {(1, 1): 4, (0, 1): 2, (1, 0): 2, (0, 0): 1}
    assert mixed_difference(lambda e: table[e], (1, 1)) == 1


def test_product_evaluator_factorises():
    phi = lambda l: 1 - 2.0 ** (-2 * l)
    for d in (1, 2, 3):
        ev = lambda e: math.prod(phi(l) for l in e)
        for ell in itertools.product(range(1, 4), repeat=d):
            # phi(l) - phi(l-1) = 4^-(l-1) - 4^-l for each factor
            expected = math.prod(2.0 ** (-2 * (l - 1)) - 2.0 ** (-2 * l) for l in ell)
            assert mixed_difference(ev, ell) == pytest.approx(expected, rel=1e-12)
            assert mixed_difference(ev, ell) == pytest.approx(brute_mixed(ev, ell), rel=1e-12)


def test_against_brute_force_expansion():
    for d in (1, 2, 3):
        table = random_table(d, 4, seed=d)
        for ell in itertools.product(range(5), repeat=d):
            assert mixed_difference(table, ell) == pytest.approx(brute_mixed(table, ell),
                                                                 abs=1e-12)


def test_summation_identity():
    table = random_table(2, 4)
    lhs, rhs, diff = summation_identity_check(table, (2, 3))
    assert diff <= 1e-12 * max(1.0, abs(lhs))
    assert summation_identity_check(table, (0, 0))[2] == 0.0
    lin = lambda e: float(e[0] + e[1])
    assert summation_identity_check(lin, (4, 3))[2] == 0.0


def test_combination_forms():
    table = random_table(1, 6)
    assert combination_value(table, 5, 1) == table((5,))
    table2 = random_table(2, 6)
    S = lambda k: sum(table2(e) for e in shell(k, 2))
    assert combination_value(table2, 4, 2) == pytest.approx(S(4) - S(3), abs=1e-14)
    table3 = random_table(3, 4, seed=7)
    a, b = truncated_sum(table3, 4, 3), combination_value(table3, 4, 3)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 3), level=st.integers(0, 4), seed=st.integers(0, 10**6))
def test_shell_telescoping_property(d, level, seed):
    table = random_table(d, 4, seed)
    lhs = shell_difference(table, level, d)
    rhs = combination_value(table, level, d) - combination_value(table, level - 1, d)
    assert abs(lhs - rhs) <= 1e-12 * 10


def test_memo_calls_each_index_once():
    calls = []
    memo = Memo(lambda e: calls.append(e) or float(sum(e)))
    for ell in simplex(3, 2):
        mixed_difference(memo, ell)
    assert len(calls) == len(set(calls)) == len(simplex(3, 2))
