"""Per-sample level contributions for the three discretisation schemes.

``full``
    isotropic grids; level l contributes P_(l,..,l) - P_(l-1,..,l-1).
``combination``
    sparse combination samples; level l contributes the sum of mixed
    differences over the shell |ell|_1 = l, all at the same y.
``multiindex``
    one mixed difference per multi-index.

Within one batch of parameter points every grid is solved once (the
evaluator is memoised), and the reported per-sample cost is the number of
grid cells, summed over the distinct grids that were solved.  Counting cells
rather than solver sweeps keeps the cost measure independent of whether a
grid happened to be solved directly or by multigrid.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from ..grid import SolverConfig, cells, functional_batch
from ..index_algebra import Memo, mixed_difference, shell_difference, simplex

SCHEMES = ("full", "combination", "multiindex")
CHUNK = 8192


class BatchEvaluator:
    """Memoised ``ell -> P_ell(Y)`` for a fixed batch ``Y`` with cost tally."""

    def __init__(self, spec, Y, solver: SolverConfig):
        self.spec = spec
        self.Y = Y
        self.solver = solver
        self.cost = np.zeros(Y.shape[0])
        self.memo = Memo(self._solve)

    def _solve(self, ell):
        values, _ = functional_batch(self.spec, ell, self.Y, self.solver)
        self.cost += cells(ell)
        return values

    def __call__(self, ell):
        return self.memo(ell)


def level_keys(scheme: str, L: int, d: int) -> List:
    """The estimator's index set for finest level ``L``."""
    if scheme == "multiindex":
        return simplex(L, d)
    return list(range(L + 1))


def level_of(key) -> int:
    return int(sum(key)) if isinstance(key, tuple) else int(key)


def stream_key(key) -> Tuple[int, ...]:
    return key if isinstance(key, tuple) else (int(key),)


def _differences(spec, scheme, key, Y, solver):
    ev = BatchEvaluator(spec, Y, solver)
    d = spec.d
    if scheme == "full":
        fine = ev((key,) * d)
        values = fine - ev((key - 1,) * d) if key > 0 else fine
    elif scheme == "combination":
        values = shell_difference(ev, key, d)
    elif scheme == "multiindex":
        values = mixed_difference(ev, key)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    values = np.broadcast_to(np.asarray(values, dtype=float), (Y.shape[0],))
    return values, ev.cost


def difference_samples(spec, scheme: str, key, Y, solver: SolverConfig):
    """Level contribution and per-sample cost for each row of ``Y``."""
    Y = np.atleast_2d(Y)
    vals, costs = [], []
    for start in range(0, Y.shape[0], CHUNK):
        v, c = _differences(spec, scheme, key, Y[start:start + CHUNK], solver)
        vals.append(v)
        costs.append(c)
    if not vals:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(vals), np.concatenate(costs)


def level_samples(spec, level: int, Y, solver: SolverConfig):
    """Plain (non-difference) values P_(l,..,l)(y) for single-level Monte Carlo."""
    Y = np.atleast_2d(Y)
    vals, costs = [], []
    for start in range(0, Y.shape[0], CHUNK):
        v, _ = functional_batch(spec, (level,) * spec.d, Y[start:start + CHUNK], solver)
        vals.append(v)
        costs.append(np.full(v.shape, float(cells((level,) * spec.d))))
    if not vals:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(vals), np.concatenate(costs)
