"""Deterministic reference values for verification.

``E[P_ell]`` is a smooth (analytic) integral over the parameter cube, so a
tensor Gauss-Legendre rule with a handful of nodes per direction reaches
near machine precision.  Fewer nodes are used in the later directions, whose
modes carry less weight.  The limit ``E[P]`` is obtained by Richardson
extrapolation of isotropic-grid expectations in ``h^2``.
"""

from __future__ import annotations

import itertools
from typing import Dict, Sequence

import numpy as np

from .grid import DEFAULT_SOLVER, SolverConfig, functional_batch
from .index_algebra import combination_value, Memo
from .model import ProblemSpec


def default_nodes(s: int) -> tuple:
    return tuple(max(3, 9 - j) for j in range(1, s + 1))


def gauss_legendre_rule(nodes: Sequence[int]):
    """Tensor rule on [-1/2, 1/2]^s: ``(points, weights)``, weights sum to 1."""
    pts, wts = [], []
    for m in nodes:
        x, w = np.polynomial.legendre.leggauss(int(m))
        pts.append(x / 2)
        wts.append(w / 2)
    Y = np.array(list(itertools.product(*pts)))
    W = np.array([np.prod(c) for c in itertools.product(*wts)])
    return Y, W


class ExpectationOracle:
    """``ell -> E[P_ell]`` by tensor Gauss-Legendre quadrature, memoised."""

    def __init__(self, spec: ProblemSpec, nodes: Sequence[int] = None,
                 solver: SolverConfig = DEFAULT_SOLVER):
        self.spec = spec
        self.nodes = tuple(nodes) if nodes is not None else default_nodes(spec.s)
        self.Y, self.W = gauss_legendre_rule(self.nodes)
        self.solver = solver
        self._memo = Memo(self._expect)

    def _expect(self, ell) -> float:
        values, _ = functional_batch(self.spec, ell, self.Y, self.solver)
        return float(self.W @ values)

    def __call__(self, ell) -> float:
        return self._memo(tuple(int(e) for e in ell))

    def full(self, level: int) -> float:
        """Expectation on the isotropic grid of the given level."""
        return self((level,) * self.spec.d)

    def combination(self, level: int) -> float:
        """Expectation of the sparse combination value at ``level``."""
        return float(combination_value(self, level, self.spec.d))


def richardson(values: Dict[int, float], order: int = 2, steps: int = 2) -> float:
    """Extrapolate ``{level: value}`` with error terms ``h^order, h^(2 order), ...``."""
    levels = sorted(values)[-(steps + 1):]
    table = [values[k] for k in levels]
    for m in range(1, steps + 1):
        r = 2.0 ** (order * m)
        table = [(r * b - a) / (r - 1) for a, b in zip(table, table[1:])]
    return table[-1]


def reference_expectation(spec: ProblemSpec, finest: int, steps: int = 2,
                          nodes: Sequence[int] = None) -> float:
    """Richardson-extrapolated ``E[P]`` from isotropic levels up to ``finest``."""
    oracle = ExpectationOracle(spec, nodes)
    return richardson({k: oracle.full(k) for k in range(finest - steps, finest + 1)},
                      steps=steps)
