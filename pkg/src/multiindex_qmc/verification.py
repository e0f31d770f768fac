"""Identity suites and reduced-scale statistical checks.

Each check returns a :class:`CheckResult`.  Identity checks compare two
algebraically equal expressions and report the largest discrepancy relative
to the magnitude of the values involved.  Module functions are looked up at
call time, so a faulty implementation (say a flipped sign in the mixed
difference) shows up as a named failure.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List

import numpy as np

from . import index_algebra as ia
from .estimators import levels as lv
from .grid import DEFAULT_SOLVER, SolverConfig, functional_batch
from .model import ProblemSpec, make_problem
from .sampler import LatticeRule, ShiftSet, StreamKey, korobov_search, lattice_points

IDENTITY_TOL = 1e-12


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.value = float(self.value)

    def to_dict(self):
        return asdict(self)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.3g} (threshold {self.threshold:.3g}) {self.detail}"


def _rel(lhs, rhs, scale: float) -> float:
    diff = float(np.max(np.abs(np.asarray(lhs, dtype=float) - np.asarray(rhs, dtype=float))))
    return diff / max(scale, 1e-300)


class TableEvaluator:
    """Random values keyed by multi-index, optionally vector-valued."""

    def __init__(self, d: int, max_component: int, seed: int = 0, width: int = 1):
        rng = np.random.default_rng([seed, d, max_component])
        self.table: Dict[tuple, np.ndarray] = {}
        for ell in itertools.product(range(max_component + 1), repeat=d):
            self.table[ell] = rng.standard_normal(width)

    def __call__(self, ell):
        return self.table[tuple(ell)]

    @property
    def scale(self) -> float:
        return max(float(np.abs(v).max()) for v in self.table.values())


class PDEEvaluator:
    """``ell -> P_ell(Y)`` for a fixed batch of parameter points, memoised."""

    def __init__(self, spec: ProblemSpec, Y, solver: SolverConfig = DEFAULT_SOLVER):
        self.memo = ia.Memo(lambda ell: functional_batch(spec, ell, Y, solver)[0])

    def __call__(self, ell):
        return self.memo(tuple(ell))

    @property
    def scale(self) -> float:
        vals = [np.abs(v).max() for v in self.memo.cache.values()]
        return float(max(vals)) if vals else 1.0


def check_summation_identity(ev, d: int, max_component: int, label: str) -> CheckResult:
    worst = 0.0
    where = None
    for lp in itertools.product(range(max_component + 1), repeat=d):
        lhs, rhs, _ = ia.summation_identity_check(ev, lp)
        err = _rel(lhs, rhs, ev.scale)
        if err > worst:
            worst, where = err, lp
    return CheckResult(f"summation identity [{label}, d={d}]", worst <= IDENTITY_TOL, worst,
                       IDENTITY_TOL, f"worst at {where}" if where else "")


def check_combination_forms(ev, d: int, max_level: int, label: str) -> CheckResult:
    worst = 0.0
    for level in range(max_level + 1):
        a = ia.truncated_sum(ev, level, d)
        b = ia.combination_value(ev, level, d)
        worst = max(worst, _rel(a, b, ev.scale))
    return CheckResult(f"truncated sum vs binomial reassembly [{label}, d={d}]",
                       worst <= IDENTITY_TOL, worst, IDENTITY_TOL)


def check_shell_identity(ev, d: int, max_level: int, label: str) -> CheckResult:
    worst = 0.0
    for level in range(max_level + 1):
        a = ia.shell_difference(ev, level, d)
        b = ia.combination_value(ev, level, d) - ia.combination_value(ev, level - 1, d)
        worst = max(worst, _rel(a, b, ev.scale))
    return CheckResult(f"per-sample shell identity [{label}, d={d}]",
                       worst <= IDENTITY_TOL, worst, IDENTITY_TOL)


def check_telescoping(spec: ProblemSpec, L: int, Y, solver=DEFAULT_SOLVER) -> CheckResult:
    """Sum of the level-difference samples equals the finest-level value per sample."""
    d = spec.d
    worst = 0.0
    for scheme in ("full", "combination"):
        total = sum(lv.difference_samples(spec, scheme, l, Y, solver)[0] for l in range(L + 1))
        ev = PDEEvaluator(spec, Y, solver)
        top = ev((L,) * d) if scheme == "full" else ia.combination_value(ev, L, d)
        worst = max(worst, _rel(total, top, max(ev.scale, float(np.abs(top).max()))))
    return CheckResult(f"per-sample telescoping [PDE, d={d}, L={L}]", worst <= IDENTITY_TOL,
                       worst, IDENTITY_TOL)


def identity_suite(dims=(1, 2, 3), max_component: int = 4, n_points: int = 3,
                   seed: int = 0) -> List[CheckResult]:
    """All deterministic identities on synthetic tables and PDE-backed evaluators."""
    out = []
    for d in dims:
        evs = [("table", TableEvaluator(d, max_component, seed, width=4))]
        spec = make_problem("sine_modes", d=d)
        Y = np.random.default_rng([seed, 99, d]).random((n_points, spec.s)) - 0.5
        evs.append(("PDE", PDEEvaluator(spec, Y)))
        for label, ev in evs:
            if label == "PDE":
                # warm the cache so relative errors are measured against its full range
                for ell in itertools.product(range(max_component + 1), repeat=d):
                    ev(ell)
            out.append(check_summation_identity(ev, d, max_component, label))
            out.append(check_combination_forms(ev, d, max_component, label))
            out.append(check_shell_identity(ev, d, max_component, label))
        out.append(check_telescoping(spec, max_component if d < 3 else 3, Y))
    return out


def smooth_test_function(Y: np.ndarray) -> np.ndarray:
    """``prod_j (1 + (y_j^2 - 1/12) / j^2)``; integral 1 over [-1/2, 1/2]^s."""
    j = np.arange(1, Y.shape[-1] + 1)
    return np.prod(1.0 + (Y**2 - 1.0 / 12.0) / j**2, axis=-1)


def check_lattice_unbiasedness(s: int = 4, N: int = 64, M: int = 500, seed: int = 0,
                               rule: LatticeRule = None, k_sigma: float = 4.0) -> CheckResult:
    """Mean of M independently shifted lattice estimates against the exact integral 1."""
    rule = rule or korobov_search(s, N)
    shifts = ShiftSet.draw(StreamKey(seed, "verify-lattice", ()), M, s).shifts
    Q = np.array([smooth_test_function(lattice_points(rule, sh)).mean() for sh in shifts])
    se = Q.std(ddof=1) / math.sqrt(M)
    z = abs(Q.mean() - 1.0) / se if se > 0 else (0.0 if Q.mean() == 1.0 else math.inf)
    return CheckResult(f"shifted lattice unbiasedness [s={s}, N={N}, M={M}]", z <= k_sigma, z,
                       k_sigma, f"mean {Q.mean():.10f}, standard error {se:.2e}")


def check_estimator_unbiasedness(driver: str = "mlmc", d: int = 1, L: int = 3, eps: float = 2e-3,
                                 reps: int = 20, seed: int = 0,
                                 k_sigma: float = 4.0) -> CheckResult:
    """Fixed-L driver estimates against the quadrature value of ``E[P_L]``."""
    from .estimators import EstimatorParams, run_estimator
    from .reference import ExpectationOracle

    spec = make_problem("sine_modes", d=d)
    oracle = ExpectationOracle(spec)
    target = oracle.full(L) if driver in ("mc", "mlmc", "mlqmc") else oracle.combination(L)
    est = np.array([run_estimator(spec, driver, eps,
                                  EstimatorParams(seed=seed + r, fixed_L=L)).estimate
                    for r in range(reps)])
    se = est.std(ddof=1) / math.sqrt(reps)
    z = abs(est.mean() - target) / se if se > 0 else 0.0
    return CheckResult(f"fixed-L unbiasedness [{driver}, d={d}, L={L}, {reps} runs]",
                       z <= k_sigma, z, k_sigma, f"mean {est.mean():.8f} vs {target:.8f}")


def statistical_suite(seed: int = 0) -> List[CheckResult]:
    return [
        check_lattice_unbiasedness(seed=seed),
        check_estimator_unbiasedness("mlmc", 1, seed=seed),
        check_estimator_unbiasedness("miqmc", 2, L=4, eps=4e-3, reps=10, seed=seed),
    ]


def run_verification(statistical: bool = True, seed: int = 0,
                     dims=(1, 2, 3)) -> List[CheckResult]:
    results = identity_suite(dims=dims, seed=seed)
    if statistical:
        results += statistical_suite(seed)
    return results
