"""Multilevel and multi-index estimator drivers.

Every driver follows the same plan:

1. screen the coarse levels with a small pilot run (fresh random stream);
2. fit the level-magnitude decay and pick the finest level L whose
   extrapolated bias is at most eps / sqrt(2);
3. allocate samples per level for a variance of eps^2 / 2 at least cost;
4. run the estimator on an independent stream and top up levels while the
   measured variance exceeds the budget.

Levels use disjoint random streams, so the per-level estimators are
independent.  Results are reduced in key order, which makes reports
reproducible for a fixed seed whatever the thread count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..errors import ConfigurationError, EstimatorFailure
from ..grid import DEFAULT_SOLVER, SolverConfig
from ..model import ProblemSpec
from ..rates import RateFit, fit_qmc_exponent, fit_rates
from ..sampler import (LatticeRule, ShiftSet, StreamKey, korobov_search, mc_points,
                       shift_statistics, shifted_points)
from .allocation import (VARIANCE_FLOOR, BiasModel, allocate_samples, fit_bias_model,
                         modeled_cost, optimal_samples, select_finest_level)
from .levels import difference_samples, level_keys, level_of, level_samples, stream_key


@dataclass(frozen=True)
class DriverKind:
    name: str
    sampling: str  # "mc" | "qmc"
    scheme: str    # "full" | "combination" | "multiindex"
    single_level: bool = False


DRIVERS = {
    "mc": DriverKind("mc", "mc", "full", single_level=True),
    "mlmc": DriverKind("mlmc", "mc", "full"),
    "mlmc-comb": DriverKind("mlmc-comb", "mc", "combination"),
    "mimc": DriverKind("mimc", "mc", "multiindex"),
    "mlqmc": DriverKind("mlqmc", "qmc", "full"),
    "miqmc": DriverKind("miqmc", "qmc", "multiindex"),
}


@dataclass
class EstimatorParams:
    seed: int = 0
    screen_level: Optional[int] = None  # None: default_screen_level(scheme, d)
    n_screen: int = 200
    qmc_screen_points: int = 32
    qmc_screen_shifts: int = 16
    qmc_p_points: tuple = (8, 16, 32, 64, 128)
    R: int = 32
    max_level: int = 10
    fixed_L: Optional[int] = None
    p: Optional[float] = None
    p_bounds: tuple = (1.0, 2.0)
    bias_levels: int = 3
    max_refinements: int = 10
    variance_slack: float = 0.05
    lattice: Optional[LatticeRule] = None
    lattice_n_max: int = 2**16
    korobov_fallback: bool = True
    korobov_cap: int = 512
    solver: SolverConfig = DEFAULT_SOLVER
    threads: int = 1

    def echo(self) -> dict:
        out = asdict(self)
        out["lattice"] = None if self.lattice is None else {
            "N": self.lattice.N, "z": list(self.lattice.z), "source": self.lattice.source}
        out["qmc_p_points"] = list(self.qmc_p_points)
        out["p_bounds"] = list(self.p_bounds)
        return out


@dataclass
class LevelRecord:
    key: object
    mean: float
    variance_of_mean: float
    raw_variance: float
    cost_per_sample: float
    N: int
    R: int = 1
    total_cost: float = 0.0

    def __post_init__(self):
        if not self.total_cost:
            self.total_cost = float(self.N * self.R * self.cost_per_sample)

    def key_label(self) -> str:
        if isinstance(self.key, tuple):
            return "(" + ",".join(str(k) for k in self.key) + ")"
        return str(self.key)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["key"] = list(self.key) if isinstance(self.key, tuple) else self.key
        return out


@dataclass
class EstimatorReport:
    driver: str
    eps: float
    estimate: float
    levels: List[LevelRecord]
    L: int
    bias_estimate: float
    variance: float
    total_cost: float
    modeled_cost: float
    optimal_cost: float
    screening_cost: float
    p: float
    fitted_rates: Optional[RateFit]
    screening: List[LevelRecord]
    bias_model: Optional[BiasModel] = None
    converged: bool = True
    refinements: int = 0
    config_echo: dict = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def variance_budget(self):
        """``(bias^2, variance)`` against the split ``eps^2/2 + eps^2/2``."""
        return self.bias_estimate**2, self.variance

    @property
    def mse_estimate(self) -> float:
        return self.bias_estimate**2 + self.variance

    def to_dict(self) -> dict:
        return {
            "driver": self.driver,
            "eps": self.eps,
            "estimate": self.estimate,
            "L": self.L,
            "bias_estimate": self.bias_estimate,
            "variance": self.variance,
            "total_cost": self.total_cost,
            "modeled_cost": self.modeled_cost,
            "optimal_cost": self.optimal_cost,
            "screening_cost": self.screening_cost,
            "p": self.p,
            "converged": self.converged,
            "refinements": self.refinements,
            "levels": [r.to_dict() for r in self.levels],
            "screening": [r.to_dict() for r in self.screening],
            "fitted_rates": None if self.fitted_rates is None else self.fitted_rates.to_dict(),
            "bias_model": None if self.bias_model is None else asdict(self.bias_model),
            "notes": list(self.notes),
        }


# -- level state -------------------------------------------------------------

class MCLevel:
    """Growing set of i.i.d. samples of one level contribution."""

    def __init__(self, spec, scheme, key, stream: StreamKey, solver, plain=False):
        self.spec, self.scheme, self.key = spec, scheme, key
        self.stream, self.solver, self.plain = stream, solver, plain
        self.values: List[np.ndarray] = []
        self.costs: List[np.ndarray] = []
        self.n = 0
        self.prior = None  # (n, variance) from screening, pooled into the variance

    def extend(self, n: int):
        if n <= 0:
            return
        Y = mc_points(self.spec.s, n, self.stream, start=self.n)
        if self.plain:
            v, c = level_samples(self.spec, self.key, Y, self.solver)
        else:
            v, c = difference_samples(self.spec, self.scheme, self.key, Y, self.solver)
        self.values.append(v)
        self.costs.append(c)
        self.n += n

    def _all(self):
        return np.concatenate(self.values) if self.values else np.zeros(0)

    def raw_variance(self) -> float:
        x = self._all()
        own = (x.size - 1, float(x.var(ddof=1))) if x.size >= 2 else (0, 0.0)
        if self.prior is None:
            return own[1]
        dof = own[0] + self.prior[0] - 1
        return (own[0] * own[1] + (self.prior[0] - 1) * self.prior[1]) / max(dof, 1)

    def record(self) -> LevelRecord:
        x = self._all()
        var = self.raw_variance()
        cost = float(np.concatenate(self.costs).mean()) if self.costs else 0.0
        return LevelRecord(self.key, float(x.mean()), var / self.n, var, cost, self.n, 1)


class QMCLevel:
    """R randomly shifted lattice estimates of one level contribution."""

    def __init__(self, spec, scheme, key, shifts: ShiftSet, rule_for, solver):
        self.spec, self.scheme, self.key = spec, scheme, key
        self.shifts, self.rule_for, self.solver = shifts, rule_for, solver
        self.N = 0
        self.Q = None
        self.raw = 0.0
        self.cost = 0.0

    def evaluate(self, N: int):
        rule = self.rule_for(N)
        pts = shifted_points(rule, self.shifts.shifts)  # (R, N, s)
        R = pts.shape[0]
        v, c = difference_samples(self.spec, self.scheme, self.key,
                                  pts.reshape(R * N, -1), self.solver)
        v = v.reshape(R, N)
        self.N = N
        self.Q = v.mean(axis=1)
        self.raw = float(v.var(ddof=1)) if v.size > 1 else 0.0
        self.cost = float(c.mean())

    def record(self) -> LevelRecord:
        mean, vom = shift_statistics(self.Q)
        return LevelRecord(self.key, mean, vom, self.raw, self.cost, self.N, self.shifts.R)


def default_screen_level(scheme: str, d: int) -> int:
    """Pilot depth that reaches past the single-node grids into the asymptotic range.

    Index-based schemes spend their first ``d`` shells on grids with one
    interior node in some direction, so they need deeper pilots than full
    grids; full grids stop early in higher dimension because level l costs
    ``2^(d l)``.
    """
    if scheme == "full":
        return 5 if d <= 2 else 4
    return min(2 * d + 3, 9)


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _check_eps(eps):
    if not (0 < eps < math.exp(-1)):
        raise ConfigurationError(f"eps must lie in (0, 1/e), got {eps}")


class LatticeSource:
    """Supplies the embedded ``N``-point rules of one generating vector.

    Without an explicit rule a Korobov vector for ``lattice_n_max`` points is
    searched on first use.
    """

    def __init__(self, spec: ProblemSpec, params: EstimatorParams):
        if params.lattice is None and not params.korobov_fallback:
            raise ConfigurationError("QMC driver needs a lattice file or the korobov fallback")
        self.spec, self.params = spec, params
        self._base = params.lattice

    @property
    def base(self) -> LatticeRule:
        if self._base is None:
            p = self.params
            self._base = korobov_search(self.spec.s, p.lattice_n_max, p.korobov_cap, 4)
        return self._base

    def __call__(self, N: int) -> LatticeRule:
        if N > self.base.N:
            raise ConfigurationError(
                f"{N} lattice points requested but the generating vector supports {self.base.N}")
        return self.base.restricted(N)


def lattice_source(spec: ProblemSpec, params: EstimatorParams) -> LatticeSource:
    return LatticeSource(spec, params)


class _Run:
    """Shared state of one estimator invocation."""

    def __init__(self, spec, kind: DriverKind, params: EstimatorParams):
        self.spec, self.kind, self.params = spec, kind, params
        self.qmc = kind.sampling == "qmc"
        self.screen: Dict[object, LevelRecord] = {}
        self.rule_for = lattice_source(spec, params) if self.qmc else None
        self.notes: List[str] = []
        self.screen_level = (params.screen_level if params.screen_level is not None
                             else default_screen_level(kind.scheme, spec.d))

    # -- screening
    def screen_to(self, L: int):
        keys = [k for k in level_keys(self.kind.scheme, L, self.spec.d) if k not in self.screen]
        p = self.params

        def one(key):
            stream = StreamKey(p.seed, "screen", stream_key(key))
            if self.qmc:
                lev = QMCLevel(self.spec, self.kind.scheme, key,
                               ShiftSet.draw(stream, p.qmc_screen_shifts, self.spec.s),
                               self.rule_for, p.solver)
                lev.evaluate(p.qmc_screen_points)
            else:
                lev = MCLevel(self.spec, self.kind.scheme, key, stream, p.solver)
                lev.extend(p.n_screen)
            return lev.record()

        for key, rec in zip(keys, _map(one, keys, p.threads)):
            self.screen[key] = rec

    def magnitudes(self):
        """``{level: (sum of |mean| over the shell, standard error)}``."""
        out: Dict[int, list] = {}
        for key, r in self.screen.items():
            k = level_of(key)
            b, v = out.get(k, (0.0, 0.0))
            out[k] = (b + abs(r.mean), v + r.variance_of_mean)
        return {k: (b, math.sqrt(v)) for k, (b, v) in out.items()}

    def rates(self) -> Optional[RateFit]:
        abscissa = "order1_norm" if self.kind.scheme == "multiindex" else "scalar_level"
        try:
            return fit_rates(list(self.screen.values()), abscissa)
        except ValueError as exc:
            self.notes.append(f"rate fit skipped: {exc}")
            return None

    def fit_p(self) -> float:
        p = self.params
        if p.p is not None:
            return float(p.p)
        key = (1,) * self.spec.d if self.kind.scheme == "multiindex" else 1
        stream = StreamKey(p.seed, "screen-p", stream_key(key))
        shifts = ShiftSet.draw(stream, p.qmc_screen_shifts, self.spec.s)
        lev = QMCLevel(self.spec, self.kind.scheme, key, shifts, self.rule_for, p.solver)
        pts = []
        for N in p.qmc_p_points:
            lev.evaluate(N)
            pts.append((N, lev.record().variance_of_mean))
        if min(v for _, v in pts) <= 0:
            self.notes.append("zero QMC variance at the coarse level; p set to its lower bound")
            return float(p.p_bounds[0])
        fit = fit_qmc_exponent(pts)
        lo, hi = p.p_bounds
        self.notes.append(f"fitted QMC exponent p = {fit.p:.3f} +- {fit.se:.3f}")
        return float(min(max(fit.p, lo), hi))


def run_estimator(spec: ProblemSpec, driver: str, eps: float,
                  params: EstimatorParams = None) -> EstimatorReport:
    """Run ``driver`` to root-mean-square accuracy ``eps``."""
    params = params or EstimatorParams()
    if driver not in DRIVERS:
        raise ConfigurationError(f"unknown driver {driver!r}; choose from {sorted(DRIVERS)}")
    _check_eps(eps)
    if params.qmc_screen_shifts < 2 or params.R < 2:
        raise ConfigurationError("QMC variance estimates need at least 2 shifts")
    kind = DRIVERS[driver]
    t0 = time.perf_counter()
    run = _Run(spec, kind, params)
    run.screen_to(run.screen_level if params.fixed_L is None
                  else max(run.screen_level, params.fixed_L))
    rates = run.rates()
    p = run.fit_p() if run.qmc else 1.0
    if rates is not None and run.qmc:
        rates.p = p

    model = None
    try:
        model = fit_bias_model(run.magnitudes(), params.bias_levels)
    except EstimatorFailure:
        if params.fixed_L is None:
            raise
        run.notes.append("bias model unavailable at fixed L")
    if params.fixed_L is None:
        L = select_finest_level(model, eps, params.max_level)
        depth = run.screen_level
        while L > depth:
            # the bias target lies beyond the pilot: screen deeper and refit
            depth += 1
            run.screen_to(depth)
            model = fit_bias_model(run.magnitudes(), params.bias_levels)
            L = select_finest_level(model, eps, params.max_level)
        if depth > run.screen_level:
            run.notes.append(f"pilot extended to level {depth}")
    else:
        L = params.fixed_L
    bias = model.tail(L) if model is not None and model.alpha > 0 else float("nan")
    run.screen_to(L)

    target = 0.5 * eps**2
    if kind.single_level:
        keys = [L]
        plain = MCLevel(spec, kind.scheme, L, StreamKey(params.seed, "screen-plain", (L,)),
                        params.solver, plain=True)
        plain.extend(params.n_screen)
        pilot = {L: plain.record()}
    else:
        keys = level_keys(kind.scheme, L, spec.d)
        pilot = {k: run.screen[k] for k in keys}

    if run.qmc:
        v = np.array([pilot[k].variance_of_mean * pilot[k].N**p for k in keys])
        c = np.array([params.R * max(pilot[k].cost_per_sample, 1.0) for k in keys])
    else:
        v = np.array([pilot[k].raw_variance for k in keys])
        c = np.array([max(pilot[k].cost_per_sample, 1.0) for k in keys])
    N_real, _ = optimal_samples(v, c, eps, p)
    N = allocate_samples(v, c, eps, p, qmc=run.qmc)
    cost_model = modeled_cost(c, N)
    cost_opt = modeled_cost(c, N_real)

    # main run on independent streams
    if run.qmc:
        levels = {k: QMCLevel(spec, kind.scheme, k,
                              ShiftSet.draw(StreamKey(params.seed, "run", stream_key(k)),
                                            params.R, spec.s),
                              run.rule_for, params.solver) for k in keys}
        grow = {k: (lambda lev, n: lev.evaluate(n)) for k in keys}
    else:
        levels = {k: MCLevel(spec, kind.scheme, k,
                             StreamKey(params.seed, "run-plain" if kind.single_level else "run",
                                       stream_key(k)),
                             params.solver, plain=kind.single_level) for k in keys}
        for k in keys:
            levels[k].prior = (pilot[k].N, pilot[k].raw_variance)
        grow = {k: (lambda lev, n: lev.extend(n - lev.n)) for k in keys}

    def advance(items):
        _map(lambda kn: grow[kn[0]](levels[kn[0]], kn[1]), items, params.threads)

    advance([(k, int(n)) for k, n in zip(keys, N)])
    refinements = 0
    converged = False
    for refinements in range(params.max_refinements + 1):
        recs = [levels[k].record() for k in keys]
        vom = np.array([r.variance_of_mean for r in recs])
        if vom.sum() <= target * (1 + params.variance_slack):
            converged = True
            break
        if refinements == params.max_refinements:
            break
        current = np.array([r.N for r in recs])
        if run.qmc:
            v_new = np.maximum(vom, VARIANCE_FLOOR) * current.astype(float) ** p
        else:
            v_new = np.array([r.raw_variance for r in recs])
        want = np.maximum(allocate_samples(v_new, c, eps, p, qmc=run.qmc), current)
        if np.array_equal(want, current):
            worst = int(np.argmax(vom / c))
            want[worst] = current[worst] * 2 if run.qmc else current[worst] + max(
                1, current[worst] // 2)
        advance([(k, int(n)) for k, n, old in zip(keys, want, current) if n != old])
    if not converged:
        run.notes.append(f"variance {vom.sum():.3g} still above budget {target:.3g} after "
                         f"{params.max_refinements} refinements")

    records = [levels[k].record() for k in keys]
    if run.qmc and not run.rule_for.base.exhaustive:
        run.notes.append(f"lattice search scored a subset of candidates "
                         f"(cap {params.korobov_cap}) for N = {run.rule_for.base.N}")
    screening = [run.screen[k] for k in level_keys(kind.scheme, max(run_levels(run.screen)), spec.d)]
    screening_cost = sum(r.total_cost for r in screening)
    return EstimatorReport(
        driver=driver, eps=eps,
        estimate=float(sum(r.mean for r in records)),
        levels=records, L=L, bias_estimate=bias,
        variance=float(sum(r.variance_of_mean for r in records)),
        total_cost=float(sum(r.total_cost for r in records)),
        modeled_cost=cost_model, optimal_cost=cost_opt, screening_cost=screening_cost,
        p=p, fitted_rates=rates, screening=screening, bias_model=model,
        converged=converged, refinements=refinements, config_echo=params.echo(),
        notes=run.notes, wall_time=time.perf_counter() - t0)


def run_levels(screen: Dict) -> List[int]:
    return [level_of(k) for k in screen]


def screen_only(spec: ProblemSpec, driver: str, params: EstimatorParams = None):
    """Pilot phase only: ``(records, RateFit or None, p, notes)``."""
    params = params or EstimatorParams()
    if driver not in DRIVERS:
        raise ConfigurationError(f"unknown driver {driver!r}; choose from {sorted(DRIVERS)}")
    run = _Run(spec, DRIVERS[driver], params)
    run.screen_to(run.screen_level)
    rates = run.rates()
    p = run.fit_p() if run.qmc else 1.0
    if rates is not None and run.qmc:
        rates.p = p
    keys = level_keys(run.kind.scheme, run.screen_level, spec.d)
    return [run.screen[k] for k in keys], rates, p, run.notes


def mc_run(spec, eps, params=None):
    return run_estimator(spec, "mc", eps, params)


def mlmc_run(spec, eps, params=None):
    return run_estimator(spec, "mlmc", eps, params)


def mimc_run(spec, eps, params=None):
    return run_estimator(spec, "mimc", eps, params)


def mlqmc_run(spec, eps, params=None):
    return run_estimator(spec, "mlqmc", eps, params)


def miqmc_run(spec, eps, params=None):
    return run_estimator(spec, "miqmc", eps, params)


def mlmc_combination_run(spec, eps, params=None):
    return run_estimator(spec, "mlmc-comb", eps, params)
