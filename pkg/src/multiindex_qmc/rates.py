"""Rate fits for the multilevel cost theorems and regime verdicts.

Records are any objects with ``key``, ``mean``, ``variance_of_mean``,
``raw_variance`` and ``cost_per_sample`` attributes (normally
:class:`~multiindex_qmc.estimators.LevelRecord`).  All fits are unweighted
least squares on log2 values.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

MC_DRIVERS = ("mc", "mlmc", "mlmc-comb", "mimc")
QMC_DRIVERS = ("mlqmc", "miqmc")


@dataclass
class LineFit:
    slope: float
    intercept: float
    se: float
    x: List[float]


def linear_fit(x, y) -> LineFit:
    """Least-squares line with the usual standard error of the slope."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points for a line")
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    if x.size > 2:
        resid = y - (slope * x + intercept)
        sxx = ((x - x.mean()) ** 2).sum()
        se = math.sqrt(max((resid**2).sum(), 0.0) / (x.size - 2) / sxx)
    else:
        se = float("inf")
    return LineFit(float(slope), float(intercept), se, x.tolist())


@dataclass
class RateFit:
    alpha: float
    beta: float
    gamma: float
    p: Optional[float] = None
    se_alpha: float = 0.0
    se_beta: float = 0.0
    se_gamma: float = 0.0
    se_p: float = 0.0
    alpha_intercept: float = 0.0  # log2 of the fitted mean magnitude at abscissa 0
    levels_used: Dict[str, list] = field(default_factory=dict)
    abscissa: str = "scalar_level"
    notes: List[str] = field(default_factory=list)
    sign_alternating: bool = False

    def to_dict(self):
        return asdict(self)


def _abscissa(key, abscissa: str) -> int:
    if abscissa == "scalar_level":
        if isinstance(key, tuple):
            if len(key) != 1:
                raise ValueError(f"scalar_level abscissa needs scalar keys, got {key}")
            return int(key[0])
        return int(key)
    if abscissa == "order1_norm":
        return int(sum(key)) if isinstance(key, tuple) else int(key)
    raise ValueError(f"unknown abscissa {abscissa!r}")


def _trivial(r) -> bool:
    return r.mean == 0 and r.raw_variance == 0 and r.cost_per_sample == 0


def fit_rates(records: Sequence, abscissa: str = "scalar_level", drop_first: bool = True,
              max_levels: int = 6, window: Optional[Tuple[int, int]] = None) -> RateFit:
    """Fit alpha, beta, gamma from per-level statistics.

    With ``order1_norm`` the records are grouped into shells: alpha is fitted
    to ``|sum of shell means|`` and beta/gamma to every individual record,
    matching the per-multi-index form of the variance and cost conditions.
    By default the leading levels whose grids carry no unknowns (all values
    exactly zero) are dropped together with the first nontrivial level, whose
    single-node grids are far from asymptotic; then at most ``max_levels`` of
    the finest levels are used.  ``window=(lo, hi)`` selects levels
    explicitly.  Means below ten standard errors are left out of the alpha fit.
    """
    records = list(records)
    if len(records) < 3:
        raise ValueError(f"need at least 3 records to fit rates, got {len(records)}")
    notes = []
    shells = defaultdict(list)
    for r in records:
        shells[_abscissa(r.key, abscissa)].append(r)
    levels = sorted(shells)
    if window is not None:
        levels = [k for k in levels if window[0] <= k <= window[1]]
    else:
        if drop_first:
            while levels and all(_trivial(r) for r in shells[levels[0]]):
                levels = levels[1:]
            levels = levels[1:]
        levels = levels[-max_levels:]

    xs_m, ys_m, signs = [], [], []
    for k in levels:
        group = shells[k]
        mean = sum(r.mean for r in group)
        se = math.sqrt(sum(max(r.variance_of_mean, 0.0) for r in group))
        if mean == 0 or abs(mean) < 10 * se:
            notes.append(f"level {k}: mean {mean:.3g} within 10 standard errors "
                         f"({se:.3g}) of zero, left out of alpha fit")
            continue
        xs_m.append(k)
        ys_m.append(math.log2(abs(mean)))
        signs.append(np.sign(mean))
    alternating = len(set(signs)) > 1
    if alternating:
        notes.append("level means change sign; alpha fitted to |mean|")

    xs_v, ys_v, xs_c, ys_c = [], [], [], []
    for k in levels:
        for r in shells[k]:
            if r.raw_variance > 0:
                xs_v.append(k)
                ys_v.append(math.log2(r.raw_variance))
            if r.cost_per_sample > 0:
                xs_c.append(k)
                ys_c.append(math.log2(r.cost_per_sample))

    def need(xs, what):
        if len(set(xs)) < 3:
            raise ValueError(f"fewer than 3 usable levels for the {what} fit: {sorted(set(xs))}")

    need(xs_m, "mean")
    need(xs_v, "variance")
    need(xs_c, "cost")
    fa = linear_fit(xs_m, ys_m)
    fb = linear_fit(xs_v, ys_v)
    fc = linear_fit(xs_c, ys_c)
    return RateFit(alpha=-fa.slope, beta=-fb.slope, gamma=fc.slope,
                   se_alpha=fa.se, se_beta=fb.se, se_gamma=fc.se,
                   alpha_intercept=fa.intercept,
                   levels_used={"alpha": sorted(set(xs_m)), "beta": sorted(set(xs_v)),
                                "gamma": sorted(set(xs_c))},
                   abscissa=abscissa, notes=notes, sign_alternating=alternating)


@dataclass
class QMCExponent:
    p: float
    se: float
    inflated_se: bool
    points: List[Tuple[int, float]]


def fit_qmc_exponent(variance_vs_N: Sequence) -> QMCExponent:
    """Negated slope of log2(variance of the mean) against log2 N.

    Entries are ``(N, variance)`` or ``(N, variance, standard_error)``.  If the
    variances fail to decrease and the error bars (when given) overlap, the
    slope's standard error is doubled and flagged.
    """
    pts = sorted(tuple(v) for v in variance_vs_N)
    if len(pts) < 3:
        raise ValueError(f"need at least 3 point counts, got {len(pts)}")
    for p in pts:
        n = int(p[0])
        if n < 1 or n & (n - 1):
            raise ValueError(f"point counts must be powers of 2, got {n}")
        if p[1] <= 0:
            raise ValueError(f"variance must be positive, got {p[1]} at N={n}")
    fit = linear_fit([math.log2(p[0]) for p in pts], [math.log2(p[1]) for p in pts])
    inflated = False
    se = fit.se
    for a, b in zip(pts, pts[1:]):
        if b[1] >= a[1]:
            overlap = True
            if len(a) > 2 and len(b) > 2:
                overlap = b[1] - b[2] <= a[1] + a[2]
            if overlap:
                inflated = True
    if inflated:
        se *= 2.0
    return QMCExponent(-fit.slope, se, inflated, [(int(p[0]), float(p[1])) for p in pts])


@dataclass
class Verdict:
    driver: str
    d: int
    regime: str
    band: float
    predicted_exponent: float
    log_power: float
    conditions_met: bool
    measured_slope: Optional[float] = None
    summary: str = ""

    def to_dict(self):
        return asdict(self)


def _mimc_logs(alpha, beta, gamma, p, d, regime, qmc):
    # log exponents e1 (equality regime) and e2 (beta < p gamma) of the multi-index theorems
    half = alpha > 0.5 * beta + 1e-12
    if qmc:
        q = (p + 1) / p
        if half:
            e1 = d * q
            e2 = (d - 1) * (q + (p * gamma - beta) / (p * alpha))
        else:
            e1 = max(d * q, (d - 1) * (1 + gamma / alpha))
            e2 = (d - 1) * (1 + gamma / alpha)
    else:
        if half:
            e1 = 2 * d
            e2 = (d - 1) * (2 + (gamma - beta) / alpha)
        else:
            e1 = max(2 * d, 3 * (d - 1))
            e2 = (d - 1) * (1 + gamma / alpha)
    return {"eq": e1, "lt": e2, "gt": 0.0}[regime]


def theorem_verdict(fit: RateFit, d: int, driver: str, measured_slope: float = None) -> Verdict:
    """Classify the cost regime and predict the exponent r in cost = O(eps^-r)."""
    a, b, g = fit.alpha, fit.beta, fit.gamma
    qmc = driver in QMC_DRIVERS
    if driver not in MC_DRIVERS + QMC_DRIVERS:
        raise ValueError(f"unknown driver {driver!r}")
    p = (fit.p if fit.p is not None else 2.0) if qmc else 1.0
    diff = b - p * g
    se = math.sqrt(fit.se_beta**2 + (p * fit.se_gamma) ** 2
                   + ((g * fit.se_p) ** 2 if qmc else 0.0))
    band = 2.0 * se
    if abs(diff) <= band + 1e-12:
        regime = "eq"
    elif diff > 0:
        regime = "gt"
    else:
        regime = "lt"
    label = {"gt": "beta > p*gamma", "eq": "beta = p*gamma", "lt": "beta < p*gamma"}[regime]
    if not qmc:
        label = label.replace("p*", "")

    if driver == "mc":
        r = 2.0 + g / a
        logp = 0.0
        label = "single level"
    elif regime == "lt":
        r = 2.0 / p + (p * g - b) / (p * a)
    else:
        r = 2.0 / p
    if driver in ("mlmc", "mlmc-comb"):
        logp = {"gt": 0.0, "eq": 2.0, "lt": 0.0}[regime]
    elif driver == "mlqmc":
        logp = {"gt": 0.0, "eq": (p + 1) / p, "lt": 0.0}[regime]
    elif driver in ("mimc", "miqmc"):
        logp = _mimc_logs(a, b, g, p, d, regime, qmc)

    if driver in ("mimc", "miqmc") or qmc:
        conditions = a >= 0.5 * b - 1e-12 and (p > 1 or not qmc)
    else:
        conditions = a >= 0.5 * min(b, g) - 1e-12
    summary = f"{driver}: {label}, cost = O(eps^-{r:.3g}"
    summary += f" |log eps|^{logp:.3g})" if logp else ")"
    if measured_slope is not None:
        summary += f"; measured cost-vs-eps slope {measured_slope:.3g}"
    return Verdict(driver, d, label, band, r, logp, bool(conditions), measured_slope, summary)
