"""Cost-optimal sample allocation and bias-driven choice of the finest level."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..errors import EstimatorFailure
from ..rates import linear_fit

VARIANCE_FLOOR = 1e-30


def optimal_samples(v: Sequence[float], c: Sequence[float], eps: float, p: float = 1.0):
    """Real-valued minimiser of sum N c subject to sum v N^-p = eps^2 / 2.

    Returns ``(N, lam)`` with ``N_l = (lam p v_l / c_l)^(1/(p+1))``.
    """
    v = np.maximum(np.asarray(v, dtype=float), VARIANCE_FLOOR)
    c = np.asarray(c, dtype=float)
    if v.size == 0:
        raise ValueError("cannot allocate samples over an empty level set")
    if v.shape != c.shape:
        raise ValueError(f"v and c differ in shape: {v.shape} vs {c.shape}")
    if np.any(c <= 0):
        raise ValueError("costs must be positive")
    if eps <= 0 or p < 1:
        raise ValueError(f"need eps > 0 and p >= 1, got eps={eps}, p={p}")
    target = 0.5 * eps**2
    q = p / (p + 1.0)
    S = float((v * (p * v / c) ** (-q)).sum())
    lam = (S / target) ** (1.0 / q)
    N = (lam * p * v / c) ** (1.0 / (p + 1.0))
    return N, lam


def next_power_of_two(n: float) -> int:
    n = max(float(n), 1.0)
    return 1 << max(0, math.ceil(math.log2(n) - 1e-12))


def round_up(N_real, qmc: bool = False) -> np.ndarray:
    """Ceil each entry (to the next power of two for QMC), never below 1."""
    N_real = np.asarray(N_real, dtype=float)
    # guard against 10.000000000001 from round-off in the Lagrange solve
    N = np.maximum(np.ceil(N_real * (1.0 - 1e-12)), 1.0).astype(np.int64)
    if qmc:
        N = np.array([next_power_of_two(n) for n in N], dtype=np.int64)
    return N


def allocate_samples(v, c, eps: float, p: float = 1.0, qmc: bool = False) -> np.ndarray:
    """Integer sample counts meeting the variance budget ``eps^2 / 2`` at least cost."""
    N_real, _ = optimal_samples(v, c, eps, p)
    return round_up(N_real, qmc)


def modeled_variance(v, N, p: float = 1.0) -> float:
    v = np.maximum(np.asarray(v, dtype=float), VARIANCE_FLOOR)
    return float((v * np.asarray(N, dtype=float) ** (-p)).sum())


def modeled_cost(c, N) -> float:
    return float((np.asarray(c, dtype=float) * np.asarray(N, dtype=float)).sum())


@dataclass
class BiasModel:
    """Geometric model ``|contribution of level k| ~ 2^(intercept - alpha k)``."""

    alpha: float
    log2_intercept: float
    levels: List[int] = field(default_factory=list)
    magnitudes: Dict[int, float] = field(default_factory=dict)

    def magnitude(self, k: int) -> float:
        return 2.0 ** (self.log2_intercept - self.alpha * k)

    def tail(self, L: int) -> float:
        """Extrapolated sum of level magnitudes beyond ``L``."""
        return self.magnitude(L + 1) / (1.0 - 2.0 ** -self.alpha)


def fit_bias_model(magnitudes: Dict[int, Tuple[float, float]], n_last: int = 3,
                   significance: float = 3.0) -> BiasModel:
    """Fit the last ``n_last`` resolvable levels of ``{k: (magnitude, std_error)}``.

    Level 0 and levels whose magnitude is within ``significance`` standard
    errors of zero are skipped.
    """
    usable = [k for k, (b, se) in sorted(magnitudes.items())
              if k >= 1 and b > 0 and b >= significance * se]
    if len(usable) < 2:
        raise EstimatorFailure(
            "too few resolvable levels to extrapolate the bias",
            {"magnitudes": {k: list(v) for k, v in magnitudes.items()}})
    use = usable[-n_last:]
    fit = linear_fit(use, [math.log2(magnitudes[k][0]) for k in use])
    return BiasModel(-fit.slope, fit.intercept, use, {k: magnitudes[k][0] for k in use})


def select_finest_level(model: BiasModel, eps: float, max_level: int = None,
                        min_level: int = 0) -> int:
    """Smallest L whose extrapolated bias tail is at most ``eps / sqrt(2)``."""
    if not model.alpha > 0:
        raise EstimatorFailure(
            f"fitted decay rate alpha={model.alpha:.3g} <= 0; cannot extrapolate the bias",
            {"alpha": model.alpha, "levels": model.levels})
    target = eps / math.sqrt(2.0)
    # tail(L) <= target  <=>  L >= (intercept - log2(target (1 - 2^-alpha))) / alpha - 1
    x = (model.log2_intercept - math.log2(target * (1 - 2.0 ** -model.alpha))) / model.alpha - 1
    L = max(min_level, math.ceil(x - 1e-9))
    while L > min_level and model.tail(L - 1) <= target * (1 + 1e-12):
        L -= 1
    while model.tail(L) > target * (1 + 1e-12):
        L += 1
    if max_level is not None and L > max_level:
        raise EstimatorFailure(
            f"bias target eps/sqrt(2)={target:.3g} needs level {L} > max level {max_level}",
            {"required_level": L, "max_level": max_level, "alpha": model.alpha,
             "tail_at_max": model.tail(max_level)})
    return L
