"""Parameterised elliptic model problem.

The diffusion coefficient is affine in the uncertain parameters,

    a(x, y) = a0(x) + sum_j y_j * a_j(x),   y_j in [-1/2, 1/2],

on the unit cube [0, 1]^d with homogeneous Dirichlet conditions.  The output
functional is P(u) = int g(x) u(x) dx.

Problems are picked from a small catalog by name (see :func:`make_problem`).
All functions take points as arrays of shape ``(..., d)`` and return arrays
of shape ``(...)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    """Immutable description of one PDE instance."""

    d: int
    s: int
    a0: Field
    a_modes: tuple
    f: Field
    g: Field
    a_min: float
    a_max: float
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)
    # optional vectorised evaluation of all modes at once, returns (s, ...)
    modes_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, compare=False, repr=False)
    exact_functional: Optional[float] = None

    def __post_init__(self):
        if self.d < 1 or self.s < 1:
            raise ConfigurationError(f"need d >= 1 and s >= 1, got d={self.d}, s={self.s}")
        if len(self.a_modes) != self.s:
            raise ConfigurationError(
                f"expected {self.s} coefficient modes, got {len(self.a_modes)}")
        if not (0 < self.a_min <= self.a_max):
            raise ConfigurationError(
                f"ellipticity bounds must satisfy 0 < a_min <= a_max, got "
                f"({self.a_min}, {self.a_max})")

    def mode_values(self, x: np.ndarray) -> np.ndarray:
        """All s modes at the points ``x``; shape ``(s,) + x.shape[:-1]``."""
        x = np.asarray(x, dtype=float)
        if self.modes_fn is not None:
            return self.modes_fn(x)
        return np.stack([np.broadcast_to(aj(x), x.shape[:-1]) for aj in self.a_modes])

    def base_values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.a0(x), x.shape[:-1]).astype(float)


def _check_y(y: np.ndarray, s: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != s:
        raise DomainError(f"y has {y.shape[-1]} components, expected s={s}")
    bad = np.nonzero(np.abs(y) > 0.5)
    if bad[0].size:
        j = int(bad[-1][0])
        raise DomainError(f"y component {j + 1} = {y[tuple(b[0] for b in bad)]!r} "
                          f"lies outside [-1/2, 1/2]")
    return y


def coefficient_eval(spec: ProblemSpec, x, y) -> float:
    """Evaluate a(x, y) = a0(x) + sum_j y_j a_j(x) at one point."""
    x = np.asarray(x, dtype=float).reshape(spec.d)
    if np.any(x < 0) or np.any(x > 1):
        raise DomainError(f"x = {x!r} lies outside [0, 1]^{spec.d}")
    y = _check_y(np.asarray(y, dtype=float).reshape(spec.s), spec.s)
    value = spec.base_values(x) + np.tensordot(y, spec.mode_values(x), axes=1)
    return float(value)


def uniform_points(d: int, n: int) -> np.ndarray:
    """Tensor grid of ``n`` points per direction on [0, 1]^d, shape (n**d, d)."""
    axes = np.meshgrid(*([np.linspace(0.0, 1.0, n)] * d), indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=-1)


def validate_ellipticity(spec: ProblemSpec, grid_resolution: int = 257):
    """Scan the worst-case coefficient envelope on a uniform x-grid.

    At each x the extreme values over y are a0(x) -/+ (1/2) sum_j |a_j(x)|,
    attained at y_j = -/+ sign(a_j(x)) / 2.  Returns the observed
    ``(a_min, a_max)`` over the grid.
    """
    if grid_resolution < 2:
        raise ConfigurationError("grid_resolution must be >= 2")
    x = uniform_points(spec.d, grid_resolution)
    base = spec.base_values(x)
    spread = 0.5 * np.abs(spec.mode_values(x)).sum(axis=0)
    lo = base - spread
    hi = base + spread
    k = int(np.argmin(lo))
    if lo[k] <= 0:
        raise ConfigurationError(
            f"coefficient is not uniformly elliptic: min over y of a(x, y) = "
            f"{lo[k]:.6g} <= 0 at x = {x[k].tolist()}")
    return float(lo[k]), float(hi.max())


# -- catalog ---------------------------------------------------------------

def _one(x):
    return np.ones(np.shape(x)[:-1])


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


def sine_modes(d: int = 1, s: int = 4, kappa: float = 0.9) -> ProblemSpec:
    """Default family: a0 = 1, a_j = kappa j^-2 prod_k sin(j pi x_k), f = g = 1."""
    j = np.arange(1, s + 1, dtype=float)
    amp = kappa / j**2

    def modes_fn(x):
        x = np.asarray(x, dtype=float)
        out = np.ones((s,) + x.shape[:-1])
        for k in range(d):
            out *= np.sin(np.multiply.outer(j * np.pi, x[..., k]))
        return amp.reshape((s,) + (1,) * (x.ndim - 1)) * out

    def mode(jj):
        def aj(x):
            x = np.asarray(x, dtype=float)
            return kappa / jj**2 * np.prod(np.sin(jj * np.pi * x), axis=-1)
        return aj

    spread = 0.5 * float(amp.sum())
    if spread >= 1.0:
        raise ConfigurationError(
            f"kappa={kappa} with s={s} violates ellipticity (1 - {spread:.4g} <= 0)")
    return ProblemSpec(d=d, s=s, a0=_one, a_modes=tuple(mode(k) for k in range(1, s + 1)),
                       f=_one, g=_one, a_min=1.0 - spread, a_max=1.0 + spread,
                       name="sine_modes", params={"d": d, "s": s, "kappa": kappa},
                       modes_fn=modes_fn)


def poisson(d: int = 1, s: int = 1) -> ProblemSpec:
    """a = 1, f = 1, g = 1.  The modes are identically zero."""
    exact = 1.0 / 12.0 if d == 1 else None
    return ProblemSpec(d=d, s=s, a0=_one, a_modes=(_zero,) * s, f=_one, g=_one,
                       a_min=1.0, a_max=1.0, name="poisson", params={"d": d, "s": s},
                       modes_fn=lambda x: np.zeros((s,) + np.shape(x)[:-1]),
                       exact_functional=exact)


def manufactured_sine(d: int = 2, s: int = 1) -> ProblemSpec:
    """a = 1 with exact solution u = prod_k sin(pi x_k); P(u) = (2/pi)^d."""

    def f(x):
        x = np.asarray(x, dtype=float)
        return d * np.pi**2 * np.prod(np.sin(np.pi * x), axis=-1)

    return ProblemSpec(d=d, s=s, a0=_one, a_modes=(_zero,) * s, f=f, g=_one,
                       a_min=1.0, a_max=1.0, name="manufactured_sine",
                       params={"d": d, "s": s},
                       modes_fn=lambda x: np.zeros((s,) + np.shape(x)[:-1]),
                       exact_functional=(2.0 / math.pi) ** d)


CATALOG = {
    "sine_modes": sine_modes,
    "poisson": poisson,
    "manufactured_sine": manufactured_sine,
}


def make_problem(name: str, **params) -> ProblemSpec:
    """Build a catalog problem by name, e.g. ``make_problem("sine_modes", d=2)``."""
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown problem {name!r}; choose from {sorted(CATALOG)}") from None
    return factory(**params)


def custom_problem(a0: Field, a_modes: Sequence[Field], f: Field = _one, g: Field = _one,
                   d: int = 1, grid_resolution: int = 257) -> ProblemSpec:
    """Wrap user functions; the ellipticity bounds are measured by scanning."""
    a_modes = tuple(a_modes)
    probe = ProblemSpec(d=d, s=len(a_modes), a0=a0, a_modes=a_modes, f=f, g=g,
                        a_min=1.0, a_max=1.0)
    lo, hi = validate_ellipticity(probe, grid_resolution)
    return ProblemSpec(d=d, s=len(a_modes), a0=a0, a_modes=a_modes, f=f, g=g,
                       a_min=lo, a_max=hi)
