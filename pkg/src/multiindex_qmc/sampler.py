"""Parameter-space sampling: keyed pseudo-random streams and shifted lattices.

Every random draw is addressed by ``(seed, purpose, key, index)`` through
:class:`numpy.random.SeedSequence` spawn keys, so a sample's value depends
only on its address and never on execution order, batch size or worker
count.  Monte Carlo samples are drawn in fixed blocks of ``BLOCK`` so that
sample ``i`` of a stream is always the same point.

Lattice points follow ``y_i = frac(i z / N + shift) - 1/2`` for i = 1..N.
"""

from __future__ import annotations

import functools
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError

BLOCK = 4096


def purpose_tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf8"))


@dataclass(frozen=True)
class StreamKey:
    """Address of an independent random stream."""

    seed: int
    purpose: str
    key: tuple = ()

    def spawn_key(self, *extra: int) -> tuple:
        key = tuple(int(k) for k in self.key)
        if any(k < 0 for k in key):
            raise ValueError(f"stream keys must be non-negative, got {key}")
        return (purpose_tag(self.purpose), len(key)) + key + tuple(int(e) for e in extra)

    def generator(self, *extra: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.spawn_key(*extra))
        return np.random.Generator(np.random.PCG64(ss))


def mc_points(s: int, n: int, stream_key: StreamKey, start: int = 0) -> np.ndarray:
    """Samples ``start .. start+n-1`` of a uniform stream on [-1/2, 1/2]^s."""
    if n < 0 or start < 0:
        raise ValueError("n and start must be non-negative")
    out = np.empty((n, s))
    pos = 0
    i = start
    while pos < n:
        block, offset = divmod(i, BLOCK)
        take = min(BLOCK - offset, n - pos)
        pts = stream_key.generator(0, block).random((BLOCK, s))
        out[pos:pos + take] = pts[offset:offset + take]
        pos += take
        i += take
    return out - 0.5


# -- lattice rules -----------------------------------------------------------

@dataclass(frozen=True)
class LatticeRule:
    s: int
    N: int
    z: tuple
    source: str = "korobov_search"
    criterion: Optional[float] = None
    exhaustive: bool = True

    def __post_init__(self):
        if self.N < 1:
            raise ConfigurationError(f"lattice point count must be positive, got {self.N}")
        if len(self.z) != self.s:
            raise ConfigurationError(
                f"generating vector has {len(self.z)} entries, expected s={self.s}")
        for j, zj in enumerate(self.z):
            if self.N > 1 and not (1 <= zj < self.N):
                raise ConfigurationError(f"z_{j + 1} = {zj} not in [1, {self.N})")
            if math.gcd(int(zj), self.N) != 1:
                raise ConfigurationError(f"gcd(z_{j + 1} = {zj}, N = {self.N}) != 1")

    def restricted(self, n: int) -> "LatticeRule":
        """The embedded ``n``-point rule (n must divide N)."""
        if n < 1 or self.N % n:
            raise ConfigurationError(f"{n} points cannot be embedded in an {self.N}-point rule")
        z = tuple(int(zj) % n if n > 1 else 1 for zj in self.z)
        return LatticeRule(self.s, n, z, self.source, None, self.exhaustive)


def lattice_points(rule: LatticeRule, shift) -> np.ndarray:
    """The N shifted lattice points in [-1/2, 1/2]^s, shape (N, s)."""
    shift = np.asarray(shift, dtype=float).reshape(rule.s)
    i = np.arange(1, rule.N + 1, dtype=np.int64)[:, None]
    base = (i * np.asarray(rule.z, dtype=np.int64)[None, :]) % rule.N / rule.N
    return np.mod(base + shift, 1.0) - 0.5


def shifted_points(rule: LatticeRule, shifts: np.ndarray) -> np.ndarray:
    """Points for every shift, shape (R, N, s)."""
    return np.stack([lattice_points(rule, sh) for sh in np.atleast_2d(shifts)])


@dataclass(frozen=True)
class ShiftSet:
    R: int
    shifts: np.ndarray
    seed_path: tuple

    @classmethod
    def draw(cls, stream_key: StreamKey, R: int, s: int) -> "ShiftSet":
        shifts = np.stack([stream_key.generator(1, k).random(s) for k in range(R)]) \
            if R else np.zeros((0, s))
        return cls(R, shifts, (stream_key.seed, stream_key.purpose) + tuple(stream_key.key))


def shift_statistics(Q: Sequence[float]):
    """Mean of the R shift estimates and the unbiased variance of that mean."""
    Q = np.asarray(Q, dtype=float)
    R = Q.size
    if R < 2:
        raise ValueError(f"need at least 2 shift estimates for a variance, got {R}")
    mean = Q.mean()
    return float(mean), float(((Q - mean) ** 2).sum() / (R * (R - 1)))


def _bernoulli2(x):
    return x * x - x + 1.0 / 6.0


def worst_case_error2(z: Sequence[int], N: int, weights: Sequence[float]) -> float:
    """Shift-averaged squared worst-case error, unanchored weighted Sobolev space."""
    z = np.asarray(z, dtype=np.int64)
    gamma = np.asarray(weights, dtype=float)
    k = np.arange(N, dtype=np.int64)
    b2 = _bernoulli2(np.arange(N) / N)
    prod = np.ones(N)
    for zj, gj in zip(z, gamma):
        prod *= 1.0 + gj * b2[(k * zj) % N]
    return float(prod.mean() - 1.0)


def product_weights(s: int) -> np.ndarray:
    return 1.0 / np.arange(1, s + 1, dtype=float) ** 2


@functools.lru_cache(maxsize=32)
def korobov_search(s: int, N: int, search_cap: int = 1024, n_min: Optional[int] = None) -> LatticeRule:
    """Best Korobov vector ``z_j = a**(j-1) mod N`` over odd ``a``.

    The score is the worst-case error for weights ``j**-2``.  With ``n_min``
    the score is the mean log error over every power of two from ``n_min`` to
    ``N``, so the embedded smaller rules stay usable.  When there are more odd
    candidates than ``search_cap`` an evenly spaced subset is scored and the
    returned rule carries the warning flag ``exhaustive=False``.
    """
    if N < 1 or N & (N - 1):
        raise ConfigurationError(f"N must be a power of 2, got {N}")
    if N <= 2:
        return LatticeRule(s, N, (1,) * s, "korobov_search", 0.0, True)
    weights = product_weights(s)
    sizes = [N]
    if n_min is not None:
        sizes = [2**m for m in range(max(1, int(math.log2(n_min))), int(math.log2(N)) + 1)]
    odd = np.arange(1, N, 2)
    exhaustive = odd.size <= search_cap
    if not exhaustive:
        odd = odd[np.linspace(0, odd.size - 1, search_cap).round().astype(int)]
    best = None
    for a in odd:
        z = [pow(int(a), j, N) for j in range(s)]
        score = np.mean([np.log(worst_case_error2([zj % n for zj in z], n, weights))
                         for n in sizes])
        if best is None or score < best[0]:
            best = (score, z)
    z = tuple(best[1])
    crit = worst_case_error2(z, N, weights)
    return LatticeRule(s, N, z, "korobov_search", crit, exhaustive)


def load_lattice_file(path, s: int, N: int) -> LatticeRule:
    """Read a generating vector: one integer per line, line j holds z_j.

    Blank lines and ``#`` comments are ignored.  An optional first line
    ``n_max=<int>`` (or ``N=<int>``) declares the largest supported N.  Lines
    with two integers are read as ``j z_j``.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"lattice file {path} does not exist")
    values = []
    n_max = None
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            name, _, val = line.partition("=")
            if values or name.strip().lower() not in ("n", "n_max", "nmax"):
                raise ConfigurationError(f"{path}:{lineno}: unexpected header {raw!r}")
            n_max = int(val)
            continue
        parts = line.split()
        try:
            values.append(int(parts[-1]))
        except ValueError:
            raise ConfigurationError(f"{path}:{lineno}: not an integer: {raw!r}") from None
        if len(parts) > 2:
            raise ConfigurationError(f"{path}:{lineno}: expected 'z' or 'j z', got {raw!r}")
    if len(values) < s:
        raise ConfigurationError(f"{path} holds {len(values)} components, need s={s}")
    if n_max is not None and N > n_max:
        raise ConfigurationError(f"{path} supports N <= {n_max}, requested {N}")
    z = tuple(v % N for v in values[:s])
    return LatticeRule(s, N, z, "file")
