"""Finite-difference solves on anisotropic tensor grids.

A multi-index ``ell = (l_1, ..., l_d)`` selects the grid with spacing
``2**-l_j`` in direction j, i.e. ``2**l_j - 1`` interior nodes.  The operator
is the conservative second-order stencil

    (A u)_i = sum_j [ a_{i+1/2} (u_i - u_{i+e_j}) + a_{i-1/2} (u_i - u_{i-e_j}) ] / h_j**2

with the coefficient sampled at face midpoints.  Boundary values are zero.

Everything is vectorised over a batch of parameter points ``Y`` of shape
``(B, s)``: the coefficient is affine in y, so the face coefficients of a
batch are ``base + Y @ modes`` with ``base`` and ``modes`` cached per grid.

Two solvers are provided.  ``direct`` is block tridiagonal elimination along
the longest axis (plain Thomas in 1D); ``multigrid`` runs V-cycles with
red-black Gauss-Seidel smoothing and semi-coarsening of the finest
directions.  ``auto`` picks direct below ``direct_limit`` unknowns.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, DomainError, SolverError
from .model import ProblemSpec

MultiIndex = Tuple[int, ...]

# bytes of block inverses kept in memory per direct-solve chunk
_CHUNK_BYTES = 48 * 2**20


def as_multi_index(ell) -> MultiIndex:
    if isinstance(ell, (int, np.integer)):
        return (int(ell),)
    return tuple(int(v) for v in ell)


def norm1(ell: Sequence[int]) -> int:
    return int(sum(ell))


def unit(j: int, d: int) -> MultiIndex:
    return tuple(1 if k == j else 0 for k in range(d))


def grid_shape(ell: Sequence[int]) -> Tuple[int, ...]:
    return tuple(2**l - 1 for l in ell)


def unknowns(ell: Sequence[int]) -> int:
    return math.prod(grid_shape(ell))


def cells(ell: Sequence[int]) -> int:
    """Work measure per sweep: 2**|ell|_1 cells, or 0 when nothing is solved."""
    return 2 ** norm1(ell) if unknowns(ell) else 0


@dataclass(frozen=True)
class SolverConfig:
    kind: str = "auto"  # auto | direct | multigrid
    tol: float = 1e-10
    max_cycles: int = 100
    pre_sweeps: int = 2
    post_sweeps: int = 2
    direct_limit: int = 10_000
    coarse_limit: int = 64

    def __post_init__(self):
        if self.kind not in ("auto", "direct", "multigrid"):
            raise ConfigurationError(f"unknown solver kind {self.kind!r}")
        if self.tol <= 0 or self.max_cycles < 1:
            raise ConfigurationError("solver tolerance must be > 0 and max_cycles >= 1")
        if self.pre_sweeps < 0 or self.post_sweeps < 0 or self.pre_sweeps + self.post_sweeps == 0:
            raise ConfigurationError("need at least one smoothing sweep per cycle")

    def use_multigrid(self, ell: MultiIndex) -> bool:
        if len(ell) == 1 or self.kind == "direct":
            return False
        if self.kind == "multigrid":
            return True
        return unknowns(ell) >= self.direct_limit


DEFAULT_SOLVER = SolverConfig()


@dataclass
class GridSolution:
    """Solution on one grid for one parameter point."""

    multi_index: MultiIndex
    nodal_values: np.ndarray
    cost_units: float  # grid cells x sweeps (one sweep for direct solves)
    solver_residual: float
    y: np.ndarray = None


@dataclass
class BatchSolution:
    multi_index: MultiIndex
    nodal_values: np.ndarray  # (B,) + grid_shape
    functional: np.ndarray    # (B,)
    cost_units: np.ndarray    # (B,)
    residual: np.ndarray      # (B,) relative residual, 0 for direct solves


# -- geometry ----------------------------------------------------------------

def _node_coords(ell: MultiIndex):
    return [np.arange(1, 2**l) * 2.0**-l for l in ell]


def _face_coords(ell: MultiIndex, j: int):
    coords = _node_coords(ell)
    coords[j] = (np.arange(2**ell[j]) + 0.5) * 2.0**-ell[j]
    return coords


def _mesh(coords):
    return np.stack(np.meshgrid(*coords, indexing="ij"), axis=-1)


@functools.lru_cache(maxsize=512)
def _geometry(spec: ProblemSpec, ell: MultiIndex):
    """Per-grid cached arrays: face base/modes per direction, f and g at nodes."""
    faces = []
    for j in range(len(ell)):
        x = _mesh(_face_coords(ell, j))
        base = spec.base_values(x)
        modes = spec.mode_values(x).reshape(spec.s, -1)
        faces.append((base, modes))
    x = _mesh(_node_coords(ell))
    f = np.broadcast_to(spec.f(x), x.shape[:-1]).astype(float)
    g = np.broadcast_to(spec.g(x), x.shape[:-1]).astype(float)
    return faces, f, g


def face_coefficients(spec: ProblemSpec, ell: MultiIndex, Y: np.ndarray):
    """Coefficient at cell faces for each direction, each of shape (B, ...)."""
    faces, _, _ = _geometry(spec, ell)
    out = []
    for base, modes in faces:
        # explicit sum over modes: a BLAS product may round differently per batch size
        a = np.repeat(base.reshape(1, -1), Y.shape[0], axis=0)
        for j in range(modes.shape[0]):
            a += Y[:, j:j + 1] * modes[j]
        out.append(a.reshape((Y.shape[0],) + base.shape))
    lowest = min(float(a.min()) for a in out)
    if lowest <= 0:
        raise DomainError(f"coefficient {lowest:.4g} <= 0 at a face of grid {ell}")
    return out


# -- operator ----------------------------------------------------------------

def _inv_h2(ell):
    return [4.0**l for l in ell]


def apply_operator(u, faces, ih2):
    """A u for a batch; u has shape (B,) + grid shape."""
    out = np.zeros_like(u)
    for j, (a, w) in enumerate(zip(faces, ih2)):
        ax = j + 1
        pad = [(0, 0)] * u.ndim
        pad[ax] = (1, 1)
        flux = a * np.diff(np.pad(u, pad), axis=ax)
        out -= w * np.diff(flux, axis=ax)
    return out


def _diagonal(faces, ih2):
    diag = 0.0
    for j, (a, w) in enumerate(zip(faces, ih2)):
        ax = j + 1
        n = a.shape[ax]
        lo = np.take(a, np.arange(n - 1), axis=ax)
        hi = np.take(a, np.arange(1, n), axis=ax)
        diag = diag + w * (lo + hi)
    return diag


# -- direct block-tridiagonal elimination -------------------------------------

def _matvec(A, v):
    # per-sample products, so results do not depend on how samples are batched
    return np.matmul(A, v[..., None])[..., 0]


class BlockTridiagonal:
    """Factorised operator for a batch, eliminating along the longest axis.

    The other axes are flattened into dense blocks of size m, so the work is
    O(B n m^3).  For d = 1, m = 1 and this is the Thomas algorithm.
    """

    def __init__(self, faces, ih2, shape):
        d = len(shape)
        self.shape = shape
        self.slow = int(np.argmax(shape))
        self.order = [k for k in range(d) if k != self.slow] + [self.slow]
        inner = [shape[k] for k in self.order[:-1]]
        self.m = int(math.prod(inner))
        self.n = shape[self.slow]
        B = faces[0].shape[0]
        n, m = self.n, self.m

        perm = [0] + [k + 1 for k in self.order]
        af = [np.transpose(a, perm) for a in faces]
        # slow-direction face coefficients: (B, inner..., n+1) -> (B, n+1, m)
        slow = af[self.slow].reshape(B, m, n + 1).transpose(0, 2, 1) * ih2[self.slow]
        self.coupling = slow  # c_k between slab k-1 and k is slow[:, k]

        diag_slow = slow[:, :-1] + slow[:, 1:]  # (B, n, m)
        if m == 1:
            D = diag_slow[..., 0]
        else:
            D = np.zeros((B, n, m, m))
            idx = np.arange(m)
            D[:, :, idx, idx] += diag_slow
            strides = np.cumprod([1] + inner[::-1])[::-1][1:]  # C-order strides of inner dims
            for pos, k in enumerate(self.order[:-1]):
                a = af[k]  # (B, inner with n_k + 1 at pos, n)
                w = ih2[k]
                nk = shape[k]
                stride = int(strides[pos])
                a = np.moveaxis(a, pos + 1, -2)  # (..., n_k + 1, n)
                multi = np.moveaxis(
                    np.indices(inner).reshape(len(inner), -1), 0, -1)  # (m, len(inner))
                for flat in range(m):
                    i = multi[flat]
                    rest = tuple(np.delete(i, pos))
                    ik = i[pos]
                    lo = a[(slice(None),) + rest + (ik,)]      # (B, n)
                    hi = a[(slice(None),) + rest + (ik + 1,)]  # (B, n)
                    D[:, :, flat, flat] += w * (lo + hi)
                    if ik + 1 < nk:
                        D[:, :, flat, flat + stride] -= w * hi
                        D[:, :, flat + stride, flat] -= w * hi
        self._factor(D)

    def _factor(self, D):
        n, m = self.n, self.m
        c = self.coupling
        if m == 1:
            inv = np.empty_like(D)
            piv = D[:, 0]
            inv[:, 0] = 1.0 / piv
            for k in range(1, n):
                ck = c[:, k, 0]
                inv[:, k] = 1.0 / (D[:, k] - ck * ck * inv[:, k - 1])
        else:
            inv = np.empty_like(D)
            inv[:, 0] = np.linalg.inv(D[:, 0])
            for k in range(1, n):
                ck = c[:, k]
                schur = ck[:, :, None] * inv[:, k - 1] * ck[:, None, :]
                inv[:, k] = np.linalg.inv(D[:, k] - schur)
        self.inv = inv

    def solve(self, rhs):
        """Solve for rhs of shape (B,) + grid shape."""
        B = rhs.shape[0]
        n, m = self.n, self.m
        perm = [0] + [k + 1 for k in self.order]
        b = np.transpose(rhs, perm).reshape(B, m, n).transpose(0, 2, 1).copy()  # (B, n, m)
        c, inv = self.coupling, self.inv
        if m == 1:
            b = b[..., 0]
            z = np.empty_like(b)
            z[:, 0] = inv[:, 0] * b[:, 0]
            for k in range(1, n):
                z[:, k] = inv[:, k] * (b[:, k] + c[:, k, 0] * z[:, k - 1])
            x = np.empty_like(b)
            x[:, -1] = z[:, -1]
            for k in range(n - 2, -1, -1):
                x[:, k] = z[:, k] + inv[:, k] * c[:, k + 1, 0] * x[:, k + 1]
            x = x[..., None]
        else:
            w = np.empty_like(b)  # w_k = Dt_k^{-1} rhs_k
            w[:, 0] = _matvec(inv[:, 0], b[:, 0])
            for k in range(1, n):
                w[:, k] = _matvec(inv[:, k], b[:, k] + c[:, k] * w[:, k - 1])
            x = np.empty_like(b)
            x[:, -1] = w[:, -1]
            for k in range(n - 2, -1, -1):
                x[:, k] = w[:, k] + _matvec(inv[:, k], c[:, k + 1] * x[:, k + 1])
        inner_shape = [self.shape[k] for k in self.order]
        x = x.transpose(0, 2, 1).reshape([B] + inner_shape)
        inverse = np.argsort(perm)
        return np.transpose(x, inverse)


def _direct_chunk(shape):
    n = max(shape)
    m = max(1, math.prod(shape) // n)
    return max(1, _CHUNK_BYTES // (8 * n * m * m))


# -- multigrid ---------------------------------------------------------------

def _coarsen(ell: MultiIndex) -> MultiIndex:
    top = max(ell)
    return tuple(l - 1 if l == top else l for l in ell)


def _hierarchy(ell: MultiIndex, coarse_limit: int):
    levels = [ell]
    while unknowns(levels[-1]) > coarse_limit and max(levels[-1]) >= 2:
        levels.append(_coarsen(levels[-1]))
    return levels


def _restrict(r, fine, coarse):
    """Full weighting along every coarsened axis."""
    for j, (lf, lc) in enumerate(zip(fine, coarse)):
        if lf == lc:
            continue
        ax = j + 1
        even = np.take(r, np.arange(0, r.shape[ax] - 1, 2), axis=ax)
        odd = np.take(r, np.arange(1, r.shape[ax], 2), axis=ax)
        nxt = np.take(r, np.arange(2, r.shape[ax], 2), axis=ax)
        r = 0.25 * even + 0.5 * odd + 0.25 * nxt
    return r


def _prolong(e, coarse, fine):
    """Linear interpolation along every coarsened axis."""
    for j, (lc, lf) in enumerate(zip(coarse, fine)):
        if lf == lc:
            continue
        ax = j + 1
        nc = e.shape[ax]
        shape = list(e.shape)
        shape[ax] = 2 * nc + 1
        out = np.zeros(shape)
        sl = [slice(None)] * e.ndim
        sl[ax] = slice(1, None, 2)
        out[tuple(sl)] = e
        pad = [(0, 0)] * e.ndim
        pad[ax] = (1, 1)
        ep = np.pad(e, pad)
        lo = np.take(ep, np.arange(0, nc + 1), axis=ax)
        hi = np.take(ep, np.arange(1, nc + 2), axis=ax)
        sl[ax] = slice(0, None, 2)
        out[tuple(sl)] = 0.5 * (lo + hi)
        e = out
    return e


class Multigrid:
    def __init__(self, spec, ell, Y, config: SolverConfig):
        self.config = config
        self.ells = _hierarchy(ell, config.coarse_limit)
        self.faces = [face_coefficients(spec, e, Y) for e in self.ells]
        self.ih2 = [_inv_h2(e) for e in self.ells]
        self.diag = [_diagonal(f, w) for f, w in zip(self.faces, self.ih2)]
        self.colors = []
        for e in self.ells:
            idx = np.indices(grid_shape(e)).sum(axis=0) % 2
            self.colors.append((idx == 0, idx == 1))
        self.coarse = BlockTridiagonal(self.faces[-1], self.ih2[-1], grid_shape(self.ells[-1]))

    def _smooth(self, k, u, f, sweeps):
        faces, ih2, diag = self.faces[k], self.ih2[k], self.diag[k]
        for _ in range(sweeps):
            for mask in self.colors[k]:
                r = f - apply_operator(u, faces, ih2)
                u = u + np.where(mask, r / diag, 0.0)
        return u

    def vcycle(self, k, u, f):
        if k == len(self.ells) - 1:
            return self.coarse.solve(f)
        cfg = self.config
        u = self._smooth(k, u, f, cfg.pre_sweeps)
        r = f - apply_operator(u, self.faces[k], self.ih2[k])
        rc = _restrict(r, self.ells[k], self.ells[k + 1])
        ec = self.vcycle(k + 1, np.zeros_like(rc), rc)
        u = u + _prolong(ec, self.ells[k + 1], self.ells[k])
        return self._smooth(k, u, f, cfg.post_sweeps)

    def solve(self, f):
        cfg = self.config
        B = f.shape[0]
        axes = tuple(range(1, f.ndim))
        fnorm = np.sqrt((f**2).sum(axis=axes))
        fnorm = np.where(fnorm > 0, fnorm, 1.0)
        u = np.zeros_like(f)
        cycles = np.zeros(B, dtype=int)
        history = []
        res = np.sqrt((f**2).sum(axis=axes)) / fnorm
        active = res > cfg.tol
        if len(self.ells) == 1:
            return self.coarse.solve(f), cycles, np.zeros(B)
        while active.any():
            if cycles.max() >= cfg.max_cycles:
                raise SolverError(
                    f"multigrid did not reach relative residual {cfg.tol:g} within "
                    f"{cfg.max_cycles} cycles on grid {self.ells[0]} "
                    f"(current {res.max():.3g})", history)
            # converged samples are frozen so each result depends on its own y only
            u = np.where(_bcast(active, u), self.vcycle(0, u, f), u)
            cycles += active
            r = f - apply_operator(u, self.faces[0], self.ih2[0])
            res = np.sqrt((r**2).sum(axis=axes)) / fnorm
            history.append(float(res.max()))
            active = res > cfg.tol
        return u, cycles, res


def _bcast(mask, like):
    return mask.reshape((-1,) + (1,) * (like.ndim - 1))


# -- public API --------------------------------------------------------------

def _check_ell(spec, ell):
    ell = as_multi_index(ell)
    if len(ell) != spec.d:
        raise DomainError(f"multi-index {ell} has {len(ell)} components, expected d={spec.d}")
    if min(ell) < 0:
        raise DomainError(f"multi-index {ell} has a negative component; P is 0 by convention "
                          "and no solve is defined")
    return ell


def _check_Y(spec, Y):
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != spec.s:
        raise DomainError(f"parameter points have {Y.shape[1]} components, expected s={spec.s}")
    if Y.size and np.abs(Y).max() > 0.5:
        j = int(np.argmax(np.abs(Y).max(axis=0)))
        raise DomainError(f"y component {j + 1} lies outside [-1/2, 1/2]")
    return Y


def solve_batch(spec: ProblemSpec, ell, Y, config: SolverConfig = DEFAULT_SOLVER) -> BatchSolution:
    """Solve on grid ``ell`` for every row of ``Y`` (shape (B, s))."""
    ell = _check_ell(spec, ell)
    Y = _check_Y(spec, Y)
    B = Y.shape[0]
    shape = grid_shape(ell)
    size = math.prod(shape)
    if size == 0 or B == 0:
        return BatchSolution(ell, np.zeros((B,) + shape), np.zeros(B), np.zeros(B), np.zeros(B))
    _, f, g = _geometry(spec, ell)
    weight = g * math.prod(2.0**-l for l in ell)
    if config.use_multigrid(ell):
        chunk = max(1, _CHUNK_BYTES // (8 * 12 * size))
        parts = []
        for start in range(0, B, chunk):
            Yc = Y[start:start + chunk]
            mg = Multigrid(spec, ell, Yc, config)
            parts.append(mg.solve(np.broadcast_to(f, (Yc.shape[0],) + shape).copy()))
        u = np.concatenate([p[0] for p in parts])
        cycles = np.concatenate([p[1] for p in parts])
        res = np.concatenate([p[2] for p in parts])
        sweeps = cycles * (config.pre_sweeps + config.post_sweeps)
        cost = cells(ell) * np.maximum(sweeps, 1).astype(float)
    else:
        chunk = _direct_chunk(shape)
        parts = []
        for start in range(0, B, chunk):
            Yc = Y[start:start + chunk]
            faces = face_coefficients(spec, ell, Yc)
            solver = BlockTridiagonal(faces, _inv_h2(ell), shape)
            parts.append(solver.solve(np.broadcast_to(f, (Yc.shape[0],) + shape).copy()))
        u = np.concatenate(parts)
        res = np.zeros(B)
        cost = np.full(B, float(cells(ell)))
    values = (u * weight).reshape(B, -1).sum(axis=1)
    return BatchSolution(ell, u, values, cost, res)


def functional_batch(spec: ProblemSpec, ell, Y, config: SolverConfig = DEFAULT_SOLVER):
    """``(P_ell(y) for each row of Y, cost_units per row)``."""
    sol = solve_batch(spec, ell, Y, config)
    return sol.functional, sol.cost_units


def solve(spec: ProblemSpec, ell, y, config: SolverConfig = DEFAULT_SOLVER) -> GridSolution:
    """Solve the PDE on grid ``ell`` for a single parameter point ``y``."""
    y = np.asarray(y, dtype=float).reshape(1, -1)
    sol = solve_batch(spec, ell, y, config)
    return GridSolution(sol.multi_index, sol.nodal_values[0], float(sol.cost_units[0]),
                        float(sol.residual[0]), y[0])


def functional_value(spec: ProblemSpec, sol: GridSolution) -> float:
    """Trapezoidal approximation of int g u dx (boundary terms vanish)."""
    ell = sol.multi_index
    if sol.nodal_values.shape != grid_shape(ell):
        raise ValueError(f"nodal array {sol.nodal_values.shape} does not match grid {ell}")
    if sol.nodal_values.size == 0:
        return 0.0
    _, _, g = _geometry(spec, ell)
    return float((g * sol.nodal_values).sum() * math.prod(2.0**-l for l in ell))


def cost_model(ell, mode: str = "per_index", d: int = None) -> float:
    """Idealised work: ``2**|ell|_1`` (per_index) or ``2**(d*ell)`` (full_grid)."""
    if mode == "per_index":
        ell = as_multi_index(ell)
        if min(ell) < 0:
            raise DomainError(f"multi-index {ell} has a negative component")
        return float(2.0 ** norm1(ell))
    if mode == "full_grid":
        if d is None:
            raise ValueError("full_grid cost needs the spatial dimension d")
        level = int(ell) if np.ndim(ell) == 0 else int(max(ell))
        return float(2.0 ** (d * level))
    raise ValueError(f"unknown cost mode {mode!r}")
