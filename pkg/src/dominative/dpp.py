"""Time-marching solver for the dynamic programming identity on a grid.

At every interior node x and level t_j > 0,

    u(x, t_j) = beta * avg_{B_eps(x)} u(., t_{j-1})
                + alpha * max_k (u(x + eps s_k, t_{j-1}) + u(x - eps s_k, t_{j-1})) / 2

and u = F on strip nodes and on the levels t <= 0. Off-node values come from
multilinear interpolation. On a uniform grid every query offset has the same
fractional position relative to its cell for every node, so each update is a
fixed stencil: the ball average is a correlation with a node-aligned kernel
and each direction is a 2 * 2^n tap average. All weights are nonnegative and
sum to one, so every update is a convex combination of previous-level values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from .model import GameParams, PayoffField, SpaceTimeDomain
from .operators import ball_rule, direction_set, unique_directions

_TIME_TOL = 1e-9


class GridTooCoarse(ValueError):
    pass


class OutOfCoverage(ValueError):
    pass


class ComparisonInputError(ValueError):
    """Raised when the payoffs handed to the comparison check are not ordered."""


@dataclass(frozen=True)
class GridConfig:
    h: Optional[float] = None
    h_ratio: float = 8.0
    n_dir: Optional[int] = None

    def spacing(self, eps: float) -> float:
        return float(self.h) if self.h is not None else eps / self.h_ratio


@dataclass(frozen=True, eq=False)
class DppStencil:
    shape: tuple
    pad: int
    ball_kernel: np.ndarray
    directions: np.ndarray
    taps: tuple  # per direction: (integer shifts (k, n), weights (k,))
    alpha: float
    beta: float

    def core(self, arr):
        return arr[tuple(slice(self.pad, N - self.pad) for N in self.shape)]

    def _view(self, arr, shift):
        P = self.pad
        return arr[tuple(slice(P + s, N - P + s) for s, N in zip(shift, self.shape))]

    def ball_average(self, prev):
        flipped = self.ball_kernel[(slice(None, None, -1),) * prev.ndim]
        return self.core(fftconvolve(prev, flipped, mode="same"))

    def midpoints(self, prev, k, out=None, tmp=None):
        shifts, weights = self.taps[k]
        core = tuple(N - 2 * self.pad for N in self.shape)
        out = np.empty(core) if out is None else out
        tmp = np.empty(core) if tmp is None else tmp
        np.multiply(self._view(prev, shifts[0]), weights[0], out=out)
        for s, w in zip(shifts[1:], weights[1:]):
            np.multiply(self._view(prev, s), w, out=tmp)
            out += tmp
        return out

    def apply(self, prev):
        """Right-hand side on the core block of the grid."""
        best = self.midpoints(prev, 0)
        mid, tmp = np.empty_like(best), np.empty_like(best)
        for k in range(1, len(self.taps)):
            np.maximum(best, self.midpoints(prev, k, mid, tmp), out=best)
        best *= self.alpha
        best += self.beta * self.ball_average(prev)
        return best


def _build_stencil(shape, h, params: GameParams, n_dir) -> DppStencil:
    n, eps = params.n, params.epsilon
    rule = ball_rule(n, eps, spacing=h)
    K = int(round(np.max(np.abs(rule.offsets)) / h)) if len(rule.offsets) else 0
    kernel = np.zeros((2 * K + 1,) * n)
    idx = np.rint(rule.offsets / h).astype(int) + K
    np.add.at(kernel, tuple(idx.T), rule.weights)
    dirs = unique_directions(direction_set(n, n_dir))
    taps = []
    reach = K
    for s in dirs:
        acc = {}
        for sign in (1.0, -1.0):
            o = sign * eps * s / h
            base = np.floor(o + 1e-12).astype(int)
            f = np.clip(o - base, 0.0, 1.0)
            for corner in range(2**n):
                bits = np.array([(corner >> d) & 1 for d in range(n)])
                w = 0.5 * np.prod(np.where(bits == 1, f, 1.0 - f))
                if w == 0.0:
                    continue
                key = tuple(int(v) for v in base + bits)
                acc[key] = acc.get(key, 0.0) + w
                reach = max(reach, max(abs(v) for v in key))
        keys = sorted(acc)
        taps.append((np.array(keys, int), np.array([acc[k] for k in keys])))
    return DppStencil(tuple(shape), reach, kernel, dirs, tuple(taps), params.alpha, params.beta)


@dataclass(eq=False)
class ValueGrid:
    """Nodal values of the solved field on levels t_j = j * dt, j = -1..J."""
    axes: tuple
    times: np.ndarray
    values: np.ndarray
    interior: np.ndarray
    h: float
    params: GameParams
    domain: SpaceTimeDomain
    payoff: PayoffField
    stencil: DppStencil = field(repr=False)

    @property
    def dt(self) -> float:
        return self.params.time_step

    @property
    def J(self) -> int:
        return len(self.times) - 2

    @property
    def origin(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes])

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def level_of(self, t) -> int:
        """Index into ``values`` of the level nearest to ``t``."""
        t = float(t)
        if t > self.domain.T + _TIME_TOL:
            raise OutOfCoverage(f"t = {t} lies above the horizon T = {self.domain.T}")
        j = int(round(t / self.dt))
        if abs(t - j * self.dt) > 0.5 * self.dt + _TIME_TOL or not -1 <= j <= self.J:
            raise OutOfCoverage(f"t = {t} is not within half a step of a stored level")
        return j + 1

    def level_values(self, t) -> np.ndarray:
        return self.values[self.level_of(t)]

    def value_at(self, x, t):
        """Multilinear interpolation in space on the level nearest to ``t``."""
        x = np.asarray(x, float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        out = interpolate(self.level_values(t), self.origin, self.h, X)
        return float(out[0]) if single else out


def interpolate(level: np.ndarray, origin, h: float, X: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of one level on the uniform grid."""
    n = level.ndim
    rel = (X - origin) / h
    # queries at nodes return nodal values exactly despite rounding in rel
    near = np.rint(rel)
    rel = np.where(np.abs(rel - near) < 1e-9, near, rel)
    shape = np.array(level.shape)
    if np.any(rel < -1e-9) or np.any(rel > shape - 1 + 1e-9):
        raise OutOfCoverage("query point outside the grid")
    base = np.clip(np.floor(rel).astype(int), 0, shape - 2)
    f = np.clip(rel - base, 0.0, 1.0)
    out = np.zeros(len(X))
    for corner in range(2**n):
        w = np.ones(len(X))
        idx = []
        for d in range(n):
            bit = (corner >> d) & 1
            w = w * (f[:, d] if bit else 1.0 - f[:, d])
            idx.append(base[:, d] + bit)
        out += w * level[tuple(idx)]
    return out


def _evaluate(F, nodes, t):
    vals = np.asarray(F(nodes, t), float)
    if vals.shape != nodes.shape[:-1]:
        vals = np.broadcast_to(vals, nodes.shape[:-1]).copy()
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"payoff is not finite on the grid at t = {t}")
    return vals


def build_grid(domain: SpaceTimeDomain, F: PayoffField, params: GameParams,
               config: GridConfig = GridConfig()) -> ValueGrid:
    """Allocate the grid and stencil without marching."""
    domain.check_params(params)
    eps = params.epsilon
    h = config.spacing(eps)
    if not 0 < h <= eps / 4 * (1 + 1e-12):
        raise GridTooCoarse(f"grid spacing h = {h} exceeds eps/4 = {eps / 4}")
    lo, hi = domain.shape.bounding_box()
    n_core = np.ceil((hi - lo) / h - 1e-9).astype(int) + 1
    # the pad depends on the stencil reach, which depends only on h and eps
    stencil = _build_stencil((1,) * params.n, h, params, config.n_dir)
    P = stencil.pad
    sizes = tuple(int(m) + 2 * P for m in n_core)
    axes = tuple(lo[d] + h * (np.arange(sizes[d]) - P) for d in range(params.n))
    stencil = DppStencil(sizes, P, stencil.ball_kernel, stencil.directions, stencil.taps,
                         stencil.alpha, stencil.beta)
    J = int(math.ceil(domain.T / params.time_step - _TIME_TOL))
    times = params.time_step * np.arange(-1, J + 1)
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    interior = domain.shape.contains(nodes)
    values = np.empty((J + 2,) + sizes)
    return ValueGrid(axes, times, values, interior, h, params, domain, F, stencil)


def solve_dpp(domain: SpaceTimeDomain, F: PayoffField, params: GameParams,
              config: GridConfig = GridConfig()) -> ValueGrid:
    grid = build_grid(domain, F, params, config)
    nodes = grid.nodes()
    mask = grid.interior
    core_mask = grid.stencil.core(mask)
    grid.values[0] = _evaluate(F, nodes, grid.times[0])
    grid.values[1] = _evaluate(F, nodes, grid.times[1])
    for j in range(2, len(grid.times)):
        cur = _evaluate(F, nodes, grid.times[j])
        rhs = grid.stencil.apply(grid.values[j - 1])
        grid.stencil.core(cur)[core_mask] = rhs[core_mask]
        grid.values[j] = cur
    return grid


@dataclass
class DppResidualReport:
    max_abs_residual: float
    argmax_node: tuple
    argmax_level: int
    per_level: np.ndarray


def dpp_residual(grid: ValueGrid) -> DppResidualReport:
    """Recompute the right-hand side from stored values and compare."""
    core_mask = grid.stencil.core(grid.interior)
    P = grid.stencil.pad
    per_level = np.zeros(grid.J)
    best, where = -1.0, ((), 0)
    for j in range(2, len(grid.times)):
        rhs = grid.stencil.apply(grid.values[j - 1])
        diff = np.where(core_mask, np.abs(grid.stencil.core(grid.values[j]) - rhs), 0.0)
        k = int(np.argmax(diff))
        per_level[j - 2] = diff.flat[k]
        if diff.flat[k] > best:
            best = float(diff.flat[k])
            where = (tuple(int(i) + P for i in np.unravel_index(k, diff.shape)), j - 1)
    return DppResidualReport(best, where[0], where[1], per_level)


@dataclass
class ComparisonResult:
    ok: bool
    max_violation: float
    upper: ValueGrid
    lower: ValueGrid


def check_comparison(domain: SpaceTimeDomain, F1: PayoffField, F2: PayoffField,
                     params: GameParams, config: GridConfig = GridConfig(),
                     tol: float = 1e-10) -> ComparisonResult:
    """Solve with F1 >= F2 and report the worst violation of u1 >= u2."""
    g1 = build_grid(domain, F1, params, config)
    nodes = g1.nodes()
    sd = domain.shape.signed_distance(nodes)
    reach = params.epsilon + math.sqrt(params.n) * g1.h
    used = (sd >= 0) & (sd <= reach)
    for t in g1.times:
        sel = np.ones_like(used) if t <= 0 else used
        gap = _evaluate(F1, nodes, t) - _evaluate(F2, nodes, t)
        if np.any(gap[sel] < -1e-12):
            raise ComparisonInputError(
                f"F1 >= F2 fails on the boundary strip at t = {t:.6g} "
                f"(min gap {gap[sel].min():.3e})")
    u1 = solve_dpp(domain, F1, params, config)
    u2 = solve_dpp(domain, F2, params, config)
    violation = float(np.max(u2.values - u1.values))
    return ComparisonResult(violation <= tol, max(violation, 0.0), u1, u2)
