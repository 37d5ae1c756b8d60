"""Dominative p-Laplacian and the two-term mean value expression.

The mean value expression of a field ``v`` at ``(x, t)`` is

    beta * (average of v(., t - dt) over B_eps(x))
        + alpha * sup_{|s|=1} (v(x + eps*s, t - dt) + v(x - eps*s, t - dt)) / 2

and for smooth ``v`` it equals ``v + eps^2/(2(n+p)) * D_p v - dt * v_t`` up to
o(eps^2). Ball averages use a deterministic lattice rule and the supremum a
finite direction set; both are shared with the grid solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import GameParams

JACOBI_TOL = 1e-12
DEFAULT_CELLS = 21
DEFAULT_DIRECTIONS = {1: 1, 2: 64, 3: 256}
GOLDEN_STEPS = 20


# --------------------------------------------------------------------------
# eigenvalues

def _symmetrize(H) -> np.ndarray:
    H = np.atleast_2d(np.asarray(H, float))
    if H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValueError("matrix has non-finite entries")
    return 0.5 * (H + H.T)


def jacobi_eigenvalues(H, tol: float = JACOBI_TOL, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    A = _symmetrize(H).copy()
    n = A.shape[0]
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * scale:
            break
        for i in range(n - 1):
            for j in range(i + 1, n):
                diff = A[j, j] - A[i, i]
                if abs(A[i, j]) <= 1e-18 * abs(diff):
                    # rotation angle below rounding; drop the entry
                    A[i, j] = A[j, i] = 0.0
                    continue
                theta = diff / (2.0 * A[i, j])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                R = np.eye(n)
                R[i, i] = R[j, j] = c
                R[i, j] = s
                R[j, i] = -s
                A = R.T @ A @ R
    return np.sort(np.diag(A))


def lambda_max(H) -> float:
    """Largest eigenvalue of the symmetrized matrix ``H``."""
    A = _symmetrize(H)
    n = A.shape[0]
    if n == 1:
        return float(A[0, 0])
    if n == 2:
        a, b, d = A[0, 0], A[0, 1], A[1, 1]
        return float(0.5 * (a + d) + math.hypot(0.5 * (a - d), b))
    return float(jacobi_eigenvalues(A)[-1])


def dominative(H, params: GameParams) -> float:
    """trace(H) + (p - 2) * lambda_max(H)."""
    A = _symmetrize(H)
    return float(np.trace(A) + (params.p - 2.0) * lambda_max(A))


# --------------------------------------------------------------------------
# smooth fields

class SmoothField:
    """A C^{2,1} field with value and derivatives at single points.

    Subclasses provide ``value`` (vectorized over the leading axes of ``x``)
    and the pointwise derivatives. ``__call__`` aliases ``value`` so a field
    is also usable as payoff data.
    """

    provenance = "analytic"

    def value(self, x, t):
        raise NotImplementedError

    def gradient(self, x, t):
        raise NotImplementedError

    def hessian(self, x, t):
        raise NotImplementedError

    def time_derivative(self, x, t):
        raise NotImplementedError

    def __call__(self, x, t):
        return self.value(x, t)


class FiniteDifferenceField(SmoothField):
    """Derivatives of a plain function by central differences of step ``h_fd``."""

    provenance = "finite_difference"

    def __init__(self, func: Callable, h_fd: float):
        self.func = func
        self.h_fd = float(h_fd)

    def value(self, x, t):
        return np.asarray(self.func(np.asarray(x, float), t), float)

    def gradient(self, x, t):
        x = np.asarray(x, float)
        h = self.h_fd
        E = np.eye(len(x)) * h
        return (self.value(x + E, t) - self.value(x - E, t)) / (2 * h)

    def hessian(self, x, t):
        x = np.asarray(x, float)
        n, h = len(x), self.h_fd
        H = np.empty((n, n))
        f0 = float(self.value(x, t))
        for i in range(n):
            ei = np.zeros(n)
            ei[i] = h
            H[i, i] = (float(self.value(x + ei, t)) - 2 * f0 + float(self.value(x - ei, t))) / h**2
            for j in range(i + 1, n):
                ej = np.zeros(n)
                ej[j] = h
                pts = np.array([x + ei + ej, x + ei - ej, x - ei + ej, x - ei - ej])
                fpp, fpm, fmp, fmm = self.value(pts, t)
                H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4 * h * h)
        return H

    def time_derivative(self, x, t):
        h = self.h_fd
        return (float(self.value(x, t + h)) - float(self.value(x, t - h))) / (2 * h)


# --------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True, eq=False)
class BallRule:
    """Quadrature for the normalized average over a ball centred at the origin.

    ``offsets`` has shape (m, n) and ``weights`` sums to one. The rule is
    symmetric under coordinate reflections and permutations, and its weights
    are adjusted so the second moment matches the ball's exactly; it therefore
    integrates every quadratic polynomial without error.
    """
    offsets: np.ndarray
    weights: np.ndarray
    radius: float
    spacing: float


def ball_rule(n: int, radius: float, spacing: Optional[float] = None,
              cells: int = DEFAULT_CELLS) -> BallRule:
    """Midpoint lattice rule on the ball of given radius.

    With ``spacing=None`` the bounding cube is cut into ``cells**n`` cells and
    cells whose centres lie in the ball are kept. With an explicit ``spacing``
    the lattice is ``spacing * Z^n`` (node-aligned when used on a grid of that
    spacing).
    """
    if spacing is None:
        spacing = 2.0 * radius / cells
        ticks = -radius + (np.arange(cells) + 0.5) * spacing
    else:
        k = int(np.floor(radius / spacing + 1e-9))
        ticks = np.arange(-k, k + 1) * spacing
    mesh = np.stack(np.meshgrid(*([ticks] * n), indexing="ij"), axis=-1).reshape(-1, n)
    r2 = np.sum(mesh**2, axis=1)
    keep = r2 <= radius**2 * (1 + 1e-12)
    offsets = mesh[keep]
    r2 = r2[keep]
    m = len(offsets)
    if m < 2:
        raise ValueError("ball rule needs at least two lattice points; refine the lattice")
    target = radius**2 * n / (n + 2.0)
    mean = r2.mean()
    var = r2.var()
    gamma = (target - mean) / var if var > 0 else 0.0
    weights = (1.0 + gamma * (r2 - mean)) / m
    if np.any(weights <= 0):
        raise ValueError("moment correction produced non-positive weights; refine the lattice")
    weights = weights / weights.sum()
    return BallRule(offsets, weights, float(radius), float(spacing))


def direction_set(n: int, count: Optional[int] = None) -> np.ndarray:
    """Finite set of unit vectors used for the supremum over directions.

    n=1 gives {+1}; n=2 equally spaced angles starting at 0; n>=3 a
    Fibonacci sphere (generalized for n>3 by a deterministic quasi-random
    Gaussian lattice).
    """
    if count is None:
        count = DEFAULT_DIRECTIONS.get(n, 256)
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        phi = np.pi * (1 + 5**0.5) * i
        r = np.sqrt(1 - z * z)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(12345 + n)
    d = rng.standard_normal((count, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def unique_directions(dirs: np.ndarray) -> np.ndarray:
    """Drop directions antipodal to an earlier one (identical midpoints)."""
    keep = []
    for i, s in enumerate(dirs):
        if not any(np.allclose(s, -dirs[j], atol=1e-12) for j in keep):
            keep.append(i)
    return dirs[keep]


@dataclass(frozen=True)
class QuadratureConfig:
    cells: int = DEFAULT_CELLS
    n_dir: Optional[int] = None
    refine_steps: int = GOLDEN_STEPS


@dataclass(frozen=True)
class MeanValueReport:
    lhs: float
    predicted: float
    residual: float
    epsilon: float


def _midpoints(v, x, t, eps, dirs):
    pts = np.concatenate([x + eps * dirs, x - eps * dirs])
    vals = np.asarray(v(pts, t), float)
    k = len(dirs)
    return 0.5 * (vals[:k] + vals[k:])


def _golden_max(g, a, b, steps):
    inv = (5**0.5 - 1) / 2
    c, d = b - inv * (b - a), a + inv * (b - a)
    gc, gd = g(c), g(d)
    for _ in range(steps):
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - inv * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + inv * (b - a)
            gd = g(d)
    return max(gc, gd)


def sup_midpoint(v, x, t, eps, n: int, quad: QuadratureConfig = QuadratureConfig(),
                 refine: bool = True) -> float:
    dirs = direction_set(n, quad.n_dir)
    mids = _midpoints(v, x, t, eps, dirs)
    k = int(np.argmax(mids))
    best = float(mids[k])
    if refine and n == 2 and quad.refine_steps > 0:
        th0 = 2 * np.pi * k / len(dirs)
        dth = 2 * np.pi / len(dirs)

        def g(th):
            s = np.array([[math.cos(th), math.sin(th)]])
            return float(_midpoints(v, x, t, eps, s)[0])

        best = max(best, _golden_max(g, th0 - dth, th0 + dth, quad.refine_steps))
    return best


def ball_average(v, x, t, rule: BallRule) -> float:
    vals = np.asarray(v(x + rule.offsets, t), float)
    return float(rule.weights @ vals)


def mean_value_lhs(v, x, t, params: GameParams,
                   quad: QuadratureConfig = QuadratureConfig()) -> float:
    """Two-term mean value expression of ``v`` at ``(x, t)``.

    ``v`` is any vectorized callable ``v(points, t)``.
    """
    x = np.asarray(x, float).reshape(params.n)
    eps = params.epsilon
    s = t - params.time_step
    rule = ball_rule(params.n, eps, cells=quad.cells)
    avg = ball_average(v, x, s, rule)
    sup = sup_midpoint(v, x, s, eps, params.n, quad)
    value = params.beta * avg + params.alpha * sup
    if not np.isfinite(value):
        raise ValueError("field evaluation returned non-finite values")
    return float(value)


def mean_value_residual(v: SmoothField, x, t, params: GameParams,
                        quad: QuadratureConfig = QuadratureConfig()) -> MeanValueReport:
    x = np.asarray(x, float).reshape(params.n)
    lhs = mean_value_lhs(v, x, t, params, quad)
    eps = params.epsilon
    Dp = dominative(v.hessian(x, t), params)
    predicted = (float(v.value(x, t)) + eps**2 / (2 * (params.n + params.p)) * Dp
                 - params.time_step * float(v.time_derivative(x, t)))
    return MeanValueReport(lhs, predicted, lhs - predicted, eps)
