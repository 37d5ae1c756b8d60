"""Closed-form solutions and the exterior-sphere barrier.

The families below solve ``c * u_t = D_p u`` with ``c = 2(n+p)`` under the
standard time scaling and ``c = 1`` under the alternative one:

* ``constant``        u = c0
* ``linear``          u = <a, x> + b
* ``quadratic_time``  u = |x - x0|^2 + t * 2(n+p-2)/c
* ``cosh_exp``        u = exp(kappa t) cosh(x_1), kappa = (p-1)/c

Under the standard scaling ``quadratic_time`` is also an exact solution of
the discrete dynamic programming identity, not only of the PDE.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import GameParams, ParameterDomainError, STANDARD
from .operators import QuadratureConfig, ball_rule, direction_set, dominative
from .rng import CounterRNG, uniform_ball_from_uniforms


class ReferenceSolution:
    kind = "abstract"
    provenance = "analytic"

    def __call__(self, x, t):
        return self.value(x, t)


@dataclass(frozen=True)
class ConstantSolution(ReferenceSolution):
    c: float = 0.0
    n: int = 1
    kind = "constant"

    def value(self, x, t):
        x = np.asarray(x, float)
        return np.full(x.shape[:-1], float(self.c)) + 0.0 * np.asarray(t, float)

    def gradient(self, x, t):
        return np.zeros(self.n)

    def hessian(self, x, t):
        return np.zeros((self.n, self.n))

    def time_derivative(self, x, t):
        return 0.0


@dataclass(frozen=True)
class LinearSolution(ReferenceSolution):
    a: tuple
    b: float = 0.0
    kind = "linear"

    @property
    def n(self):
        return len(self.a)

    def value(self, x, t):
        x = np.asarray(x, float)
        return x @ np.asarray(self.a, float) + self.b + 0.0 * np.asarray(t, float)

    def gradient(self, x, t):
        return np.asarray(self.a, float)

    def hessian(self, x, t):
        return np.zeros((self.n, self.n))

    def time_derivative(self, x, t):
        return 0.0


@dataclass(frozen=True)
class QuadraticTimeSolution(ReferenceSolution):
    n: int
    p: float
    center: Optional[tuple] = None
    scaling: str = STANDARD
    kind = "quadratic_time"

    @property
    def speed(self) -> float:
        c = 2.0 * (self.n + self.p) if self.scaling == STANDARD else 1.0
        return 2.0 * (self.n + self.p - 2.0) / c

    def _center(self):
        return np.zeros(self.n) if self.center is None else np.asarray(self.center, float)

    def value(self, x, t):
        d = np.asarray(x, float) - self._center()
        return np.sum(d * d, axis=-1) + self.speed * np.asarray(t, float)

    def gradient(self, x, t):
        return 2.0 * (np.asarray(x, float) - self._center())

    def hessian(self, x, t):
        return 2.0 * np.eye(self.n)

    def time_derivative(self, x, t):
        return self.speed


@dataclass(frozen=True)
class CoshExpSolution(ReferenceSolution):
    n: int
    p: float
    scaling: str = STANDARD
    kind = "cosh_exp"

    @property
    def kappa(self) -> float:
        c = 2.0 * (self.n + self.p) if self.scaling == STANDARD else 1.0
        return (self.p - 1.0) / c

    def value(self, x, t):
        x = np.asarray(x, float)
        return np.exp(self.kappa * np.asarray(t, float)) * np.cosh(x[..., 0])

    def gradient(self, x, t):
        g = np.zeros(self.n)
        g[0] = math.exp(self.kappa * t) * math.sinh(float(np.asarray(x)[0]))
        return g

    def hessian(self, x, t):
        H = np.zeros((self.n, self.n))
        H[0, 0] = math.exp(self.kappa * t) * math.cosh(float(np.asarray(x)[0]))
        return H

    def time_derivative(self, x, t):
        return self.kappa * float(self.value(np.asarray(x, float), t))


REFERENCE_IDS = ("constant", "linear", "quadratic_time", "cosh_exp")


def make_reference(kind: str, params: GameParams, **kw) -> ReferenceSolution:
    n, p = params.n, params.p
    if kind == "constant":
        return ConstantSolution(float(kw.get("c", 0.0)), n)
    if kind == "linear":
        a = tuple(float(v) for v in kw.get("a", [1.0] + [0.0] * (n - 1)))
        if len(a) != n:
            raise ParameterDomainError("linear reference needs len(a) == n")
        return LinearSolution(a, float(kw.get("b", 0.0)))
    if kind == "quadratic_time":
        center = kw.get("center")
        return QuadraticTimeSolution(n, p, None if center is None else tuple(center), params.scaling)
    if kind == "cosh_exp":
        return CoshExpSolution(n, p, params.scaling)
    raise ParameterDomainError(f"unknown reference solution {kind!r}")


def pde_residual(sol: ReferenceSolution, x, t, params: GameParams) -> float:
    """c * u_t - D_p u at one point."""
    return params.time_coefficient * sol.time_derivative(x, t) - dominative(sol.hessian(x, t), params)


def validate_reference(sol: ReferenceSolution, params: GameParams, points, times,
                       tol: float = 1e-10) -> float:
    """Largest |pde_residual| over the probe points; raises if above ``tol``."""
    worst = 0.0
    for x, t in zip(points, times):
        r = abs(pde_residual(sol, x, t, params))
        scale = max(1.0, abs(params.time_coefficient * sol.time_derivative(x, t)))
        worst = max(worst, r / scale)
    if worst > tol:
        raise ValueError(f"reference {sol.kind} fails the PDE check: residual {worst:.3e}")
    return worst


# --------------------------------------------------------------------------
# barrier

@dataclass(frozen=True)
class BarrierFunction:
    """w(x) = -a|x-z|^2 - b|x-z|^(-xi) + c on the annulus delta < |x-z| < R.

    With ``quadratic_only`` the singular term is dropped (b = 0); that variant
    is only a sanity mode for the drift estimator.
    """
    z: tuple
    delta: float
    R: float
    n: int
    p: float
    quadratic_only: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ParameterDomainError("the barrier needs n >= 2")
        if not self.xi > 0:
            raise ParameterDomainError("the barrier needs n + p > 4")
        if not 0 < self.delta < self.R:
            raise ParameterDomainError("need 0 < delta < R")

    @property
    def xi(self) -> float:
        return self.n + self.p - 4.0

    @property
    def a(self) -> float:
        return 2.0 * (self.n + self.p) / (self.n + self.p - 2.0)

    @property
    def b(self) -> float:
        if self.quadratic_only:
            return 0.0
        return (2.0 * self.a / self.xi) * self.R ** (self.xi + 2.0)

    @property
    def c(self) -> float:
        return self.a * self.delta**2 + self.b * self.delta ** (-self.xi)

    def radial(self, r):
        r = np.asarray(r, float)
        return -self.a * r**2 - self.b * r ** (-self.xi) + self.c

    def radial_derivative(self, r):
        r = np.asarray(r, float)
        return -2.0 * self.a * r + self.b * self.xi * r ** (-self.xi - 1.0)

    def value(self, x):
        x = np.asarray(x, float)
        return self.radial(np.linalg.norm(x - np.asarray(self.z, float), axis=-1))

    def __call__(self, x, t=None):
        return self.value(x)

    def hessian(self, x):
        d = np.asarray(x, float) - np.asarray(self.z, float)
        r = np.linalg.norm(d)
        e = d / r
        f1_over_r = -2.0 * self.a + self.b * self.xi * r ** (-self.xi - 2.0)
        f2 = -2.0 * self.a - self.b * self.xi * (self.xi + 1.0) * r ** (-self.xi - 2.0)
        P = np.outer(e, e)
        return f2 * P + f1_over_r * (np.eye(self.n) - P)


def barrier_dominative(w: BarrierFunction, x, params: GameParams) -> float:
    r = float(np.linalg.norm(np.asarray(x, float) - np.asarray(w.z, float)))
    eps = params.epsilon
    if not w.delta - eps < r < w.R + eps:
        raise ValueError(f"|x - z| = {r} outside the extended annulus")
    return dominative(w.hessian(x), params)


@dataclass
class BarrierDriftReport:
    radii: np.ndarray
    increments: np.ndarray       # Monte Carlo estimate per probe
    ci: np.ndarray               # 1.96 standard errors
    quadrature_increments: np.ndarray
    threshold: float             # -eps^2
    passed: bool


def barrier_drift_check(w: BarrierFunction, params: GameParams, probes: Sequence,
                        m: int = 100_000, seed: int = 0,
                        quad: QuadratureConfig = QuadratureConfig()) -> BarrierDriftReport:
    """One-step expected increment of w under the worst controlled direction.

    The increment is beta * E[w(y) - w(x)] for y uniform in B_eps(x) plus
    alpha times the largest midpoint increment over the direction set. The
    ball term is estimated by Monte Carlo with antithetic pairs (y, 2x - y)
    and the quadratic Taylor term as control variate, and independently by
    the lattice rule.
    """
    eps = params.epsilon
    if eps > w.delta / 2:
        raise ValueError("eps must not exceed delta/2")
    z = np.asarray(w.z, float)
    dirs = direction_set(params.n, quad.n_dir)
    rule = ball_rule(params.n, eps, cells=quad.cells)
    rng = CounterRNG(seed)
    half = m // 2
    radii, incs, cis, qincs = [], [], [], []
    for k, x in enumerate(probes):
        x = np.asarray(x, float)
        r = float(np.linalg.norm(x - z))
        if not (w.delta + eps < r < w.R - eps):
            raise ValueError(f"probe at radius {r} is within eps of the annulus edges")
        w0 = float(w.value(x))
        mids = 0.5 * (w.value(x + eps * dirs) + w.value(x - eps * dirs)) - w0
        control = float(mids.max())
        u = rng.uniforms(np.arange(half), k, slots=range(2 + 2 * ((params.n + 1) // 2)))
        y = uniform_ball_from_uniforms(u[:, 1], u[:, 2:], params.n) * eps
        # control variate: the quadratic Taylor term has known ball mean
        H = w.hessian(x)
        quad_term = 0.5 * np.einsum("mi,ij,mj->m", y, H, y)
        pair = 0.5 * (w.value(x + y) + w.value(x - y)) - w0 - quad_term
        rand = float(pair.mean()) + eps**2 * np.trace(H) / (2 * (params.n + 2))
        se = float(pair.std(ddof=1) / math.sqrt(half))
        incs.append(params.beta * rand + params.alpha * control)
        cis.append(1.96 * params.beta * se)
        qincs.append(params.beta * float(rule.weights @ (w.value(x + rule.offsets) - w0))
                     + params.alpha * control)
        radii.append(r)
    incs, cis = np.array(incs), np.array(cis)
    threshold = -eps**2
    return BarrierDriftReport(np.array(radii), incs, cis, np.array(qincs), threshold,
                              bool(np.all(incs <= threshold + cis)))
