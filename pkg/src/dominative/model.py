"""Game parameters, space-time geometry and payoff fields.

Everything here is immutable once built. Points are numpy arrays whose last
axis is the spatial dimension; functions accept a single point of shape
``(n,)`` or a batch of shape ``(m, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

STANDARD = "standard"
REMARK24 = "remark24"
SCALINGS = (STANDARD, REMARK24)

# slack for floating comparisons against geometric boundaries
_GEOM_TOL = 1e-12


class ParameterDomainError(ValueError):
    """Raised when parameters fall outside the admissible domain."""


@dataclass(frozen=True)
class GameParams:
    n: int
    p: float
    epsilon: float
    scaling: str = STANDARD

    @property
    def alpha(self) -> float:
        """Probability of a controlled move."""
        return (self.p - 2.0) / (self.p + self.n)

    @property
    def beta(self) -> float:
        """Probability of a uniform random move in the ball."""
        return (self.n + 2.0) / (self.p + self.n)

    @property
    def time_step(self) -> float:
        if self.scaling == REMARK24:
            return self.epsilon**2 / (2.0 * (self.n + self.p))
        return self.epsilon**2

    @property
    def time_coefficient(self) -> float:
        """Coefficient c of u_t in the equation c*u_t = D_p u."""
        return 2.0 * (self.n + self.p) if self.scaling == STANDARD else 1.0

    def with_epsilon(self, epsilon: float) -> "GameParams":
        return make_params(self.n, self.p, epsilon, self.scaling)


def make_params(n: int, p: float, epsilon: float, scaling: str = STANDARD) -> GameParams:
    if int(n) != n or n < 1:
        raise ParameterDomainError(f"dimension n must be an integer >= 1, got {n!r}")
    if not np.isfinite(p) or p <= 2:
        raise ParameterDomainError(f"exponent p must satisfy p > 2, got {p!r}")
    if not np.isfinite(epsilon) or not 0 < epsilon < 1:
        raise ParameterDomainError(f"step epsilon must lie in (0, 1), got {epsilon!r}")
    if scaling not in SCALINGS:
        raise ParameterDomainError(f"unknown time scaling {scaling!r}")
    return GameParams(int(n), float(p), float(epsilon), scaling)


# --------------------------------------------------------------------------
# spatial shapes

@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi <= lo):
            raise ParameterDomainError("box needs matching corners with lower < upper")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def bounding_box(self):
        return np.asarray(self.lower, float), np.asarray(self.upper, float)

    def signed_distance(self, x):
        """Negative inside, positive outside, zero on the boundary."""
        x = np.asarray(x, float)
        lo, hi = self.bounding_box()
        d = np.maximum(lo - x, x - hi)
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
        inside = np.minimum(np.max(d, axis=-1), 0.0)
        return outside + inside

    def contains(self, x):
        x = np.asarray(x, float)
        lo, hi = self.bounding_box()
        return np.all((x > lo) & (x < hi), axis=-1)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterDomainError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def bounding_box(self):
        c = np.asarray(self.center, float)
        return c - self.radius, c + self.radius

    def signed_distance(self, x):
        x = np.asarray(x, float)
        return np.linalg.norm(x - np.asarray(self.center, float), axis=-1) - self.radius

    def contains(self, x):
        return self.signed_distance(x) < 0.0


Shape = Union[Box, Ball]


@dataclass(frozen=True)
class SpaceTimeDomain:
    shape: Shape
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ParameterDomainError(f"time horizon T must be positive, got {self.T}")

    @property
    def dim(self) -> int:
        return self.shape.dim

    def check_params(self, params: GameParams) -> None:
        if params.n != self.dim:
            raise ParameterDomainError(
                f"params have n={params.n} but the domain is {self.dim}-dimensional")
        if not self.T > params.time_step:
            raise ParameterDomainError("T must exceed one time step")

    def contains(self, x, t):
        """Membership in the open cylinder Omega x (0, T)."""
        t = np.asarray(t, float)
        return self.shape.contains(x) & (t > 0) & (t < self.T)


def dist_to_lateral_boundary(domain, x):
    """Distance from ``x`` to the boundary of the spatial domain.

    Returns ``(distance, inside)`` where ``inside`` is True strictly inside.
    Accepts either a SpaceTimeDomain or a bare shape.
    """
    shape = domain.shape if isinstance(domain, SpaceTimeDomain) else domain
    sd = shape.signed_distance(x)
    return np.abs(sd), sd < 0


@dataclass(frozen=True)
class BoundaryStrip:
    """Exterior strip of given width over all times plus the layer below t = 0.

    ``floor`` is the depth of the time layer, defaulting to ``width**2``; the
    game uses its own time step.
    """
    parent: SpaceTimeDomain
    width: float
    floor: float = None

    def __post_init__(self):
        if self.floor is None:
            object.__setattr__(self, "floor", self.width**2)

    def contains(self, x, t):
        x = np.asarray(x, float)
        t = np.asarray(t, float)
        sd = self.parent.shape.signed_distance(x)
        lateral = (sd >= 0) & (sd <= self.width + _GEOM_TOL)
        in_time = t >= -self.floor - _GEOM_TOL
        lateral &= in_time & (t <= self.parent.T + _GEOM_TOL)
        bottom = (sd <= 0) & in_time & (t <= 0)
        return lateral | bottom


def game_strip(domain: SpaceTimeDomain, params: GameParams) -> BoundaryStrip:
    return BoundaryStrip(domain, params.epsilon, params.time_step)


def strip_contains(strip: BoundaryStrip, x, t):
    return strip.contains(x, t)


# --------------------------------------------------------------------------
# payoff fields

class PayoffField:
    """Callable ``F(x, t)`` evaluable on the width-1 strip (and beyond)."""

    kind = "abstract"

    def __call__(self, x, t):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantPayoff(PayoffField):
    c: float
    kind = "constant"

    def __call__(self, x, t):
        x = np.asarray(x, float)
        return np.full(x.shape[:-1], float(self.c)) + 0.0 * np.asarray(t, float)


@dataclass(frozen=True)
class LinearPayoff(PayoffField):
    """F(x, t) = <a, x> + b."""
    a: tuple
    b: float = 0.0
    kind = "linear"

    def __call__(self, x, t):
        x = np.asarray(x, float)
        return x @ np.asarray(self.a, float) + self.b + 0.0 * np.asarray(t, float)


@dataclass(frozen=True, eq=False)
class ShiftedPayoff(PayoffField):
    base: PayoffField
    shift: float
    kind = "shifted"

    def __call__(self, x, t):
        return self.base(x, t) + self.shift


@dataclass(frozen=True, eq=False)
class FunctionPayoff(PayoffField):
    """Wraps a plain vectorized function ``f(x, t)``."""
    func: object
    name: str = "function"
    kind = "function"

    def __call__(self, x, t):
        return np.asarray(self.func(np.asarray(x, float), t), float)


@dataclass(frozen=True, eq=False)
class TabulatedPayoff(PayoffField):
    """Multilinear interpolation of tabulated space-time data.

    ``axes`` are increasing node coordinates per spatial dimension, ``times``
    the increasing time levels, ``values`` has shape ``(len(times), *sizes)``.
    Queries are clamped to the table.
    """
    axes: tuple
    times: np.ndarray
    values: np.ndarray
    kind = "tabulated"

    def __post_init__(self):
        vals = np.asarray(self.values, float)
        shape = (len(self.times),) + tuple(len(a) for a in self.axes)
        if vals.shape != shape:
            raise ParameterDomainError(f"tabulated values have shape {vals.shape}, expected {shape}")
        if not np.all(np.isfinite(vals)):
            raise ParameterDomainError("tabulated payoff must be finite")
        object.__setattr__(self, "values", vals)

    def __call__(self, x, t):
        single = np.asarray(x).ndim == 1
        x = np.atleast_2d(np.asarray(x, float))
        coords = [np.asarray(t, float) * np.ones(len(x))] + [x[:, d] for d in range(x.shape[1])]
        grids = [np.asarray(self.times, float)] + [np.asarray(a, float) for a in self.axes]
        out = _multilinear(grids, self.values, coords)
        return out[0] if single else out


def _multilinear(grids: Sequence[np.ndarray], values: np.ndarray, coords):
    """Multilinear interpolation on a rectilinear grid with clamping."""
    m = len(coords[0])
    idx, frac = [], []
    for g, c in zip(grids, coords):
        c = np.clip(c, g[0], g[-1])
        if len(g) == 1:
            idx.append(np.zeros(m, int))
            frac.append(np.zeros(m))
            continue
        i = np.clip(np.searchsorted(g, c, side="right") - 1, 0, len(g) - 2)
        idx.append(i)
        frac.append((c - g[i]) / (g[i + 1] - g[i]))
    out = np.zeros(m)
    dims = len(grids)
    for corner in range(2**dims):
        w = np.ones(m)
        sel = []
        for d in range(dims):
            bit = (corner >> d) & 1
            w = w * (frac[d] if bit else 1.0 - frac[d])
            sel.append(np.minimum(idx[d] + bit, len(grids[d]) - 1))
        out += w * values[tuple(sel)]
    return out
