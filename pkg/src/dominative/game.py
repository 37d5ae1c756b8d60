"""Monte Carlo simulation of the controller's game.

Each step the token moves with probability beta to a uniform point of
B_eps(x_k), and otherwise to x_k + eps*s or x_k - eps*s with equal
probability, s being the direction the strategy picks. Time decreases by one
step. The game stops the first time the token is in the boundary strip and
pays F there.

All traces of a batch are advanced together. Randomness for trace i at step
k comes from the counter stream keyed by (seed, i, k), so a batch can be
split or reordered without changing any trace.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dpp import interpolate
from .model import GameParams, PayoffField, SpaceTimeDomain, game_strip
from .operators import direction_set
from .rng import CounterRNG, box_muller, uniform_ball_from_uniforms

RANDOM_MOVE, CONTROLLED_PLUS, CONTROLLED_MINUS = 0, 1, 2
OUTCOME_NAMES = ("random_move", "controlled_plus", "controlled_minus")

SLOT_COIN = 0
SLOT_RADIUS = 1
SLOT_GAUSS = 2
SLOT_STRATEGY = 12


class StoppingBoundViolation(AssertionError):
    pass


def _draw_slots(n: int):
    pairs = (n + 1) // 2
    if SLOT_GAUSS + 2 * pairs > SLOT_STRATEGY:
        raise ValueError(f"dimension {n} exceeds the counter slot layout")
    return range(SLOT_GAUSS + 2 * pairs)


# --------------------------------------------------------------------------
# strategies

@dataclass(frozen=True)
class StepContext:
    rng: CounterRNG
    streams: np.ndarray
    step: int
    history: Optional[list] = None


@dataclass(frozen=True, eq=False)
class Strategy:
    """A rule mapping current states to unit directions.

    ``rule(x, t, ctx)`` receives a batch of positions ``(m, n)`` and times
    ``(m,)``. Built-in rules are Markov and ignore ``ctx.history``.
    """
    rule: Callable
    kind: str
    eta: float = 0.0

    def directions(self, x, t, ctx: StepContext) -> np.ndarray:
        s = np.asarray(self.rule(x, t, ctx), float).reshape(x.shape)
        norms = np.linalg.norm(s, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError(f"strategy {self.kind} returned a non-unit direction")
        return s


def fixed_strategy(sigma) -> Strategy:
    s = np.asarray(sigma, float)
    s = s / np.linalg.norm(s)
    return Strategy(lambda x, t, ctx: np.broadcast_to(s, x.shape), "fixed")


def random_direction_strategy() -> Strategy:
    def rule(x, t, ctx):
        n = x.shape[1]
        if n > 4:
            raise ValueError("random directions support n <= 4")
        u = ctx.rng.uniforms(ctx.streams, ctx.step, range(SLOT_STRATEGY, SLOT_STRATEGY + 4))
        g = box_muller(u, n)
        return g / np.linalg.norm(g, axis=1, keepdims=True)
    return Strategy(rule, "random_direction")


def custom_strategy(fn: Callable, kind: str = "barrier_test") -> Strategy:
    """Wrap a deterministic function ``fn(x, t) -> unit directions``."""
    return Strategy(lambda x, t, ctx: fn(x, t), kind)


def greedy_strategy(grid, tie_tol: float = 1e-12) -> Strategy:
    """Pick the solver direction maximizing the interpolated midpoint.

    Ties within ``tie_tol`` (relative) go to the lowest direction index.
    """
    dirs = grid.stencil.directions
    eps, dt = grid.params.epsilon, grid.params.time_step

    def rule(x, t, ctx):
        out = np.empty_like(x)
        for tv in np.unique(t):
            sel = np.nonzero(t == tv)[0]
            xs = x[sel]
            level = grid.level_values(tv - dt)
            mids = np.empty((len(dirs), len(sel)))
            for k, s in enumerate(dirs):
                mids[k] = 0.5 * (_interp(grid, level, xs + eps * s) + _interp(grid, level, xs - eps * s))
            top = mids.max(axis=0)
            ok = mids >= top - tie_tol * np.maximum(1.0, np.abs(top))
            out[sel] = dirs[np.argmax(ok, axis=0)]
        return out

    return Strategy(rule, "greedy")


def _interp(grid, level, X):
    return interpolate(level, grid.origin, grid.h, X)


def direction_gap(grid, x, t, refine: int = 8) -> float:
    """Estimated shortfall of the solver's direction set against a finer one.

    This is the eta the greedy strategy gives up at ``(x, t)``.
    """
    n = grid.params.n
    if n == 1:
        return 0.0
    eps, dt = grid.params.epsilon, grid.params.time_step
    level = grid.level_values(t - dt)
    x = np.asarray(x, float).reshape(1, n)

    def best(dirs):
        mids = [0.5 * (_interp(grid, level, x + eps * s) + _interp(grid, level, x - eps * s))[0]
                for s in dirs]
        return max(mids)

    coarse = grid.stencil.directions
    fine = direction_set(n, 2 * refine * len(coarse))
    return max(0.0, best(fine) - best(coarse))


# --------------------------------------------------------------------------
# single steps

def transition(x, sigma, u, params: GameParams):
    """Apply one move given uniforms ``u`` (coin, radius, gaussian slots)."""
    x = np.asarray(x, float)
    eps = params.epsilon
    coin = u[:, SLOT_COIN]
    ball = uniform_ball_from_uniforms(u[:, SLOT_RADIUS], u[:, SLOT_GAUSS:], params.n) * eps
    plus = (coin >= params.beta) & (coin < params.beta + 0.5 * params.alpha)
    minus = coin >= params.beta + 0.5 * params.alpha
    outcome = np.where(plus, CONTROLLED_PLUS, np.where(minus, CONTROLLED_MINUS, RANDOM_MOVE))
    move = np.where(plus[:, None], eps * sigma, np.where(minus[:, None], -eps * sigma, ball))
    return x + move, outcome


def step(x, t, sigma, params: GameParams, rng: np.random.Generator):
    """One game step from a single state using a numpy Generator."""
    sigma = np.asarray(sigma, float)
    if abs(np.linalg.norm(sigma) - 1.0) > 1e-12:
        raise ValueError("sigma must be a unit vector")
    u = rng.random((1, len(_draw_slots(params.n))))
    x1, outcome = transition(np.asarray(x, float)[None, :], sigma[None, :], u, params)
    return x1[0], t - params.time_step, OUTCOME_NAMES[int(outcome[0])]


def sample_steps(x, sigma, params: GameParams, m: int, seed: int, step_index: int = 0):
    """``m`` independent one-step samples from the same state.

    Returns displacements ``(m, n)`` and outcome codes.
    """
    rng = CounterRNG(seed)
    u = rng.uniforms(np.arange(m), step_index, _draw_slots(params.n))
    x = np.broadcast_to(np.asarray(x, float), (m, params.n))
    s = np.broadcast_to(np.asarray(sigma, float), (m, params.n))
    x1, outcome = transition(x, s, u, params)
    return x1 - x, outcome


# --------------------------------------------------------------------------
# whole games

@dataclass
class GameTrace:
    states: np.ndarray       # (tau + 1, n)
    times: np.ndarray        # (tau + 1,)
    outcomes: list
    directions: np.ndarray   # (tau, n)
    tau: int
    payoff: float

    @property
    def exit_point(self):
        return self.states[-1], float(self.times[-1])


@dataclass
class BatchResult:
    tau: np.ndarray
    exit_x: np.ndarray
    exit_t: np.ndarray
    payoff: np.ndarray
    first_trace: int = 0
    records: Optional[list] = field(default=None, repr=False)


def stopping_bound(domain: SpaceTimeDomain, params: GameParams) -> float:
    return domain.T / params.time_step + 1


def simulate(x0, t0, strategy: Strategy, F: PayoffField, params: GameParams,
             domain: SpaceTimeDomain, num: int, seed: int, first_trace: int = 0,
             record: bool = False) -> BatchResult:
    """Play ``num`` independent games from ``(x0, t0)``."""
    x0 = np.asarray(x0, float).reshape(params.n)
    # the top face t0 = T is admitted so the horizon value can be estimated
    if not (domain.shape.contains(x0) and 0 < t0 <= domain.T):
        raise ValueError(f"start ({x0}, {t0}) is not in the cylinder")
    strip = game_strip(domain, params)
    rng = CounterRNG(seed)
    slots = _draw_slots(params.n)
    dt = params.time_step
    bound = stopping_bound(domain, params)
    x = np.tile(x0, (num, 1))
    t = np.full(num, float(t0))
    tau = np.zeros(num, int)
    active = np.ones(num, bool)
    records = [] if record else None
    k = 0
    while active.any():
        idx = np.nonzero(active)[0]
        streams = first_trace + idx
        ctx = StepContext(rng, streams, k)
        sigma = strategy.directions(x[idx], t[idx], ctx)
        u = rng.uniforms(streams, k, slots)
        xn, outcome = transition(x[idx], sigma, u, params)
        k += 1
        tn = np.full(len(idx), t0 - k * dt)
        x[idx] = xn
        t[idx] = tn
        if record:
            records.append((idx, xn.copy(), tn.copy(), outcome, sigma.copy()))
        stop = strip.contains(xn, tn)
        tau[idx[stop]] = k
        active[idx[stop]] = False
        if k > bound:
            raise StoppingBoundViolation(f"trace exceeded tau <= T/dt + 1 = {bound}")
    payoff = np.asarray(F(x, t), float)
    return BatchResult(tau, x, t, payoff, first_trace, records)


def play(x0, t0, strategy: Strategy, F: PayoffField, params: GameParams,
         domain: SpaceTimeDomain, seed: int, trace_index: int = 0) -> GameTrace:
    res = simulate(x0, t0, strategy, F, params, domain, 1, seed, trace_index, record=True)
    states = [np.asarray(x0, float)] + [r[1][0] for r in res.records]
    times = [float(t0)] + [float(r[2][0]) for r in res.records]
    outcomes = [OUTCOME_NAMES[int(r[3][0])] for r in res.records]
    dirs = np.array([r[4][0] for r in res.records])
    return GameTrace(np.array(states), np.array(times), outcomes, dirs, int(res.tau[0]),
                     float(res.payoff[0]))


def check_trace(trace: GameTrace, domain: SpaceTimeDomain, params: GameParams) -> None:
    """Assert the structural invariants of a realized game."""
    strip = game_strip(domain, params)
    dt, eps = params.time_step, params.epsilon
    k = np.arange(trace.tau + 1)
    assert np.allclose(trace.times, trace.times[0] - k * dt, atol=1e-12, rtol=0)
    assert trace.tau <= stopping_bound(domain, params)
    inside = strip.contains(trace.states, trace.times)
    assert not inside[:-1].any() and inside[-1]
    jumps = np.linalg.norm(np.diff(trace.states, axis=0), axis=1)
    assert np.all(jumps <= eps * (1 + 1e-12))


@dataclass
class ValueEstimate:
    mean: float
    std_error: float
    num_samples: int
    confidence_radius: float
    metadata: dict = field(default_factory=dict)


def estimate_value(x0, t0, strategy: Strategy, F: PayoffField, params: GameParams,
                   domain: SpaceTimeDomain, num_samples: int, seed: int,
                   return_batch: bool = False):
    if num_samples < 100:
        raise ValueError("estimate_value needs at least 100 samples")
    batch = simulate(x0, t0, strategy, F, params, domain, num_samples, seed)
    mean = float(np.mean(batch.payoff))
    se = float(np.std(batch.payoff, ddof=1) / math.sqrt(num_samples))
    est = ValueEstimate(mean, se, num_samples, 1.96 * se,
                        {"strategy": strategy.kind, "eta": strategy.eta,
                         "max_tau": int(batch.tau.max())})
    return (est, batch) if return_batch else est


# --------------------------------------------------------------------------
# martingale structure

@dataclass
class DriftReport:
    states: np.ndarray
    times: np.ndarray
    drifts: np.ndarray
    ci: np.ndarray

    @property
    def max_drift(self) -> float:
        return float(self.drifts.max())

    @property
    def min_drift(self) -> float:
        return float(self.drifts.min())

    def supermartingale(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.drifts <= self.ci + tol))

    def submartingale(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.drifts >= -self.ci - tol))


def supermartingale_check(process_fn: Callable, strategy: Strategy, x0, t0,
                          params: GameParams, domain: SpaceTimeDomain,
                          num_samples: int = 20, seed: int = 0, m: int = 10_000,
                          max_states: int = 20) -> DriftReport:
    """One-step drift E[f(next) | state] - f(state) at states visited by play.

    ``num_samples`` traces are played to collect states; at each of up to
    ``max_states`` of them, ``m`` fresh one-step samples estimate the drift.
    """
    batch = simulate(x0, t0, strategy, lambda x, t: np.zeros(len(x)), params, domain,
                     num_samples, seed, record=True)
    xs = [np.asarray(x0, float)]
    ts = [float(t0)]
    for k, (idx, xn, tn, _, _) in enumerate(batch.records):
        alive = batch.tau[idx] > k + 1
        xs.extend(xn[alive])
        ts.extend(tn[alive])
    pick = np.unique(np.linspace(0, len(xs) - 1, min(max_states, len(xs))).round().astype(int))
    rng = CounterRNG(seed + 1)
    slots = _draw_slots(params.n)
    dt = params.time_step
    drifts, cis = [], []
    for j, i in enumerate(pick):
        x, t = xs[i], ts[i]
        ctx = StepContext(rng, np.array([2**35 + j]), 0)
        s = strategy.directions(x[None, :], np.array([t]), ctx)
        u = rng.uniforms(np.arange(m), j, slots)
        xn, _ = transition(np.broadcast_to(x, (m, params.n)), np.broadcast_to(s, (m, params.n)),
                           u, params)
        vals = np.asarray(process_fn(xn, t - dt), float)
        base = float(np.asarray(process_fn(x[None, :], t), float)[0])
        drifts.append(float(vals.mean()) - base)
        cis.append(1.96 * float(vals.std(ddof=1)) / math.sqrt(m))
    return DriftReport(np.array([xs[i] for i in pick]), np.array([ts[i] for i in pick]),
                       np.array(drifts), np.array(cis))
