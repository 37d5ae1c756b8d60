"""Counter-based random streams.

Every draw is a pure function of ``(seed, stream, step, slot)``: the counter
is hashed with the SplitMix64 output function, so any trace and step can be
regenerated independently and batches of traces are drawn in one vectorized
call.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

STEP_BITS = 24
SLOT_BITS = 4
MAX_SLOTS = 1 << SLOT_BITS


def splitmix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class CounterRNG:
    def __init__(self, seed: int):
        self.seed = int(seed)
        with np.errstate(over="ignore"):
            self._key = splitmix64(np.array([self.seed & (2**64 - 1)], np.uint64))[0]

    def bits(self, streams, step, slot) -> np.ndarray:
        streams = np.asarray(streams, np.uint64)
        counter = ((streams << np.uint64(STEP_BITS)) + np.uint64(step)) << np.uint64(SLOT_BITS)
        counter = counter + np.uint64(slot)
        with np.errstate(over="ignore"):
            return splitmix64(self._key + counter * _GOLDEN)

    def uniforms(self, streams, step, slots) -> np.ndarray:
        """Uniforms in [0, 1), shape ``(len(streams), len(slots))``."""
        slots = list(slots)
        if step >= 1 << STEP_BITS or any(s >= MAX_SLOTS for s in slots):
            raise ValueError("step or slot index exceeds the counter layout")
        cols = [(self.bits(streams, step, s) >> np.uint64(11)).astype(np.float64) * 2.0**-53
                for s in slots]
        return np.stack(cols, axis=1) if cols else np.empty((len(streams), 0))


def box_muller(u, n: int) -> np.ndarray:
    """Standard normals of shape (m, n) from uniforms of shape (m, 2*ceil(n/2))."""
    u = np.asarray(u, float)
    pairs = (n + 1) // 2
    u1 = u[:, 0:2 * pairs:2]
    u2 = u[:, 1:2 * pairs:2]
    rad = np.sqrt(-2.0 * np.log1p(-u1))
    z = np.concatenate([rad * np.cos(2 * np.pi * u2), rad * np.sin(2 * np.pi * u2)], axis=1)
    return z[:, :n]


def uniform_ball_from_uniforms(u_radius, u_gauss, n: int) -> np.ndarray:
    """Uniform points in the unit n-ball: normalized Gaussian times U^(1/n)."""
    g = box_muller(u_gauss, n)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (np.asarray(u_radius, float) ** (1.0 / n))[:, None]
