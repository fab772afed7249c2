"""Reproducible random streams.

An :class:`RngStream` is an immutable ``(seed, stream_id)`` pair. Every
operation that consumes randomness builds a fresh Philox generator from it, so
handing the same stream to two calls yields the same draws. Use
:meth:`RngStream.child` to derive independent sub-streams.

Gaussian deviates come from the polar Box-Muller method applied to the
generator's uniforms; pairs are consumed in row-major order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def generator(self) -> np.random.Generator:
        # Philox-4x64 takes a 128-bit key: seed in the low word, stream in the high word
        return np.random.Generator(np.random.Philox(key=self.seed | (self.stream_id << 64)))

    def child(self, k: int) -> "RngStream":
        return RngStream(self.seed, _splitmix64(self.stream_id ^ _splitmix64(int(k) + 1)))

    def normals(self, count: int) -> np.ndarray:
        return polar_normals(self.generator(), count)


def polar_normals(gen: np.random.Generator, count: int) -> np.ndarray:
    """``count`` standard normal deviates by the Marsaglia polar method."""
    count = int(count)
    out = np.empty(count)
    have = 0
    while have < count:
        need_pairs = (count - have + 1) // 2
        # acceptance rate is pi/4; over-draw so one round almost always suffices
        m = int(need_pairs / 0.78) + 16
        uv = 2.0 * gen.random((m, 2)) - 1.0
        s = uv[:, 0] ** 2 + uv[:, 1] ** 2
        ok = (s > 0.0) & (s < 1.0)
        uv, s = uv[ok], s[ok]
        f = np.sqrt(-2.0 * np.log(s) / s)
        z = (uv * f[:, None]).ravel()
        take = min(z.size, count - have)
        out[have:have + take] = z[:take]
        have += take
    return out


def as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(int(rng))
