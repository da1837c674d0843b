"""Seeded nucleus sampling for the server's decode loop.

SplitMix64 keeps generation reproducible per request seed; truncation keeps
the minimal probability-sorted prefix reaching top_p (ties broken by token
order) and renormalizes before drawing.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MASS_EPS = 1e-9


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        return self.next_u64() / 2.0**64


def truncate_nucleus(dist: dict[str, float], top_p: float) -> list[tuple[str, float]]:
    ranked = sorted(dist.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = []
    cum = 0.0
    for token, p in ranked:
        kept.append((token, p))
        cum += p
        if cum >= top_p - _MASS_EPS:
            break
    mass = math.fsum(p for _, p in kept)
    return [(token, p / mass) for token, p in kept]


def draw(kept: list[tuple[str, float]], rng: SplitMix64) -> tuple[str, float]:
    u = rng.random()
    cum = 0.0
    for token, p in kept:
        cum += p
        if u < cum:
            return token, p
    return kept[-1]
