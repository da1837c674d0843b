"""Deterministic, seedable PRNG used for all sampling.

SplitMix64 (Steele, Lea & Flood 2014): a 64-bit counter-based generator
with a strong avalanche finalizer. Chosen over ``random.Random`` so that
sampled outputs are reproducible bit-for-bit across Python versions and
platforms, which the run-replay contract requires.

Streams: ``derive_seed(master, index)`` gives every query its own
independent seed, so batch results do not depend on scheduling order.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    """Minimal deterministic PRNG; one instance per sampling stream."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return self.next_u64() / 2.0**64


def derive_seed(master_seed: int, index: int) -> int:
    """Seed for the ``index``-th stream of a master seed.

    The rule is fixed (one SplitMix64 step from ``master + (index+1) * golden``)
    so parallel workers derive identical streams regardless of scheduling.
    """
    return SplitMix64((master_seed + (index + 1) * _GOLDEN) & _MASK64).next_u64()
