"""Deterministic 64-bit PRNG (splitmix64) used for every random choice.

Keeping the generator in-package (rather than relying on numpy's RNG)
pins bit-exact reproducibility of datasets, weight init, and batch
sampling across platforms and library versions.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(state: int) -> tuple[int, int]:
    """Advance the splitmix64 recurrence once.

    Returns (output, next_state). ``state`` is any 64-bit integer.
    """
    state = (state + _GAMMA) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31), state


def mix(seed: int, *values: int) -> int:
    """Hash a seed together with integer tags into a new 64-bit seed."""
    s = seed & _MASK
    for v in values:
        out, _ = splitmix64((s ^ (v & _MASK)) & _MASK)
        s = out
    return s


class Rng:
    """Sequential stream of pseudo-random values over splitmix64."""

    def __init__(self, seed: int):
        self._state = seed & _MASK
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        out, self._state = splitmix64(self._state)
        return out

    def uniform01(self) -> float:
        """Uniform in [0, 1) with 53 bits of resolution."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform01()

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) without modulo bias."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        """Gaussian sample via Box-Muller (one spare value cached)."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return mean + std * z
        # 1 - u is in (0, 1], keeping the log argument positive.
        u1 = 1.0 - self.uniform01()
        u2 = self.uniform01()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return mean + std * r * math.cos(2.0 * math.pi * u2)

    def truncated_normal(self, std: float, clip_sigmas: float = 2.0) -> float:
        """Normal(0, std) resampled until within +/- clip_sigmas * std."""
        while True:
            z = self.normal()
            if abs(z) <= clip_sigmas:
                return std * z
