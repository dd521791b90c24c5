"""SplitMix64 pseudo-random generator.

Algorithm (Steele, Lea & Flood 2014, as used to seed xoshiro generators)::

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

all arithmetic modulo 2**64. Bounded integers use rejection sampling on the
full 64-bit output so every value in range is equally likely; the accepted
draw is reduced with ``%``. Uniform floats take the top 53 bits.

Voxel noise is counter-based: draw ``k`` of a volume hashes
``key + (2k + 1) * GAMMA`` and ``key + (2k + 2) * GAMMA`` through the mix
function above, so any voxel's noise can be computed independently of the
order voxels are produced in.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in ``[lo, hi]`` (inclusive)."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        bound = hi - lo + 1
        if bound > MASK64:
            raise ValueError("range wider than 64 bits")
        threshold = (1 << 64) % bound
        while True:
            r = self.next_u64()
            if r >= threshold:
                return lo + r % bound

    def random(self) -> float:
        """Uniform float in ``[0, 1)`` with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def random24(self) -> float:
        """Uniform float in ``[0, 1)`` with 24 random bits (exact in float32)."""
        return (self.next_u64() >> 40) * (1.0 / (1 << 24))


def noise_key(seed: int) -> int:
    """Per-volume key for counter-based voxel noise."""
    return mix64(seed ^ 0x6E6F697365)


def gaussian_at(key: int, index: int) -> float:
    """Standard normal draw for voxel ``index`` (Box-Muller, cosine branch)."""
    base = (key + index * 2 * GAMMA) & MASK64
    h1 = mix64(base + GAMMA)
    h2 = mix64(base + 2 * GAMMA)
    u1 = ((h1 >> 11) + 1) * (1.0 / (1 << 53))
    u2 = (h2 >> 11) * (1.0 / (1 << 53))
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
