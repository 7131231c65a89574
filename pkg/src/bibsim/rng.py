"""Counter-based random streams.

Every stochastic draw in the simulator is a pure function of (seed, *key),
so traces replay bit-exactly and common random numbers across policies fall
out for free: two policies asking for the period-t choice uniform get the
same value because they hash the same key.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def counter_uniform(seed: int, *key: int) -> float:
    """Uniform in [0, 1) determined entirely by (seed, *key)."""
    z = _splitmix64(seed & _MASK64)
    for k in key:
        z = _splitmix64((z ^ (k & _MASK64)) & _MASK64)
    # 53 high bits -> double in [0, 1)
    return (z >> 11) * (1.0 / (1 << 53))


def counter_geometric(seed: int, *key: int, p: float) -> int:
    """Geometric on {1, 2, ...} with success probability p, via inversion."""
    u = counter_uniform(seed, *key)
    if p >= 1.0:
        return 1
    return int(math.floor(math.log1p(-u) / math.log1p(-p))) + 1
