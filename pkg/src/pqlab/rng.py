"""SplitMix64 stream used for every random draw in the package.

The sequence is fixed bit-for-bit so that instance files can be regenerated
by any implementation.  With all arithmetic modulo 2**64, output ``k``
(k = 1, 2, ...) of a stream seeded with ``s`` is::

    z = s + k * 0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

Uniform doubles are ``(out >> 11) * 2**-53`` in [0, 1).  A standard normal
consumes two consecutive uniforms ``u1, u2`` (Box-Muller, cosine branch only):
``sqrt(-2 * log(1 - u1)) * cos(2 * pi * u2)``.

Sub-streams are keyed by integer labels: ``derive_seed(seed, l1, l2, ...)``
folds each label in as ``seed = mix(seed ^ mix(label + GAMMA))`` where
``mix`` is the three-line finalizer above applied to a single word.
"""
from __future__ import annotations

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *labels: int) -> int:
    s = np.array([seed & _MASK], dtype=np.uint64)
    for label in labels:
        lab = np.array([label & _MASK], dtype=np.uint64) + GAMMA
        s = _mix(s ^ _mix(lab))
    return int(s[0])


class SplitMix64:
    """Counter-style SplitMix64 generator (see module docstring)."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self._count = 0

    def next_uint64(self, n: int) -> np.ndarray:
        k = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        z = np.uint64(self.seed) + k * GAMMA
        return _mix(z)

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = (self.next_uint64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return low + (high - low) * u

    def normal(self, n: int) -> np.ndarray:
        u = self.uniform(2 * n).reshape(n, 2)
        return np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])
