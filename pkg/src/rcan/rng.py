"""SplitMix64, the only random source in the package.

The k-th output (k = 1, 2, ...) of a generator seeded with ``s`` is::

    z = (s + k * 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9   mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB   mod 2**64
    out = z ^ (z >> 31)

``uniform`` maps ``out`` to ``(out >> 11) * 2**-53`` in [0, 1) and
``randint(n)`` is ``floor(uniform * n)``. Outputs are indexed by a counter, so
drawing a block of m values equals drawing m single values.
"""

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed):
        self.seed = np.uint64(int(seed) % 2**64)
        self.counter = 0

    def next_u64(self, size):
        k = np.arange(self.counter + 1, self.counter + 1 + size, dtype=np.uint64)
        self.counter += size
        with np.errstate(over="ignore"):
            return _mix(self.seed + k * GAMMA)

    def uniform(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return float(u[0]) if size is None else u.reshape(size)

    def randint(self, n):
        """Uniform integer in ``[0, n)``."""
        if n <= 0:
            raise ValueError(f"randint bound must be positive, got {n}")
        return int(self.uniform() * n)
