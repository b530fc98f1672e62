"""SplitMix64 counter-based generator.

Every random draw in the package goes through this module so that a single
64-bit seed reproduces a run exactly.  The generator is the usual one:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

Because the state advances by a constant, the k-th output is a pure function
of ``seed + (k + 1) * gamma`` which lets us draw whole arrays at once.
"""
import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
MASK64 = (1 << 64) - 1


def _mix(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Stateful wrapper; ``counter`` is the number of outputs consumed."""

    def __init__(self, seed):
        self.seed = np.uint64(int(seed) & MASK64)
        self.counter = 0

    def next_uint64(self, size):
        size = int(size)
        k = np.arange(self.counter + 1, self.counter + 1 + size, dtype=np.uint64)
        with np.errstate(over="ignore"):
            state = self.seed + k * GAMMA
        self.counter += size
        return _mix(state)

    def random(self, size):
        """Uniform doubles in [0, 1) using the top 53 bits."""
        bits = self.next_uint64(size) >> np.uint64(11)
        return bits.astype(np.float64) * (1.0 / 9007199254740992.0)

    def uniform(self, low, high, size):
        return low + (high - low) * self.random(size)

    def normal(self, size):
        """Standard normals by Box-Muller (two uniforms per output)."""
        size = int(size)
        u1 = self.random(size)
        u2 = self.random(size)
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)

    def spawn(self, key):
        """Independent child stream derived from (seed, key)."""
        base = _mix(np.array([self.seed ^ np.uint64(int(key) & MASK64)], dtype=np.uint64))[0]
        return SplitMix64(int(base))


def splitmix64_reference(seed, count):
    """Pure-integer reference used to cross-check the vectorised path."""
    state = seed & MASK64
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        out.append(z ^ (z >> 31))
    return out
