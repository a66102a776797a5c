"""Counter-based SplitMix64 random streams.

Every draw is a pure function of ``(seed, label, counter)``, so two streams
built from the same seed and label yield the same values on any platform,
and streams with different labels are decorrelated by hashing the label
into the key.
"""

import numpy as np
import xxhash

from .errors import ContractError

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)


def mix64(x):
    """SplitMix64 finalizer on a Python int."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * _M1) & _MASK
    x = ((x ^ (x >> 27)) * _M2) & _MASK
    return x ^ (x >> 31)


def _mix64_array(x):
    x = x ^ (x >> np.uint64(30))
    x = x * np.uint64(_M1)
    x = x ^ (x >> np.uint64(27))
    x = x * np.uint64(_M2)
    return x ^ (x >> np.uint64(31))


def _stream_key(seed, label):
    label_hash = xxhash.xxh64_intdigest(label.encode("utf-8"))
    return mix64((seed & _MASK) ^ mix64(label_hash))


class RngStream:
    """A labelled, single-owner random stream.

    Do not share one instance between threads; call :meth:`substream`
    to hand each worker its own stream instead.
    """

    def __init__(self, seed, label=""):
        if not isinstance(seed, (int, np.integer)):
            raise ContractError(f"seed must be an integer, got {type(seed).__name__}")
        self.seed = int(seed) & _MASK
        self.label = str(label)
        self.counter = 0
        self._key = _stream_key(self.seed, self.label)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, label={self.label!r}, counter={self.counter})"

    def substream(self, label):
        return RngStream(self.seed, f"{self.label}/{label}" if self.label else str(label))

    # raw 64-bit draws

    def next_u64(self):
        self.counter += 1
        return mix64(self._key + self.counter * _GOLDEN)

    def u64_array(self, n):
        n = int(n)
        start = self.counter + 1
        self.counter += n
        idx = np.arange(start, start + n, dtype=np.uint64)
        with np.errstate(over="ignore"):
            x = np.uint64(self._key) + idx * np.uint64(_GOLDEN)
            return _mix64_array(x)

    # derived distributions

    def uniform(self, lo=0.0, hi=1.0):
        if lo > hi:
            raise ContractError(f"uniform bounds reversed: lo={lo} > hi={hi}")
        u = (self.next_u64() >> 11) * _INV_2_53
        if lo == hi:
            return float(lo)
        x = lo + (hi - lo) * u
        return x if x < hi else float(np.nextafter(hi, lo))

    def uniforms(self, n, lo=0.0, hi=1.0):
        if lo > hi:
            raise ContractError(f"uniform bounds reversed: lo={lo} > hi={hi}")
        u = (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        if lo == hi:
            return np.full(int(n), float(lo))
        x = lo + (hi - lo) * u
        return np.minimum(x, np.nextafter(hi, lo))

    def normals(self, n):
        """Standard normals by Box-Muller; consumes two draws per value."""
        n = int(n)
        u = self.uniforms(2 * n)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def integer(self, high):
        """Uniform integer in ``[0, high)``."""
        if high < 1:
            raise ContractError("integer() needs high >= 1")
        return min(int(self.uniform() * high), high - 1)

    def bernoulli(self, p):
        return self.uniform() < p

    def permutation(self, n):
        keys = self.uniforms(n)
        return np.argsort(keys, kind="stable")

    def sample_without_replacement(self, n, k):
        k = min(int(k), int(n))
        return self.permutation(n)[:k]


def rng_draw_uniform(stream, lo, hi):
    """Draw one value in ``[lo, hi)`` from ``stream``; ``lo == hi`` returns ``lo``."""
    return stream.uniform(lo, hi)
