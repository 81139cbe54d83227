"""Portable seeded random numbers.

Every random draw in the package goes through :class:`SplitMix64`, so a seed
produces the same features, datasets and initial weights on any platform and
numpy version.

Algorithm (all arithmetic modulo 2**64)::

    state_i = seed + (i + 1) * 0x9E3779B97F4A7C15
    z = (state_i ^ (state_i >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out_i = z ^ (z >> 31)

``out_i`` is the i-th output of the standard SplitMix64 generator.
Uniforms on the open interval (0, 1) are ``((out_i >> 11) + 0.5) * 2**-53``.
Standard normals use Box-Muller on consecutive uniform pairs
``(u1, u2)``: ``sqrt(-2 ln u1) * cos(2 pi u2)`` then
``sqrt(-2 ln u1) * sin(2 pi u2)``.

Independent sub-streams are derived with :meth:`SplitMix64.spawn`, which
hashes the parent seed together with a string key (BLAKE2b, 8-byte digest).
"""

import hashlib

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def splitmix64(seed, start, count):
    """Outputs ``start .. start+count-1`` of the SplitMix64 stream for ``seed``."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK64) + idx * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Sequential SplitMix64 stream with uniform and Gaussian helpers."""

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def raw(self, n):
        out = splitmix64(self.seed, self.counter, n)
        self.counter += n
        return out

    def uniform(self, shape=(), low=0.0, high=1.0):
        n = int(np.prod(shape, dtype=np.int64))
        bits = self.raw(n) >> np.uint64(11)
        u = (bits.astype(np.float64) + 0.5) * (2.0 ** -53)
        return (low + (high - low) * u).reshape(shape)

    def normal(self, shape=()):
        n = int(np.prod(shape, dtype=np.int64))
        m = (n + 1) // 2
        u = self.uniform((2 * m,))
        r = np.sqrt(-2.0 * np.log(u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n].reshape(shape)

    def permutation(self, n):
        # argsort of uniforms; ties are impossible in practice and broken stably
        return np.argsort(self.uniform((n,)), kind="stable")

    def spawn(self, key):
        digest = hashlib.blake2b(
            self.seed.to_bytes(8, "little") + str(key).encode("utf-8"), digest_size=8
        ).digest()
        return SplitMix64(int.from_bytes(digest, "little"))
