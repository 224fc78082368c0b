"""Deterministic random number streams for reproducible Monte Carlo.

Every replica of every experiment draws from its own SplitMix64 stream.
The stream for replica ``k`` under a 64-bit ``master_seed`` is seeded with
``mix64(master_seed, k)``, where ``mix64`` is the SplitMix64 finalizer
applied to ``master_seed XOR k``.  The same mixer derives sub-experiment
seeds inside composite commands, so a single master seed pins an entire
experiment byte for byte.

Conventions, fixed once for the whole package:

* uniforms are ``((bits >> 12) + 0.5) * 2**-52`` — open interval (0, 1),
  zero excluded without branching;
* exponentials are inverse-CDF, ``-log(U) / rate``;
* normals come in Box-Muller pairs from two uniforms, so every draw
  consumes a deterministic number of stream steps.

The scalar `Stream` and the replica-vectorized `StreamArray` walk the
same sequences; the numba simulation kernels re-implement the identical
arithmetic (see ``_gillespie.py``) and are tested for bit equality.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# (k + 0.5) * 2**-52 for k < 2**52 lies strictly inside (0, 1)
_U01_SCALE = 2.0 ** -52


def mix64(seed: int, k: int) -> int:
    """SplitMix64 finalizer of ``seed ^ k``; derives stream seeds."""
    z = (seed ^ k) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def stream_seed(master_seed: int, replica: int) -> int:
    """Seed of the RNG stream assigned to a replica index."""
    return mix64(master_seed, replica)


class Stream:
    """Scalar SplitMix64 stream."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform on the open interval (0, 1)."""
        return ((self.next_u64() >> 12) + 0.5) * _U01_SCALE

    def exponential(self, rate: float) -> float:
        """Exponential waiting time by inverse CDF."""
        return -math.log(self.uniform()) / rate

    def normal_pair(self) -> tuple[float, float]:
        """Two independent standard normals (Box-Muller)."""
        u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        return r * math.cos(2.0 * math.pi * u2), r * math.sin(2.0 * math.pi * u2)

    def normals(self, count: int) -> np.ndarray:
        """``count`` normals, consuming ``2 * ceil(count / 2)`` uniforms."""
        out = np.empty(count)
        for j in range(0, count - 1, 2):
            out[j], out[j + 1] = self.normal_pair()
        if count % 2:
            out[-1] = self.normal_pair()[0]
        return out


class StreamArray:
    """One SplitMix64 stream per replica, advanced in lockstep.

    Replica ``i`` of this array produces exactly the sequence of
    ``Stream(seeds[i])``, which is what makes vectorized ensemble
    integration interchangeable with per-replica loops.
    """

    __slots__ = ("state",)

    def __init__(self, seeds: np.ndarray):
        self.state = np.asarray(seeds, dtype=np.uint64).copy()

    def __len__(self) -> int:
        return self.state.shape[0]

    def next_u64(self) -> np.ndarray:
        self.state += np.uint64(_GAMMA)
        z = self.state.copy()
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def uniform(self) -> np.ndarray:
        return ((self.next_u64() >> np.uint64(12)).astype(np.float64) + 0.5) * _U01_SCALE

    def normal_pair(self) -> tuple[np.ndarray, np.ndarray]:
        u1 = self.uniform()
        u2 = self.uniform()
        r = np.sqrt(-2.0 * np.log(u1))
        return r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)

    def normals(self, count: int) -> np.ndarray:
        """Shape ``(len(self), count)`` matrix of standard normals."""
        cols = []
        for _ in range((count + 1) // 2):
            z1, z2 = self.normal_pair()
            cols.extend((z1, z2))
        return np.stack(cols[:count], axis=1)
