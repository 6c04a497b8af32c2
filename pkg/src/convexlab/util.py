"""Seeded counter-based random streams and small shared numeric helpers.

All stochastic operations in the package draw from Philox streams keyed by
``(master_seed, chunk_index)``.  Generation over a large index range is split
into fixed-size chunks so that results are bit-reproducible for a given seed
and could be produced by independent workers and concatenated in index order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
CHUNK = 1 << 14  # rows per Philox chunk; fixed so chunking never changes output


def splitmix64(x: int) -> int:
    """One round of splitmix64; used to derive independent sub-seeds."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(seed: int, *tags: int) -> int:
    """Derive a sub-seed from a master seed and integer tags, deterministically."""
    s = seed & _MASK64
    for t in tags:
        s = splitmix64(s ^ splitmix64(t & _MASK64))
    return s


def philox(seed: int, chunk: int = 0) -> np.random.Generator:
    """Generator for stream ``(seed, chunk)``."""
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, chunk & _MASK64]))


def chunked_rows(seed: int, count: int, draw) -> np.ndarray:
    """Assemble ``count`` rows, chunk ``i`` drawn via ``draw(gen, k)`` from stream (seed, i).

    ``draw`` must return a ``(k, ...)`` array and consume the generator
    identically for a given ``k``; the concatenation is in chunk order.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    parts = []
    done = 0
    idx = 0
    while done < count:
        k = min(CHUNK, count - done)
        parts.append(np.asarray(draw(philox(seed, idx), k)))
        done += k
        idx += 1
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)


def unit_vectors(dim: int, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. uniform directions on the unit sphere of R^dim."""

    def draw(gen, k):
        z = gen.standard_normal((k, dim))
        nrm = np.linalg.norm(z, axis=1, keepdims=True)
        # resample the (measure-zero) zero rows deterministically from the tail
        bad = nrm[:, 0] == 0.0
        if bad.any():
            z[bad] = 1.0
            nrm = np.linalg.norm(z, axis=1, keepdims=True)
        return z / nrm

    return chunked_rows(seed, count, draw)


@dataclass(frozen=True)
class MCEstimate:
    """A Monte Carlo estimate with its standard error."""

    value: float
    stderr: float
    samples: int

    def __float__(self) -> float:
        return self.value

    @property
    def half_width_3sigma(self) -> float:
        return 3.0 * self.stderr


def mean_with_stderr(values: np.ndarray) -> MCEstimate:
    v = np.asarray(values, dtype=float)
    n = v.size
    m = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return MCEstimate(m, se, n)


def log_unit_ball_volume(n: int) -> float:
    """log |B_2^n|, computed in log space so it never overflows."""
    return (n / 2.0) * math.log(math.pi) - math.lgamma(n / 2.0 + 1.0)


def unit_ball_volume(n: int) -> float:
    return math.exp(log_unit_ball_volume(n))
