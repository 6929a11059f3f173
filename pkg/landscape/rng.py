"""
Counter-based random streams.

A draw is a pure function of (seed, cell_index, year, phase, lane): the key is
hashed with the SplitMix64 finaliser in vectorised uint64 arithmetic and mapped
to a uniform in (0, 1). Nothing is carried from one draw to the next, so the
result for a cell cannot depend on which worker handled it or in what order the
cells were visited.

Non-uniform variates are obtained by inverse transform of those uniforms.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy import special, stats

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_TO_UNIT = 2.0 ** -53


class Phase(IntEnum):
    INIT_COUNT = 1
    INIT_DIAMETER = 2
    INIT_AGE = 3
    FIRE_GEN = 4
    FIRE = 5
    DEATH = 6
    GERMINATION = 7


def _mix(x):
    x = x ^ (x >> _S30)
    x = x * _MIX1
    x = x ^ (x >> _S27)
    x = x * _MIX2
    return x ^ (x >> _S31)


def _as_u64(values):
    arr = np.asarray(values)
    if arr.dtype.kind == "u":
        return np.atleast_1d(arr.astype(np.uint64))
    return np.atleast_1d(arr.astype(np.int64).astype(np.uint64))


def keyed_uniform(seed, year, phase, cells, lanes):
    """
    Uniforms in (0, 1) of shape cells.shape + lanes.shape.

    Args:
        seed: Run seed
        year: Simulated year (0 for initialisation)
        phase: Phase tag separating the draws of one year
        cells: 1-D array of global cell indices
        lanes: Array of lane numbers within the cell (species, plant slot, ...)
    """
    cells = _as_u64(cells)
    lanes = np.asarray(lanes)
    seed_key = _mix(_as_u64(int(seed) % 2 ** 64))
    step_key = _as_u64(int(year) * 256 + int(phase))
    base = _mix(seed_key ^ _mix(step_key + _GOLDEN))
    cell_keys = _mix(base ^ _mix(cells + _GOLDEN))
    cell_keys = cell_keys.reshape(cell_keys.shape + (1,) * lanes.ndim)
    lane_keys = (_as_u64(lanes).reshape(lanes.shape) + np.uint64(1)) * _GOLDEN
    bits = _mix(cell_keys + lane_keys) >> _S11
    return (bits.astype(np.float64) + 0.5) * _TO_UNIT


@dataclass(frozen=True)
class KeyedStream:
    """The (seed, year) part of the key; phases and cells are supplied per draw."""
    seed: int
    year: int

    def uniform(self, phase, cells, lanes):
        return keyed_uniform(self.seed, self.year, phase, cells, lanes)


def bernoulli(p, u):
    return u < p


def normal(mean, sd, u):
    return mean + sd * special.ndtri(u)


def poisson(lam, u):
    return stats.poisson.ppf(u, lam).astype(np.int64)


def binomial(n, p, u):
    """Binomial(n, p) by exact inverse transform of the uniforms `u`."""
    n, p, u = np.broadcast_arrays(np.asarray(n, dtype=np.int64), np.asarray(p, dtype=float),
                                  np.asarray(u, dtype=float))
    p = np.clip(p, 0.0, 1.0)
    out = np.where(p >= 1.0, n, 0).astype(np.int64)
    draw = (n > 0) & (p > 0.0) & (p < 1.0)
    if draw.any():
        out[draw] = stats.binom.ppf(u[draw], n[draw], p[draw]).astype(np.int64)
    return out


def uniform_int(low, high, u):
    """Integers uniform on [low, high] from uniforms in (0, 1)."""
    span = high - low + 1
    return np.minimum(low + np.floor(u * span).astype(np.int64), high)
