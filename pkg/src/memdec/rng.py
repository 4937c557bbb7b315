"""Deterministic seed derivation and counter-based uniform streams.

All randomness in the toolkit flows from a single master seed through
`derive_seed`, a splitmix64-style mixing chain: every (stage, index, ...)
path yields an independent 64-bit stream key, so results are identical for
any execution order or degree of parallelism.

The syndrome sampler additionally needs one uniform per (shot, noise
location) that can be evaluated for any subset of shots without replaying a
sequential generator. `counter_uniforms` provides that: draw i of stream k
is the splitmix64 output at state k + (i+1)*GOLDEN, vectorised over numpy
uint64 arrays.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    """splitmix64 finalizer on a python int (mod 2^64)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *path: int) -> int:
    """Derive a 64-bit stream key from a master seed and an index path.

    Stage names are passed as small integers (see `Stage` constants below)
    so the derivation is stable across releases.
    """
    state = _mix((master + _GOLDEN) & _MASK)
    for part in path:
        state = _mix(state ^ _mix((part + _GOLDEN) & _MASK))
    return state


class Stage:
    """Fixed stage tags for hierarchical seed derivation."""

    DATASET = 1
    TRAIN = 2
    RETRAIN = 3
    PROGRAM = 4
    CHIP = 5
    TEST_SET = 6
    MASK = 7
    NOISE = 8


def spawn_generator(master: int, *path: int) -> np.random.Generator:
    """numpy Generator seeded from the derived key."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, *path)))


_U64_GOLDEN = np.uint64(_GOLDEN)
_U64_MIX1 = np.uint64(_MIX1)
_U64_MIX2 = np.uint64(_MIX2)


def counter_uniforms(key: int, indices: np.ndarray) -> np.ndarray:
    """Uniform [0,1) doubles for draw `indices` of the stream `key`.

    `indices` is a uint64 array; entry i is independent of every other index,
    so callers may evaluate any subset of a stream in any order. uint64
    arithmetic wraps mod 2^64 by construction.
    """
    with np.errstate(over="ignore"):
        z = np.uint64(key) + (indices + np.uint64(1)) * _U64_GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _U64_MIX1
        z = (z ^ (z >> np.uint64(27))) * _U64_MIX2
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53
