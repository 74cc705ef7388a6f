"""Numba helpers shared by the compiled kernels."""

import numpy as np
from numba import njit, uint64

_GOLDEN = uint64(0x9E3779B97F4A7C15)
_M1 = uint64(0xBF58476D1CE4E5B9)
_M2 = uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True)
def splitmix_next(state):
    """Advance a one-element uint64 state array; return the next 64-bit output."""
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> uint64(30))) * _M1
    z = (z ^ (z >> uint64(27))) * _M2
    return z ^ (z >> uint64(31))


@njit(cache=True, nogil=True)
def uniform01(state):
    """Uniform double in [0, 1) from the top 53 bits."""
    return (splitmix_next(state) >> uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def randbelow(state, n):
    k = np.int64(uniform01(state) * n)
    return min(k, n - 1)


def new_state(seed: int) -> np.ndarray:
    return np.array([seed & ((1 << 64) - 1)], dtype=np.uint64)
