"""Counter-based, splittable random streams.

Every sampler in the package draws from a SplitMix64 counter stream: the
``k``-th output of a stream with key ``K`` is ``mix64(K + k * GOLDEN)``.
Keys are derived from ``(root seed, stream path)`` by folding each path
element through :func:`derive`, so any sample can be regenerated in
isolation and results never depend on how work was scheduled.

The jitted helpers operate on a 2-element ``uint64`` state array
``[key, counter]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

GOLDEN = np.uint64(_GOLDEN)
M1 = np.uint64(_M1)
M2 = np.uint64(_M2)
S30 = np.uint64(30)
S27 = np.uint64(27)
S31 = np.uint64(31)
S32 = np.uint64(32)
S11 = np.uint64(11)
ONE = np.uint64(1)
INV53 = 1.0 / 9007199254740992.0


# -- pure-python reference ---------------------------------------------------

def mix64_py(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_py(key: int, i: int) -> int:
    return mix64_py(key ^ mix64_py((i * _GOLDEN + _GOLDEN) & MASK64))


def stream_py(key: int, count: int) -> list[int]:
    """First ``count`` outputs of the stream with ``key`` (reference)."""
    return [mix64_py(key + (k + 1) * _GOLDEN) for k in range(count)]


# -- jitted kernels -----------------------------------------------------------

@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> S30)) * M1
    z = (z ^ (z >> S27)) * M2
    return z ^ (z >> S31)


@njit(cache=True)
def derive(key, i):
    """Child key ``i`` of ``key``; matches :func:`derive_py`."""
    return mix64(np.uint64(key) ^ mix64(np.uint64(i) * GOLDEN + GOLDEN))


@njit(cache=True)
def new_state(key):
    st = np.empty(2, dtype=np.uint64)
    st[0] = np.uint64(key)
    st[1] = np.uint64(0)
    return st


@njit(cache=True, inline="always")
def next_u64(state):
    state[1] += ONE
    return mix64(state[0] + state[1] * GOLDEN)


@njit(cache=True, inline="always")
def rand_below(state, n):
    """Uniform integer in ``[0, n)`` for ``n < 2**32``."""
    return np.int64(((next_u64(state) >> S32) * np.uint64(n)) >> S32)


@njit(cache=True, inline="always")
def rand_float(state):
    return np.float64(next_u64(state) >> S11) * INV53


# -- host-side stream identity ------------------------------------------------

@dataclass(frozen=True)
class SeedStream:
    """A root seed plus a path of integers naming one independent substream.

    >>> s = SeedStream(42).child(3, 1)
    >>> s.path
    (3, 1)
    >>> s.key == SeedStream(42, (3, 1)).key
    True
    """

    root: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.root) <= MASK64:
            raise ValueError("root seed must fit in 64 unsigned bits")
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def child(self, *idx: int) -> "SeedStream":
        return SeedStream(self.root, self.path + tuple(idx))

    @property
    def key(self) -> int:
        k = mix64_py(int(self.root))
        for p in self.path:
            k = derive_py(k, p)
        return k

    def state(self) -> np.ndarray:
        return np.array([self.key, 0], dtype=np.uint64)

    def ukey(self) -> np.uint64:
        return np.uint64(self.key)

    def provenance(self) -> str:
        return f"{self.root}:" + "/".join(str(p) for p in self.path)


def as_stream(seed) -> SeedStream:
    if isinstance(seed, SeedStream):
        return seed
    return SeedStream(int(seed))


@njit(cache=True)
def _draw_block(state, out):
    for i in range(out.shape[0]):
        out[i] = next_u64(state)


def draw_u64(stream: SeedStream, count: int) -> np.ndarray:
    """Raw 64-bit outputs of a stream (used for reproducibility checks)."""
    out = np.empty(count, dtype=np.uint64)
    _draw_block(stream.state(), out)
    return out
