"""Simple random walks, chronological loop-erasure and loop-free times."""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import _walk as K
from .lattice import (
    ExplicitSet,
    RadialRegion,
    Region,
    WholeLattice,
    direction_vectors,
    exp_r2_floor,
)
from .rng import SeedStream, as_stream

DEFAULT_CAP = 50_000_000
_MAGIC = b"CLW1"


class WalkCapExceeded(RuntimeError):
    """A walk ran past its step cap; ``partial`` holds what was generated."""

    def __init__(self, partial: "Walk", cap: int):
        super().__init__(f"walk exceeded step cap {cap} (len {len(partial)})")
        self.partial = partial
        self.cap = cap


def _as_sites(sites, d: int | None = None) -> np.ndarray:
    arr = np.asarray(sites, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, d or 4), dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return np.ascontiguousarray(arr)


class Walk:
    """Nearest-neighbour path; ``sites[0]`` is the start."""

    def __init__(self, sites, d: int | None = None, check: bool = True):
        self.sites = _as_sites(sites, d)
        self.sites.setflags(write=False)
        self.d = self.sites.shape[1]
        if check and len(self) > 1:
            steps = np.abs(np.diff(self.sites, axis=0)).sum(axis=1)
            if np.any(steps != 1):
                raise ValueError("consecutive sites must be lattice neighbours")

    @classmethod
    def _from_keys(cls, keys: np.ndarray, d: int) -> "Walk":
        w = cls(K.unpack_many(keys, d), d=d, check=False)
        w.__dict__["keys"] = keys
        return w

    def __len__(self) -> int:
        return self.sites.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return type(self)(self.sites[i], d=self.d, check=False)
        return tuple(int(c) for c in self.sites[i])

    def __eq__(self, other) -> bool:
        return (isinstance(other, Walk) and self.sites.shape == other.sites.shape
                and bool(np.all(self.sites == other.sites)))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(len={len(self)}, d={self.d})"

    @property
    def start(self) -> tuple[int, ...]:
        return self[0]

    @property
    def end(self) -> tuple[int, ...]:
        return self[len(self) - 1]

    @cached_property
    def keys(self) -> np.ndarray:
        if len(self) == 0:
            return np.zeros(0, dtype=np.int64)
        return K.pack_many(self.sites)

    @cached_property
    def r2(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.sites, self.sites)

    def tuples(self) -> list[tuple[int, ...]]:
        return [tuple(int(c) for c in s) for s in self.sites]

    def reversed(self) -> "Walk":
        return type(self)(self.sites[::-1], d=self.d, check=False)

    # serialization -----------------------------------------------------------

    def step_codes(self) -> np.ndarray:
        diffs = np.diff(self.sites, axis=0)
        axis = np.argmax(np.abs(diffs), axis=1)
        neg = diffs[np.arange(diffs.shape[0]), axis] < 0
        return (2 * axis + neg).astype(np.uint8)

    def to_bytes(self) -> bytes:
        head = _MAGIC + struct.pack("<BQ", self.d, len(self))
        if len(self) == 0:
            return head
        body = struct.pack(f"<{self.d}q", *self.sites[0]) + self.step_codes().tobytes()
        return head + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Walk":
        if blob[:4] != _MAGIC:
            raise ValueError("not a walk blob")
        d, n = struct.unpack_from("<BQ", blob, 4)
        if n == 0:
            return cls(np.zeros((0, d), dtype=np.int64), d=d)
        off = 4 + struct.calcsize("<BQ")
        start = np.array(struct.unpack_from(f"<{d}q", blob, off), dtype=np.int64)
        off += 8 * d
        codes = np.frombuffer(blob, dtype=np.uint8, count=n - 1, offset=off)
        steps = direction_vectors(d)[codes]
        sites = np.vstack([start, start + np.cumsum(steps, axis=0)])
        return cls(sites, d=d, check=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(f"x{i + 1}" for i in range(self.d)) + "\n")
        for s in self.sites:
            buf.write(",".join(str(int(c)) for c in s) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Walk":
        rows = [r for r in text.strip().splitlines()[1:] if r]
        return cls([[int(c) for c in r.split(",")] for r in rows])


class Saw(Walk):
    """Self-avoiding nearest-neighbour path."""

    def __init__(self, sites, d: int | None = None, check: bool = True):
        super().__init__(sites, d=d, check=check)
        if check and len(self) > 1 and np.unique(self.keys).size != len(self):
            raise ValueError("sites of a Saw must be distinct")


class Occupancy:
    """Site -> smallest visit index, with O(1) membership queries."""

    def __init__(self, sites, d: int | None = None):
        if isinstance(sites, Walk):
            keys, d = sites.keys, sites.d
            r2 = sites.r2
        else:
            arr = _as_sites(sites, d)
            d = arr.shape[1]
            keys = K.pack_many(arr) if arr.shape[0] else np.zeros(0, np.int64)
            r2 = np.einsum("ij,ij->i", arr, arr) if arr.shape[0] else np.zeros(0, np.int64)
        self.d = d
        self.hk, self.hv = K.h_from_keys(np.ascontiguousarray(keys, dtype=np.int64))
        self.size = int(np.unique(keys).size) if keys.size else 0
        self.max_r2 = int(r2.max()) if r2.size else -1
        self._sorted = np.unique(keys)

    @classmethod
    def empty(cls, d: int = 4) -> "Occupancy":
        return cls(np.zeros((0, d), dtype=np.int64), d=d)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, x) -> bool:
        return self.index(x) is not None

    def index(self, x) -> Optional[int]:
        if self.size == 0:
            return None
        k = int(K.pack_many(np.array([x]))[0])
        v = int(K.h_get(self.hk, self.hv, k))
        return None if v < 0 else v

    def union(self, other: "Occupancy") -> "Occupancy":
        return Occupancy(np.vstack([self.sites(), other.sites()]), d=self.d)

    def sites(self) -> np.ndarray:
        return K.unpack_many(self._sorted, self.d)

    def keys(self) -> np.ndarray:
        return self._sorted


@dataclass(frozen=True)
class StoppingTimes:
    """``sigma[n]`` = first index at which the walk is outside ``C_n``."""

    sigma: tuple[int, ...] = field(default_factory=tuple)

    def __getitem__(self, n: int) -> int:
        return self.sigma[n]

    def __len__(self) -> int:
        return len(self.sigma)


def _start_array(start, d: int | None = None) -> np.ndarray:
    x0 = np.asarray(start, dtype=np.int64).ravel()
    if d is not None and x0.size != d:
        raise ValueError("start has the wrong dimension")
    return np.ascontiguousarray(x0)


def srw_until_exit(start, region: Region, seed, cap: int = DEFAULT_CAP) -> Walk:
    """Simple random walk from ``start`` stopped on first leaving ``region``.

    The returned walk ends at the first site outside the region, which is a
    boundary site.  Starting on the boundary gives the one-site walk.
    """
    if cap <= 0:
        raise ValueError("cap must be positive")
    if isinstance(region, WholeLattice):
        raise ValueError("a walk never exits Z^d")
    x0 = _start_array(start, region.d)
    bits, off = K.packing(region.d)
    stream = as_stream(seed)
    if not region.contains(tuple(x0)):
        near = any(region.contains(y) for y in (x0 + direction_vectors(region.d)))
        if not near:
            raise ValueError("start must lie in the region or on its boundary")
    state = stream.state()
    if isinstance(region, RadialRegion):
        lo, hi = region.r2_bounds
        keys, _, status = K.walk_radial(x0, lo, hi, state, cap, bits, off)
    elif isinstance(region, ExplicitSet):
        hk, _ = K.table_from(K.pack_many(region.interior()))
        keys, _, status = K.walk_in_set(x0, hk, state, cap, bits, off)
    else:
        raise TypeError(f"unsupported region {type(region).__name__}")
    w = Walk._from_keys(keys, region.d)
    if status == K.STATUS_CAP:
        raise WalkCapExceeded(w, cap)
    if status == K.STATUS_RANGE:
        raise OverflowError("walk left the packed coordinate range")
    return w


def srw_fixed_steps(start, k: int, seed) -> Walk:
    if k < 0:
        raise ValueError("k must be non-negative")
    x0 = _start_array(start)
    bits, off = K.packing(x0.size)
    keys, _ = K.walk_fixed(x0, int(k), as_stream(seed).state(), bits, off)
    return Walk._from_keys(keys, x0.size)


def loop_erase(walk) -> Saw:
    """Chronological loop-erasure; endpoints are preserved."""
    if not isinstance(walk, Walk):
        walk = Walk(walk)
    if len(walk) == 0:
        return Saw(walk.sites, d=walk.d, check=False)
    pos = K.le_positions(walk.keys)
    out = Saw(walk.sites[pos], d=walk.d, check=False)
    out.__dict__["keys"] = walk.keys[pos]
    return out


def loop_free_times(walk) -> list[int]:
    """Indices ``j`` with ``walk[:j+1]`` and ``walk[j+1:]`` sharing no site."""
    if not isinstance(walk, Walk):
        walk = Walk(walk)
    if len(walk) == 0:
        return []
    return np.flatnonzero(K.loop_free_mask(walk.keys)).tolist()


def first_intersection(walk, target: Occupancy, skip_first: bool = False) -> Optional[int]:
    if not isinstance(walk, Walk):
        walk = Walk(walk)
    if len(target) == 0 or len(walk) == 0:
        return None
    hits = np.isin(walk.keys, target.keys())
    if skip_first:
        hits[0] = False
    idx = np.flatnonzero(hits)
    return int(idx[0]) if idx.size else None


def shell_thresholds(n_max: int) -> np.ndarray:
    """``t[n]`` = largest integer ``r2`` still inside ``C_n``."""
    return np.array([exp_r2_floor(n) for n in range(n_max + 1)], dtype=np.int64)


def shell_stopping_times(walk, n_max: int) -> StoppingTimes:
    if not isinstance(walk, Walk):
        walk = Walk(walk)
    r2 = walk.r2
    out = []
    for n, t in enumerate(shell_thresholds(n_max)):
        out_idx = np.flatnonzero(r2 > t)
        if out_idx.size == 0:
            break
        out.append(int(out_idx[0]))
    return StoppingTimes(tuple(out))


def walk_to_shell(n: float, seed, d: int = 4, cap: int = DEFAULT_CAP) -> Walk:
    """``S[0, sigma_n]`` from the origin."""
    from .lattice import ShellBall

    return srw_until_exit(np.zeros(d, dtype=np.int64), ShellBall(n, d), seed, cap)


def check_window_property(walk: Walk, lf: Sequence[int] | None = None) -> bool:
    """For loop-free ``j < k``: ``LE(walk)`` restricted to ``walk[j..k]`` sites
    equals ``LE(walk[j..k])`` as ordered site sequences."""
    if lf is None:
        lf = loop_free_times(walk)
    full = loop_erase(walk)
    fk = full.keys
    for a in range(len(lf)):
        for b in range(a + 1, len(lf)):
            j, k = lf[a], lf[b]
            win = walk.keys[j:k + 1]
            sub = loop_erase(walk[j:k + 1]).keys
            restricted = fk[np.isin(fk, win)]
            if restricted.shape != sub.shape or np.any(restricted != sub):
                return False
    return True
