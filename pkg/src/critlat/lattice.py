"""Integer lattice geometry: sites, nearest neighbours, and finite regions.

All balls are Euclidean.  Membership is decided on the integer squared norm
``|x|^2`` against precomputed integer thresholds, so ``e^n`` radii never go
through a floating point comparison at the lattice site.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import mpmath
import numpy as np

MAX_DIM = 8


def _check_dim(d: int) -> int:
    d = int(d)
    if not 2 <= d <= MAX_DIM:
        raise ValueError(f"dimension must be in [2, {MAX_DIM}], got {d}")
    return d


def point(*coords: int) -> tuple[int, ...]:
    """Build a lattice site; ``point(1, 0, 0, 0)``."""
    _check_dim(len(coords))
    return tuple(int(c) for c in coords)


def origin(d: int = 4) -> tuple[int, ...]:
    return (0,) * _check_dim(d)


def unit(i: int, d: int = 4, sign: int = 1) -> tuple[int, ...]:
    e = [0] * _check_dim(d)
    e[i] = sign
    return tuple(e)


def norm2(x: Sequence[int]) -> int:
    return int(sum(int(c) * int(c) for c in x))


def direction_vectors(d: int) -> np.ndarray:
    """Unit steps in canonical order ``+e1, -e1, ..., +ed, -ed``."""
    d = _check_dim(d)
    out = np.zeros((2 * d, d), dtype=np.int64)
    for a in range(d):
        out[2 * a, a] = 1
        out[2 * a + 1, a] = -1
    return out


def neighbors(x: Sequence[int]) -> list[tuple[int, ...]]:
    d = _check_dim(len(x))
    out = []
    for a in range(d):
        for s in (1, -1):
            y = list(x)
            y[a] += s
            out.append(tuple(y))
    return out


def exp_r2_floor(t: float) -> int:
    """Largest integer ``k`` with ``k < e^(2t)`` (``t`` real, ``e^(2t)`` > 0)."""
    with mpmath.workdps(50):
        v = mpmath.exp(2 * mpmath.mpf(t))
        c = int(mpmath.ceil(v))
    return c - 1


def exp_r2_ceil(t: float) -> int:
    """Smallest integer ``k`` with ``k >= e^(2t)``."""
    with mpmath.workdps(50):
        return int(mpmath.ceil(mpmath.exp(2 * mpmath.mpf(t))))


def _floor_square(r: float) -> int:
    with mpmath.workdps(50):
        return int(mpmath.floor(mpmath.mpf(r) ** 2))


def ball_points(r2max: int, d: int, r2min: int = 0) -> np.ndarray:
    """All sites with ``r2min <= |x|^2 <= r2max``, lexicographically sorted."""
    d = _check_dim(d)
    if r2max < 0:
        return np.zeros((0, d), dtype=np.int64)
    R = math.isqrt(r2max)
    vals = np.arange(-R, R + 1, dtype=np.int64)
    pts = vals[:, None]
    part = vals * vals
    keep = part <= r2max
    pts, part = pts[keep], part[keep]
    for _ in range(1, d):
        k = pts.shape[0]
        new = np.repeat(pts, vals.size, axis=0)
        col = np.tile(vals, k)
        p2 = np.repeat(part, vals.size) + col * col
        keep = p2 <= r2max
        pts = np.concatenate([new[keep], col[keep, None]], axis=1)
        part = p2[keep]
    if r2min > 0:
        pts = pts[part >= r2min]
    return np.ascontiguousarray(pts)


@dataclass(frozen=True)
class Region:
    """Base class; subclasses fix ``d`` and a membership rule."""

    d: int

    @property
    def finite(self) -> bool:
        return True

    def contains(self, x: Sequence[int]) -> bool:
        raise NotImplementedError

    def interior(self) -> np.ndarray:
        raise NotImplementedError

    def descriptor(self) -> str:
        raise NotImplementedError

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        return np.array([self.contains(tuple(p)) for p in pts], dtype=bool)

    def boundary(self) -> np.ndarray:
        """Outer vertex boundary, lexicographically sorted."""
        if not self.finite:
            raise ValueError("boundary of an infinite region is not enumerable")
        inner = self.interior()
        cands = [inner + e for e in direction_vectors(self.d)]
        cands = np.unique(np.concatenate(cands, axis=0), axis=0)
        return cands[~self.contains_many(cands)]

    def iter_boundary(self) -> Iterator[tuple[int, ...]]:
        for p in self.boundary():
            yield tuple(int(c) for c in p)

    def __len__(self) -> int:
        return int(self.interior().shape[0])


@dataclass(frozen=True)
class RadialRegion(Region):
    """Regions of the form ``lo <= |x|^2 <= hi``."""

    @property
    def r2_bounds(self) -> tuple[int, int]:
        raise NotImplementedError

    def contains(self, x: Sequence[int]) -> bool:
        lo, hi = self.r2_bounds
        r2 = norm2(x)
        return lo <= r2 <= hi

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        lo, hi = self.r2_bounds
        r2 = np.einsum("ij,ij->i", pts, pts)
        return (r2 >= lo) & (r2 <= hi)

    def interior(self) -> np.ndarray:
        return self._interior

    @cached_property
    def _interior(self) -> np.ndarray:
        lo, hi = self.r2_bounds
        pts = ball_points(hi, self.d, lo)
        pts.setflags(write=False)
        return pts


@dataclass(frozen=True)
class EuclideanBall(RadialRegion):
    """``A_N = {x : |x| <= N}``."""

    radius: float = 1.0

    def __init__(self, radius: float, d: int = 4):
        object.__setattr__(self, "d", _check_dim(d))
        object.__setattr__(self, "radius", float(radius))

    @cached_property
    def r2_bounds(self) -> tuple[int, int]:
        return 0, _floor_square(self.radius)

    def descriptor(self) -> str:
        return f"A[N={self.radius:g},d={self.d}]"


@dataclass(frozen=True)
class ShellBall(RadialRegion):
    """``C_n = {z : |z| < e^n}``."""

    n: float = 0

    def __init__(self, n: float, d: int = 4):
        object.__setattr__(self, "d", _check_dim(d))
        object.__setattr__(self, "n", n)

    @cached_property
    def r2_bounds(self) -> tuple[int, int]:
        return 0, exp_r2_floor(self.n)

    def descriptor(self) -> str:
        return f"C[n={self.n:g},d={self.d}]"


@dataclass(frozen=True)
class Annulus(RadialRegion):
    """``A(m, n) = C_n minus C_m``."""

    m: float = 0
    n: float = 1

    def __init__(self, m: float, n: float, d: int = 4):
        if not m < n:
            raise ValueError("annulus needs m < n")
        object.__setattr__(self, "d", _check_dim(d))
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", n)

    @cached_property
    def r2_bounds(self) -> tuple[int, int]:
        return exp_r2_ceil(self.m), exp_r2_floor(self.n)

    def descriptor(self) -> str:
        return f"Ann[m={self.m:g},n={self.n:g},d={self.d}]"


@dataclass(frozen=True)
class ExplicitSet(Region):
    points: frozenset = frozenset()

    def __init__(self, points, d: int | None = None):
        pts = frozenset(tuple(int(c) for c in p) for p in points)
        if d is None:
            if not pts:
                raise ValueError("empty ExplicitSet needs an explicit d")
            d = len(next(iter(pts)))
        d = _check_dim(d)
        if any(len(p) != d for p in pts):
            raise ValueError("mixed dimensions in ExplicitSet")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "points", pts)

    def contains(self, x: Sequence[int]) -> bool:
        return tuple(int(c) for c in x) in self.points

    def interior(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, self.d), dtype=np.int64)
        return np.array(sorted(self.points), dtype=np.int64)

    def descriptor(self) -> str:
        body = ";".join(",".join(map(str, p)) for p in sorted(self.points))
        return f"Set[d={self.d}:{body}]"


@dataclass(frozen=True)
class WholeLattice(Region):
    """``Z^d`` itself; membership is trivial and nothing is enumerable."""

    def __init__(self, d: int = 4):
        object.__setattr__(self, "d", _check_dim(d))

    @property
    def finite(self) -> bool:
        return False

    def contains(self, x) -> bool:
        return True

    def interior(self) -> np.ndarray:
        raise ValueError("Z^d is infinite")

    def descriptor(self) -> str:
        return f"Z[d={self.d}]"


class SiteIndex:
    """Dense box lookup from coordinates to interior indices (``-1`` outside)."""

    def __init__(self, pts: np.ndarray, pad: int = 1):
        pts = np.asarray(pts, dtype=np.int64)
        self.points = pts
        self.d = pts.shape[1]
        if pts.shape[0]:
            self.lo = pts.min(axis=0) - pad
            hi = pts.max(axis=0) + pad
        else:
            self.lo = np.full(self.d, -pad, dtype=np.int64)
            hi = np.full(self.d, pad, dtype=np.int64)
        self.shape = tuple(int(v) for v in hi - self.lo + 1)
        self.table = np.full(self.shape, -1, dtype=np.int64)
        if pts.shape[0]:
            self.table[tuple((pts - self.lo).T)] = np.arange(pts.shape[0])

    def lookup(self, q: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(np.asarray(q, dtype=np.int64))
        rel = q - self.lo
        ok = np.all((rel >= 0) & (rel < np.array(self.shape)), axis=1)
        out = np.full(q.shape[0], -1, dtype=np.int64)
        out[ok] = self.table[tuple(rel[ok].T)]
        return out

    def index(self, x: Sequence[int]) -> int:
        return int(self.lookup(np.array([x]))[0])
