"""The +-1 spin field built from the wired forest, and its test-function pairings.

A field sample on ``A_N`` is one Wilson forest plus one fair coin per forest
component.  The rescaled field ``phi_n(x) = a_n Y_{nx}`` is paired with a
test function on the lattice ``n^{-1} Z^d`` as a Riemann sum,

    <h, phi_n> = n^{-d} a_n sum_{|z| <= nK} h(z/n) Y_z,

so that the variance stays of order one as ``n`` grows.
"""
from __future__ import annotations

import io
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from numba import njit
from scipy.integrate import quad
from scipy.special import gamma, jv

from .estimate import Estimate, parallel_map
from .green import lattice_ball_count
from .lattice import EuclideanBall, SiteIndex
from .rng import as_stream, derive, mix64, new_state
from .wilson import DEFAULT_WALK_CAP, WiredGraph, WilsonCapExceeded, _wilson_into, component_labels

FIELD_SITE_BUDGET = 2_000_000


class LatticeBudgetExceeded(ValueError):
    pass


def scaling_a_n(n: float, d: int = 4, a: float | None = None) -> float:
    """``sqrt(3 log n)`` in d = 4; ``a n^((d-4)/2)`` for d >= 5 (``a`` defaults to 1)."""
    if d < 4:
        raise ValueError("the field is only defined for d >= 4")
    if n < 2 and not math.isclose(n, math.e):
        raise ValueError("n must be at least 2")
    if d == 4:
        if a is not None:
            warnings.warn("a is ignored in d = 4", stacklevel=2)
        return math.sqrt(3 * math.log(n))
    a = 1.0 if a is None else float(a)
    if a <= 0:
        raise ValueError("a must be positive")
    return a * n ** ((d - 4) / 2)


def cutoff_N(n: float) -> int:
    """``round(n (log n)^(1/4))`` with halves rounded up."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return int(math.floor(n * math.log(n) ** 0.25 + 0.5))


def max_feasible_n(d: int = 4, budget: int = FIELD_SITE_BUDGET) -> int:
    n = 2
    while lattice_ball_count(cutoff_N(n + 1) ** 2, d) <= budget:
        n += 1
    return n


# -- test functions ---------------------------------------------------------------

def _bump_profile(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def _unit_bump_mass(d: int) -> float:
    sphere = 2 * math.pi ** (d / 2) / gamma(d / 2)
    v, _ = quad(lambda s: math.exp(-1 / (1 - s * s)) * s ** (d - 1), 0, 1, epsabs=1e-15, epsrel=1e-13)
    return sphere * v


@dataclass(frozen=True)
class Bump:
    """``weight * exp(-1/(1 - |x-c|^2/r^2))`` on ``|x - c| < r``."""

    weight: float
    center: tuple
    radius: float

    def mass(self, d: int) -> float:
        return self.weight * self.radius**d * _unit_bump_mass(d)


@dataclass(frozen=True)
class TestFunction:
    """A finite sum of smooth radial bumps."""

    bumps: tuple
    d: int = 4
    name: str = "custom"

    __test__ = False  # not a pytest class

    @property
    def support(self) -> float:
        if not self.bumps:
            return 0.0
        return max(math.hypot(*b.center) + b.radius for b in self.bumps)

    @property
    def integral(self) -> float:
        return math.fsum(b.mass(self.d) for b in self.bumps)

    @property
    def mean_zero(self) -> bool:
        return abs(self.integral) <= 1e-6

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for b in self.bumps:
            r = np.sqrt(((x - np.asarray(b.center)) ** 2).sum(axis=1))
            out += b.weight * _bump_profile(r / b.radius)
        return out

    def __add__(self, other: "TestFunction") -> "TestFunction":
        return TestFunction(self.bumps + other.bumps, self.d, f"{self.name}+{other.name}")

    def __mul__(self, c: float) -> "TestFunction":
        return TestFunction(tuple(Bump(b.weight * c, b.center, b.radius) for b in self.bumps),
                            self.d, self.name)

    __rmul__ = __mul__

    def translated(self, v) -> "TestFunction":
        v = np.asarray(v, dtype=float)
        return TestFunction(tuple(Bump(b.weight, tuple(np.asarray(b.center) + v), b.radius)
                                  for b in self.bumps), self.d, self.name)

    def scaled(self, lam: float) -> "TestFunction":
        """``h_lam(x) = lam^d h(lam x)`` (same total mass profile, shrunk)."""
        return TestFunction(tuple(Bump(b.weight * lam**self.d, tuple(np.asarray(b.center) / lam),
                                       b.radius / lam) for b in self.bumps), self.d, self.name)


def bump_diff(d: int = 4, radius: float = 0.75, offset: float = 0.25) -> TestFunction:
    """Built-in mean-zero test function: equal bumps of opposite sign at
    ``+-offset e_1``; support radius ``offset + radius``."""
    c = [0.0] * d
    c[0] = offset
    cp = tuple(c)
    c[0] = -offset
    cm = tuple(c)
    return TestFunction((Bump(1.0, cp, radius), Bump(-1.0, cm, radius)), d, "bump-diff")


BUILTIN = {"bump-diff": bump_diff}


# -- covariance quadrature -----------------------------------------------------------

_GL_R, _GL_W = np.polynomial.legendre.leggauss(160)


def _bump_hat(k: np.ndarray, radius: float, d: int) -> np.ndarray:
    """Fourier transform of the unit-weight radial bump at frequencies ``k``."""
    r = radius * (_GL_R + 1) / 2
    w = radius / 2 * _GL_W
    prof = _bump_profile(r / radius)
    nu = d / 2 - 1
    k = np.atleast_1d(k)[:, None]
    inner = (prof * jv(nu, k * r) * r ** (d / 2) * w).sum(axis=1)
    return (2 * math.pi) ** (d / 2) * np.atleast_1d(k[:, 0]) ** (-nu) * inner


def _angular(z: np.ndarray, d: int) -> np.ndarray:
    """Sphere average of ``exp(i xi.v)`` with ``z = |xi||v|``."""
    nu = d / 2 - 1
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z > 1e-8
    out[nz] = gamma(d / 2) * (2 / z[nz]) ** nu * jv(nu, z[nz])
    return out


def _kernel_hat(d: int) -> float:
    """Coefficient of ``|xi|^-4`` in the transform of the limiting kernel."""
    if d == 4:
        return 8 * math.pi**2
    return 16 * math.pi ** (d / 2) / gamma((d - 4) / 2)


def covariance_quadrature(h: TestFunction, d: int | None = None,
                          other: TestFunction | None = None, rel_tol: float = 1e-3) -> float:
    """``int int h(z) g(w) K(z - w) dz dw`` with ``K = -log|x|`` (d = 4) or
    ``|x|^(4-d)`` (d >= 5); ``g = h`` unless ``other`` is given.

    Evaluated in Fourier space, where the kernel is a multiple of
    ``|xi|^-4``; bump pairs contribute through the sphere-averaged phase.
    """
    d = d or h.d
    g = h if other is None else other
    if d == 4 and not (h.mean_zero and g.mean_zero):
        raise ValueError("the d = 4 covariance needs mean-zero test functions")
    if d < 4:
        raise ValueError("d must be at least 4")
    pairs = [(a.weight * b.weight, a.radius, b.radius,
              float(np.linalg.norm(np.asarray(a.center) - np.asarray(b.center))))
             for a in h.bumps for b in g.bumps]
    if not pairs:
        return 0.0
    sphere = 2 * math.pi ** (d / 2) / gamma(d / 2)
    pref = sphere * _kernel_hat(d) / (2 * math.pi) ** d

    def integrand(k):
        kk = np.array([k])
        tot = 0.0
        for w, ra, rb, dist in pairs:
            tot += w * _bump_hat(kk, ra, d)[0] * _bump_hat(kk, rb, d)[0] * _angular(kk * dist, d)[0]
        return tot * k ** (d - 5)

    rmin = min(min(p[1], p[2]) for p in pairs)
    kmax = 400.0 / rmin
    edges = np.concatenate([[0.0], np.geomspace(0.05 / rmin, kmax, 40)])
    val = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, _ = quad(integrand, a, b, limit=200, epsabs=0, epsrel=rel_tol * 1e-3)
        val += v
    return pref * val


# -- spin field ----------------------------------------------------------------------

@lru_cache(maxsize=4)
def _ball_graph(N: int, d: int) -> WiredGraph:
    return WiredGraph.ball(N, d)


def _graph_for(n: float, d: int, budget: int) -> WiredGraph:
    N = cutoff_N(n)
    if lattice_ball_count(N * N, d) > budget:
        raise LatticeBudgetExceeded(
            f"A_{N} exceeds the site budget {budget}; the largest feasible n is "
            f"{max_feasible_n(d, budget)}")
    return _ball_graph(N, d)


@njit(cache=True, nogil=True)
def _spins(indptr, nbr, order, key, cap, parent, pslot, nxt, nslot, in_tree, spins, labels):
    if _wilson_into(indptr, nbr, order, derive(key, 0), cap, parent, pslot,
                    nxt, nslot, in_tree) < 0:
        return -1
    labels[:] = component_labels(parent)
    ckey = derive(key, 1)
    for v in range(parent.shape[0]):
        bit = mix64(derive(ckey, labels[v])) >> np.uint64(63)
        spins[v] = 1 if bit == 0 else -1
    return 0


@njit(cache=True, nogil=True)
def _pairing_batch(indptr, nbr, order, base, lo, hi, cap, hv):
    """``sum_v hv[v] Y_v`` for fields ``lo..hi-1``; ``hv`` may hold several
    test functions as columns."""
    n = indptr.shape[0] - 1
    out = np.zeros((hi - lo, hv.shape[1]))
    parent = np.empty(n, np.int64)
    pslot = np.empty(n, np.int64)
    nxt = np.empty(n, np.int64)
    nslot = np.empty(n, np.int64)
    in_tree = np.empty(n + 1, np.bool_)
    spins = np.empty(n, np.int8)
    labels = np.empty(n, np.int64)
    for i in range(lo, hi):
        if _spins(indptr, nbr, order, derive(base, i), cap, parent, pslot, nxt, nslot,
                  in_tree, spins, labels) < 0:
            return out[:0]
        for v in range(n):
            if spins[v] != 0:
                for c in range(hv.shape[1]):
                    out[i - lo, c] += hv[v, c] * spins[v]
    return out


@dataclass
class SpinField:
    """``Y_x in {-1, +1}`` on the interior of ``A_N``; zero outside."""

    n: float
    N: int
    graph: WiredGraph = field(repr=False)
    values: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    seed: str = ""

    def at(self, pts) -> np.ndarray:
        idx = SiteIndex(self.graph.points).lookup(np.atleast_2d(pts))
        out = np.zeros(idx.shape[0], dtype=np.int8)
        ok = idx >= 0
        out[ok] = self.values[idx[ok]]
        return out

    def constant_on_components(self) -> bool:
        first = {}
        for v, (lab, s) in enumerate(zip(self.labels, self.values)):
            if first.setdefault(int(lab), int(s)) != s:
                return False
        return True


def sample_spin_field(n: float, seed=0, d: int = 4, budget: int = FIELD_SITE_BUDGET,
                      index: int = 0) -> SpinField:
    """Field number ``index`` of the stream ``seed`` (the same one that
    :func:`moment_experiment` pairs as sample ``index``)."""
    g = _graph_for(n, d, budget)
    stream = as_stream(seed)
    key = np.uint64(derive(np.uint64(stream.key), np.int64(index)))
    m = g.n
    parent = np.empty(m, np.int64)
    bufs = [np.empty(m, np.int64) for _ in range(3)]
    in_tree = np.empty(m + 1, np.bool_)
    spins = np.empty(m, np.int8)
    labels = np.empty(m, np.int64)
    order = np.arange(m, dtype=np.int64)
    if _spins(g.indptr, g.nbr, order, key, DEFAULT_WALK_CAP, parent, bufs[0], bufs[1],
              bufs[2], in_tree, spins, labels) < 0:
        raise WilsonCapExceeded("walk cap exceeded")
    return SpinField(n, cutoff_N(n), g, spins, labels, f"{stream.provenance()}#{index}")


def _lattice_weights(hs: Sequence[TestFunction], n: float, points: np.ndarray) -> np.ndarray:
    """``h(z/n)`` for lattice sites ``z`` with ``|z| <= nK``; zero elsewhere."""
    x = points / n
    r = np.sqrt((x * x).sum(axis=1))
    cols = []
    for h in hs:
        col = h(x)
        col[r > h.support] = 0.0
        cols.append(col)
    return np.ascontiguousarray(np.stack(cols, axis=1))


@dataclass
class PairingResult:
    value: float
    n: float
    N: int
    a_n: float
    seed: str


def pair(h: TestFunction, fld: SpinField, n: float | None = None, d: int = 4,
         a: float | None = None) -> PairingResult:
    n = fld.n if n is None else n
    if n != fld.n:
        raise ValueError("field was sampled at a different n")
    a_n = scaling_a_n(n, d, a)
    w = _lattice_weights([h], n, fld.graph.points)[:, 0]
    s = math.fsum(w * fld.values)
    return PairingResult(n ** (-d) * a_n * s, n, fld.N, a_n, fld.seed)


def pairings(hs: Sequence[TestFunction], n: float, samples: int, seed=0, d: int = 4,
             a: float | None = None, budget: int = FIELD_SITE_BUDGET,
             workers: int | None = None, start: int = 0) -> np.ndarray:
    """``<h, phi_n>`` for each test function over ``samples`` i.i.d. fields;
    shape ``(samples, len(hs))``.  Field ``i`` uses sample index ``start + i``,
    so a long run can be split into ranges and resumed."""
    g = _graph_for(n, d, budget)
    w = _lattice_weights(hs, n, g.points)
    base = np.uint64(as_stream(seed).key)
    order = np.arange(g.n, dtype=np.int64)

    def work(lo, hi):
        r = _pairing_batch(g.indptr, g.nbr, order, base, lo + start, hi + start,
                           DEFAULT_WALK_CAP, w)
        if r.shape[0] != hi - lo:
            raise WilsonCapExceeded("walk cap exceeded")
        return r

    sums = parallel_map(work, samples, chunk=64, workers=workers)
    return n ** (-d) * scaling_a_n(n, d, a) * sums.reshape(samples, len(hs))


@dataclass
class Moments:
    mean: Estimate
    var: Estimate
    m4: Estimate
    kurtosis_ratio: Estimate
    values: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {k: getattr(self, k).as_dict() for k in ("mean", "var", "m4", "kurtosis_ratio")}


def _moment_stats(x: np.ndarray) -> tuple[float, float, float, float]:
    m = math.fsum(x) / x.size
    c = x - m
    var = math.fsum(c * c) / x.size
    m4 = math.fsum(c**4) / x.size
    return m, var, m4, m4 / (3 * var * var)


def moments(x: np.ndarray, seed: str = "", blocks: int = 50) -> Moments:
    """Sample moments with delete-a-block jackknife errors."""
    x = np.asarray(x, dtype=float)
    full = _moment_stats(x)
    parts = np.array_split(np.arange(x.size), blocks)
    jk = np.array([_moment_stats(np.delete(x, p)) for p in parts])
    se = np.sqrt((blocks - 1) / blocks * ((jk - jk.mean(axis=0)) ** 2).sum(axis=0))
    est = [Estimate(v, float(s), x.size, seed) for v, s in zip(full, se)]
    return Moments(*est, values=x)


def moment_experiment(h: TestFunction, n: float, samples: int, seed=0, d: int = 4,
                      a: float | None = None, workers: int | None = None) -> Moments:
    if samples < 100:
        raise ValueError("need at least 100 field samples")
    vals = pairings([h], n, samples, seed, d, a, workers=workers)[:, 0]
    return moments(vals, as_stream(seed).provenance())


def pairings_csv(values: np.ndarray, config_hash: str = "") -> str:
    buf = io.StringIO()
    if config_hash:
        buf.write(f"#config_hash={config_hash}\n")
    buf.write("sample_id,pairing_value\n")
    for i, v in enumerate(values):
        buf.write(f"{i},{float(v)!r}\n")
    return buf.getvalue()


def moments_json(m: Moments) -> str:
    return json.dumps(m.as_dict(), indent=2, sort_keys=True)
