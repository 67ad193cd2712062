"""Free and Dirichlet lattice Green functions and their convolutions.

The free Green function of simple random walk on ``Z^d`` is evaluated from
the continuous-time heat kernel,

    G(x) = int_0^inf prod_i e^{-t/d} I_{x_i}(t/d) dt,

which equals the discrete expected number of visits because holding times
have mean one.  The same kernel weighted by ``t`` gives ``G^2`` in d >= 5.
Far from the origin the two-term expansion

    G(x) ~ C_d |x|^{2-d} + A_d (sum x_j^4 - 3|x|^4/(d+2)) |x|^{-d-4}

is used, with remainder about ``|x|^{-d-2}``.  Dirichlet Green functions
come from conjugate-gradient solves of ``(I - P) u = f`` on the region.
"""
from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.integrate import quad
from scipy.sparse.linalg import cg
from scipy.special import gamma, ive

from . import _walk as K
from .estimate import Estimate, parallel_map
from .lattice import (
    EuclideanBall,
    RadialRegion,
    Region,
    ShellBall,
    SiteIndex,
    ball_points,
)
from .rng import as_stream, derive, new_state
from .wilson import WiredGraph

EIGHT_OVER_PI2 = 8.0 / math.pi**2
DEFAULT_SITE_BUDGET = 500_000
_T_MAX = 1e9          # scipy's ive overflows to nan near 1e10
_REMAINDER = 1.5      # |G - asymptotic| <= _REMAINDER * |x|^(-d-2), checked for d = 4, 5


class SiteBudgetExceeded(ValueError):
    pass


def green_constant(d: int) -> float:
    """``C_d = d Gamma(d/2) / ((d-2) pi^(d/2))``."""
    return d * gamma(d / 2) / ((d - 2) * math.pi ** (d / 2))


def _aniso_constant(d: int) -> float:
    return d / 6 * gamma(2 + d / 2) * math.pi ** (-d / 2)


def _check_transient(d: int):
    if d <= 2:
        raise ValueError("simple random walk is recurrent for d <= 2; G is infinite")


def green_asymptotic(x, d: int | None = None) -> float:
    x = np.asarray(x, dtype=float)
    d = d or x.size
    r2 = float(x @ x)
    if r2 == 0:
        raise ValueError("asymptotic expansion is not valid at the origin")
    r = math.sqrt(r2)
    return (green_constant(d) * r ** (2 - d)
            + _aniso_constant(d) * (float((x**4).sum()) - 3 * r2 * r2 / (d + 2)) / r ** (d + 4))


@njit(cache=True)
def _asym_nb(v, c_d, a_d):
    d = v.shape[0]
    r2 = 0.0
    s4 = 0.0
    for a in range(d):
        q = float(v[a]) * float(v[a])
        r2 += q
        s4 += q * q
    r = math.sqrt(r2)
    return c_d * r ** (2 - d) + a_d * (s4 - 3.0 * r2 * r2 / (d + 2)) / r ** (d + 4)


def _canonical(x) -> tuple:
    return tuple(sorted(abs(int(c)) for c in x))


@lru_cache(maxsize=None)
def _heat_integral(key: tuple, power: int) -> float:
    """``int_0^inf t^power prod_i ive(x_i, t/d) dt`` for a canonical site."""
    d = len(key)
    xs = np.array(key, dtype=float)

    def f(u):
        t = math.exp(u)
        return t ** (power + 1) * float(np.prod(ive(xs, t / d)))

    # integrate in log-time; the integrand is a smooth bump there
    r2 = float(xs @ xs)
    peak = math.log(max(r2, 1.0) / 2)
    val = 0.0
    for a, b in ((-40.0, peak - 4), (peak - 4, peak + 6), (peak + 6, math.log(_T_MAX))):
        v, _ = quad(f, a, b, limit=400, epsabs=1e-16, epsrel=1e-12)
        val += v
    k = d / 2 - 1 - power
    return val + (d / (2 * math.pi)) ** (d / 2) * _T_MAX ** (-k) / k


def green_free(x, tol: float = 1e-10, d: int | None = None) -> float:
    """Free Green function ``G(0, x)`` to absolute accuracy ``tol``.

    Uses the heat-kernel quadrature unless the asymptotic remainder bound
    is already below ``tol``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    d = d or x.size
    _check_transient(d)
    if tol <= 0:
        raise ValueError("tol must be positive")
    r2 = int(x @ x)
    if r2 and _REMAINDER * r2 ** (-(d + 2) / 2) <= tol:
        return green_asymptotic(x, d)
    return _heat_integral(_canonical(x), 0)


def green_free_array(pts, r_exact: float = 12.0, d: int | None = None) -> np.ndarray:
    """``G(0, x)`` for many sites: quadrature inside ``r_exact``, two-term
    expansion outside (absolute error about ``|x|^(-d-2)``)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.int64))
    d = d or pts.shape[1]
    _check_transient(d)
    r2 = np.einsum("ij,ij->i", pts, pts)
    out = np.empty(pts.shape[0])
    far = r2 > r_exact**2
    if far.any():
        x = pts[far].astype(float)
        rr = r2[far].astype(float)
        r = np.sqrt(rr)
        out[far] = (green_constant(d) * r ** (2 - d)
                    + _aniso_constant(d) * ((x**4).sum(axis=1) - 3 * rr * rr / (d + 2)) / r ** (d + 4))
    near = np.flatnonzero(~far)
    if near.size:
        canon = np.sort(np.abs(pts[near]), axis=1)
        uniq, inv = np.unique(canon, axis=0, return_inverse=True)
        vals = np.array([_heat_integral(tuple(int(c) for c in u), 0) for u in uniq])
        out[near] = vals[inv.ravel()]
    return out


def g2_free_quadrature(x, y=None, d: int | None = None) -> float:
    """``G^2(x, y) = int_0^inf t p_t(x, y) dt`` (d >= 5)."""
    v = np.asarray(x, dtype=np.int64) - (0 if y is None else np.asarray(y, dtype=np.int64))
    d = d or v.size
    if d <= 4:
        raise ValueError("G^2 diverges for d <= 4")
    return _heat_integral(_canonical(v), 1)


# -- Monte Carlo ------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _visits_batch(target, R2, base, lo, hi, bits, off, c_d, a_d):
    """Visits to ``target`` before leaving ``|z|^2 <= R2`` plus the free Green
    function from the exit point (strong Markov tail)."""
    d = target.shape[0]
    out = np.empty(hi - lo)
    tkey = K._pack1(target, bits, off)
    hk, _ = K.empty_table()
    x0 = np.zeros(d, np.int64)
    diff = np.empty(d, np.int64)
    mask = (np.int64(1) << bits) - 1
    for i in range(lo, hi):
        st = new_state(derive(base, i))
        v, ek = K.visits_before_exit(x0, tkey, hk, -1, R2, st, bits, off)
        for a in range(d):
            diff[a] = target[a] - (((ek >> (bits * a)) & mask) - off)
        out[i - lo] = v + _asym_nb(diff, c_d, a_d)
    return out


def green_free_mc(x, samples: int, seed=0, radius: float = 12.0,
                  workers: int | None = None) -> Estimate:
    """Monte Carlo ``G(0, x)`` by visit counting inside ``|z| <= radius``."""
    x = np.asarray(x, dtype=np.int64)
    d = x.size
    _check_transient(d)
    R2 = int(math.floor(radius * radius))
    if int(x @ x) * 4 > R2:
        raise ValueError("target must lie well inside the counting ball")
    stream = as_stream(seed)
    base = np.uint64(stream.key)
    bits, off = K.packing(d)
    cd, ad = green_constant(d), _aniso_constant(d)
    vals = parallel_map(lambda lo, hi: _visits_batch(x, R2, base, lo, hi, bits, off, cd, ad),
                        samples, chunk=65536, workers=workers)
    return Estimate.from_samples(vals, stream.provenance())


# -- Dirichlet problems -------------------------------------------------------------

class DirichletSolver:
    """``(I - P)`` on the interior of a finite region with wired boundary."""

    def __init__(self, region: Region, site_budget: int = DEFAULT_SITE_BUDGET,
                 rtol: float = 1e-10):
        n = len(region)
        if n > site_budget:
            raise SiteBudgetExceeded(
                f"{n} interior sites exceed the exact-mode budget {site_budget}; use mode='mc'")
        self.region = region
        self.graph = WiredGraph.from_region(region)
        self.points = self.graph.points
        self.index = SiteIndex(self.points)
        self.n = self.graph.n
        self.rtol = rtol
        deg = np.diff(self.graph.indptr)
        rows = np.repeat(np.arange(self.n), deg)
        keep = self.graph.nbr != self.n
        P = sp.csr_matrix((1.0 / deg[rows[keep]], (rows[keep], self.graph.nbr[keep])),
                          shape=(self.n, self.n))
        self.A = (sp.identity(self.n, format="csr") - P).tocsr()
        self._cols: dict = {}

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``(I - P) u = b``; absolute residual at most ``rtol``."""
        b = np.asarray(b, dtype=float)
        scale = max(float(np.abs(b).max()), 1e-300)
        u, info = cg(self.A, b, rtol=1e-14, atol=self.rtol * 1e-3, maxiter=20 * self.n)
        resid = float(np.abs(self.A @ u - b).max())
        if resid > self.rtol * max(scale, 1.0):
            u, info = cg(self.A, b, x0=u, rtol=1e-16, atol=self.rtol * 1e-4, maxiter=20 * self.n)
            resid = float(np.abs(self.A @ u - b).max())
        if resid > self.rtol * max(scale, 1.0):
            raise ArithmeticError(f"CG residual {resid:.2e} above {self.rtol:.0e}")
        return u

    def idx(self, x) -> int:
        return self.index.index(x)

    def column(self, y) -> np.ndarray:
        """``G_N(., y)`` over the interior (symmetric, so also ``G_N(y, .)``)."""
        j = self.idx(y)
        if j < 0:
            raise KeyError("point is not interior")
        if j not in self._cols:
            e = np.zeros(self.n)
            e[j] = 1.0
            self._cols[j] = self.solve(e)
        return self._cols[j]

    def green(self, x, y) -> float:
        i, j = self.idx(x), self.idx(y)
        if i < 0 or j < 0:
            return 0.0
        return float(self.column(y)[i])

    def g2_column(self, y) -> np.ndarray:
        """``G_N^2(., y)``: solve again with ``G_N(., y)`` as source."""
        return self.solve(self.column(y))

    def laplacian_residual(self, y) -> float:
        """Max of ``|(I - P) G_N(., y) - delta_y|``."""
        e = np.zeros(self.n)
        e[self.idx(y)] = 1.0
        return float(np.abs(self.A @ self.column(y) - e).max())


@lru_cache(maxsize=8)
def _solver(region: Region, site_budget: int) -> DirichletSolver:
    return DirichletSolver(region, site_budget)


def green_dirichlet(region: Region, x, y, mode: str = "exact", samples: int = 100_000,
                    seed=0, site_budget: int = DEFAULT_SITE_BUDGET):
    """Dirichlet Green function ``G_A(x, y)``: a float in exact mode, an
    :class:`Estimate` in Monte Carlo mode."""
    if not region.finite:
        raise ValueError("region must be finite")
    if not (region.contains(tuple(x)) and region.contains(tuple(y))):
        return 0.0 if mode == "exact" else Estimate.exact(0.0)
    if mode == "exact":
        return _solver(region, site_budget).green(x, y)
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    if not isinstance(region, RadialRegion) or region.r2_bounds[0] != 0:
        raise ValueError("Monte Carlo mode supports balls centred at the origin")
    hi2 = region.r2_bounds[1]
    x0 = np.asarray(x, dtype=np.int64)
    d = x0.size
    bits, off = K.packing(d)
    tkey = int(K.pack_many(np.asarray(y))[0])
    stream = as_stream(seed)
    base = np.uint64(stream.key)

    def work(lo, hi):
        return _mc_dirichlet(x0, tkey, hi2, base, lo, hi, bits, off)

    return Estimate.from_samples(parallel_map(work, samples, chunk=65536), stream.provenance())


@njit(cache=True, nogil=True)
def _mc_dirichlet(x0, tkey, hi2, base, lo, hi, bits, off):
    out = np.empty(hi - lo)
    hk, _ = K.empty_table()
    for i in range(lo, hi):
        st = new_state(derive(base, i))
        v, _ = K.visits_before_exit(x0, tkey, hk, -1, hi2, st, bits, off)
        out[i - lo] = v
    return out


def g2_dirichlet(region: Region, x, y, site_budget: int = DEFAULT_SITE_BUDGET) -> float:
    """``G_A^2(x, y) = sum_z G_A(x, z) G_A(z, y)`` from two solves and a dot product."""
    s = _solver(region, site_budget)
    if s.idx(x) < 0 or s.idx(y) < 0:
        return 0.0
    return float(math.fsum(s.column(x) * s.column(y)))


def g2_tilde(region: Region, x, y, site_budget: int = DEFAULT_SITE_BUDGET,
             r_exact: float = 12.0) -> float:
    """``sum_{z in A} G_A(x, z) G(z, y)`` with the free Green function on the right."""
    s = _solver(region, site_budget)
    if s.idx(x) < 0:
        return 0.0
    g = green_free_array(s.points - np.asarray(y, dtype=np.int64), r_exact)
    return float(math.fsum(s.column(x) * g))


@dataclass
class G2Regression:
    slope: float
    intercept: float
    residual_sd: float
    points: int
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)


def g2_log_regression(N: float = 10, rmin: float = 2, rmax: float = 5, d: int = 4,
                      site_budget: int = DEFAULT_SITE_BUDGET) -> G2Regression:
    """Least-squares fit of ``G_N^2(x, 0)`` against ``log(N/|x|)`` over all
    sites with ``rmin <= |x| <= rmax``."""
    region = EuclideanBall(N, d)
    s = _solver(region, site_budget)
    col = s.g2_column(np.zeros(d, dtype=np.int64))
    r = np.sqrt(np.einsum("ij,ij->i", s.points, s.points))
    sel = (r >= rmin) & (r <= rmax)
    X = np.log(N / r[sel])
    Y = col[sel]
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    return G2Regression(float(slope), float(intercept), float(resid.std(ddof=2)), int(sel.sum()), X, Y)


# -- d >= 5 free G^2 ---------------------------------------------------------------

@njit(cache=True)
def _g2_sum_nb(u, R, table, rt, c_d, a_d):
    """``sum_{|z| <= R} G(z) G(z - u)`` over lattice ``z``; ``table`` holds
    ``G`` on canonical sites with entries ``<= rt``."""
    d = u.shape[0]
    R2 = R * R
    z = np.empty(d, np.int64)
    w = np.empty(d, np.int64)
    tot = 0.0
    n_box = (2 * R + 1) ** d
    for flat in range(n_box):
        rem = flat
        r2 = 0
        for a in range(d):
            z[a] = rem % (2 * R + 1) - R
            rem //= 2 * R + 1
            r2 += z[a] * z[a]
        if r2 > R2:
            continue
        for a in range(d):
            w[a] = z[a] - u[a]
        tot += _g_lookup(z, table, rt, c_d, a_d) * _g_lookup(w, table, rt, c_d, a_d)
    return tot


@njit(cache=True)
def _g_lookup(v, table, rt, c_d, a_d):
    d = v.shape[0]
    a = np.empty(d, np.int64)
    r2 = 0
    for i in range(d):
        a[i] = abs(v[i])
        r2 += a[i] * a[i]
    if r2 > rt * rt:
        return _asym_nb(v, c_d, a_d)
    a.sort()
    idx = 0
    for i in range(d):
        idx = idx * (rt + 1) + a[i]
    return table[idx]


def _canonical_table(d: int, rt: int) -> np.ndarray:
    """Dense table of ``G`` on sorted non-negative sites with entries ``<= rt``."""
    table = np.full((rt + 1) ** d, np.nan)
    for p in ball_points(rt * rt, d):
        if np.all(p >= 0) and np.all(np.diff(p) >= 0):
            key = tuple(int(c) for c in p)
            idx = 0
            for c in key:
                idx = idx * (rt + 1) + c
            table[idx] = _heat_integral(key, 0)
    return table


def g2_free(x, y, R: int = 16, r_exact: int = 6) -> float:
    """``G^2(x, y)`` for d >= 5: lattice sum over ``|z - x| <= R`` plus the
    continuum tail ``C_d^2 |S^{d-1}| R^{4-d} / (d - 4)``."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    d = x.size
    if d <= 4:
        raise ValueError("G^2 diverges for d <= 4")
    table = _cached_table(d, r_exact)
    u = y - x
    head = _g2_sum_nb(u, int(R), table, int(r_exact), green_constant(d), _aniso_constant(d))
    sphere = 2 * math.pi ** (d / 2) / gamma(d / 2)
    # lattice sites with |z| <= R fill a ball of radius about R + 1/2 on average
    Reff = _effective_radius(R, d)
    tail = green_constant(d) ** 2 * sphere * Reff ** (4 - d) / (d - 4)
    return head + tail


def lattice_ball_count(r2max: int, d: int) -> int:
    """Number of sites with ``|x|^2 <= r2max`` (convolution of square counts)."""
    one = np.zeros(r2max + 1, dtype=np.int64)
    k = np.arange(math.isqrt(r2max) + 1)
    np.add.at(one, k * k, 2)
    one[0] = 1
    acc = one.copy()
    for _ in range(d - 1):
        acc = np.convolve(acc, one)[: r2max + 1]
    return int(acc.sum())


@lru_cache(maxsize=None)
def _effective_radius(R: int, d: int) -> float:
    vol = math.pi ** (d / 2) / gamma(d / 2 + 1)
    return (lattice_ball_count(R * R, d) / vol) ** (1 / d)


@lru_cache(maxsize=None)
def _cached_table(d: int, rt: int) -> np.ndarray:
    return _canonical_table(d, rt)


# -- hat G^2 on shells ---------------------------------------------------------------

def g2_hat_surrogate(n: float, w) -> float:
    r = math.sqrt(float(np.dot(w, w)))
    if r == 0:
        return EIGHT_OVER_PI2 * n
    return EIGHT_OVER_PI2 * (n - math.log(r))


def g2_hat(n: float, w, site_budget: int = DEFAULT_SITE_BUDGET, r_exact: float = 12.0,
           mode: str = "exact"):
    """``hat G^2_n(w) = sum_{z in C_n} G(0, z) G_n(w, z)``.

    Exact mode solves ``(I - P) u = G(0, .)`` on ``C_n``; ``w`` may be a
    single site or an array of sites.
    """
    region = ShellBall(n, 4)
    w_arr = np.atleast_2d(np.asarray(w, dtype=np.int64))
    if not np.all(region.contains_many(w_arr)):
        raise ValueError("w must lie in C_n")
    if mode == "surrogate":
        vals = np.array([g2_hat_surrogate(n, p) for p in w_arr])
    else:
        u = _g2_hat_field(n, site_budget, r_exact)
        idx = SiteIndex(region.interior())
        vals = u[idx.lookup(w_arr)]
    return float(vals[0]) if np.ndim(w) == 1 else vals


@lru_cache(maxsize=4)
def _g2_hat_field(n: float, site_budget: int, r_exact: float) -> np.ndarray:
    s = DirichletSolver(ShellBall(n, 4), site_budget)
    return s.solve(green_free_array(s.points, r_exact))


# -- lambda constant -----------------------------------------------------------------

@njit(cache=True)
def _orbit_sum_by_r2(R2, table, rt, c_d, a_d):
    """``out[k] = sum_{|x|^2 = k} G(x)^2`` in d = 4 over orbit representatives
    ``0 <= x1 <= x2 <= x3 <= x4``."""
    out = np.zeros(R2 + 1)
    v = np.empty(4, np.int64)
    R = int(math.sqrt(R2)) + 1
    fact = np.array([1.0, 1.0, 2.0, 6.0, 24.0])
    for a in range(R + 1):
        for b in range(a, R + 1):
            ab = a * a + b * b
            if ab > R2:
                break
            for c in range(b, R + 1):
                abc = ab + c * c
                if abc > R2:
                    break
                for e in range(c, R + 1):
                    r2 = abc + e * e
                    if r2 > R2:
                        break
                    v[0] = a
                    v[1] = b
                    v[2] = c
                    v[3] = e
                    # signs times distinct permutations
                    nz = (a > 0) + (b > 0) + (c > 0) + (e > 0)
                    perm = 24.0
                    run = 1
                    for i in range(1, 4):
                        if v[i] == v[i - 1]:
                            run += 1
                        else:
                            perm /= fact[run]
                            run = 1
                    perm /= fact[run]
                    g = _g_lookup(v, table, rt, c_d, a_d)
                    out[r2] += perm * (2.0 ** nz) * g * g
    return out


@dataclass
class LambdaResult:
    radii: list
    f: list
    value: float


def lambda_constant(r_max: int = 200, step: int = 20, r_exact: int = 16) -> LambdaResult:
    """``f(r) = sum_{|x| <= r} G(x)^2 - (8/pi^2) log r`` for
    ``r = step, 2 step, ..., r_max``; ``value = f(r_max)``."""
    if r_max < 20:
        raise ValueError("r_max must be at least 20")
    table = _cached_table(4, r_exact)
    shells = _orbit_sum_by_r2(r_max * r_max, table, r_exact, green_constant(4), _aniso_constant(4))
    cum = np.cumsum(shells)
    radii = list(range(step, r_max + 1, step))
    if radii[-1] != r_max:
        radii.append(r_max)
    f = [float(cum[r * r] - EIGHT_OVER_PI2 * math.log(r)) for r in radii]
    return LambdaResult(radii, f, f[-1])


def f_lambda(r: int, r_exact: int = 16) -> float:
    table = _cached_table(4, r_exact)
    shells = _orbit_sum_by_r2(r * r, table, r_exact, green_constant(4), _aniso_constant(4))
    return float(math.fsum(shells) - EIGHT_OVER_PI2 * math.log(r))


# -- tables ----------------------------------------------------------------------------

@dataclass
class GreenTable:
    """Green function values keyed by site pairs."""

    domain: str
    method: str
    tol: float
    d: int = 4
    entries: dict = field(default_factory=dict)

    def add(self, x, y, value: float):
        self.entries[(tuple(int(c) for c in x), tuple(int(c) for c in y))] = float(value)

    def __getitem__(self, key) -> float:
        x, y = key
        return self.entries[(tuple(x), tuple(y))]

    def __len__(self) -> int:
        return len(self.entries)

    def is_symmetric(self, tol: float | None = None) -> bool:
        tol = self.tol if tol is None else tol
        for (x, y), v in self.entries.items():
            w = self.entries.get((y, x))
            if w is not None and abs(v - w) > tol:
                return False
        return True

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = [f"x{i + 1}" for i in range(self.d)] + [f"y{i + 1}" for i in range(self.d)]
        buf.write(",".join(cols + ["value", "method", "tol"]) + "\n")
        for (x, y), v in sorted(self.entries.items()):
            buf.write(",".join(map(str, x + y)) + f",{v!r},{self.method},{self.tol!r}\n")
        return buf.getvalue()

    def cache_key(self) -> str:
        raw = f"{self.d}|{self.domain}|{self.method}|{self.tol!r}"
        return hashlib.sha256(raw.encode()).hexdigest()[:16]

    def save(self, directory) -> str:
        import os

        path = os.path.join(directory, f"green-{self.cache_key()}.npz")
        keys = np.array([x + y for x, y in sorted(self.entries)], dtype=np.int64).reshape(-1, 2 * self.d)
        vals = np.array([self.entries[k] for k in sorted(self.entries)], dtype=float)
        meta = np.array([self.domain, self.method, repr(self.tol), str(self.d)])
        np.savez(path, keys=keys, vals=vals, meta=meta)
        return path

    @classmethod
    def load(cls, directory, domain: str, method: str, tol: float, d: int = 4) -> "GreenTable":
        import os

        t = cls(domain, method, tol, d)
        path = os.path.join(directory, f"green-{t.cache_key()}.npz")
        with np.load(path) as z:
            for row, v in zip(z["keys"], z["vals"]):
                t.entries[(tuple(int(c) for c in row[:d]), tuple(int(c) for c in row[d:]))] = float(v)
        return t


def free_table(points, tol: float = 1e-10) -> GreenTable:
    pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
    t = GreenTable("free", "quadrature", tol, pts.shape[1])
    for x in pts:
        for y in pts:
            t.add(x, y, green_free(x - y, tol))
    return t


def dirichlet_table(region: Region, points, site_budget: int = DEFAULT_SITE_BUDGET) -> GreenTable:
    pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
    s = _solver(region, site_budget)
    t = GreenTable(region.descriptor(), "solve", s.rtol, region.d)
    for x in pts:
        for y in pts:
            t.add(x, y, s.green(x, y))
    return t
