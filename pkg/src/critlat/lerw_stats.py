"""Escape and intersection probabilities for loop-erased walk in d = 4.

Notation: ``sigma_n`` is the first exit time of ``C_n = {|z| < e^n}``,
``Gamma_n`` is ``LE(S[0, sigma_n])`` without the origin, ``Z_n = Es[Gamma_n]``
and ``G_n`` is the Green function at the origin of the walk killed on
``Gamma_n``.  Walks that should run forever are stopped on leaving a guard
ball ``C_{n + delta}``; the neglected return probability is of order
``e^{-2 delta}``.

Conditional probabilities given a path are estimated by nested Monte
Carlo.  Powers of conditional probabilities use U-statistics: a product of
indicators of independent walks is an unbiased estimate of the product of
their probabilities.  In particular, since a last-exit decomposition gives
``P(S[1, inf) avoids Gamma_n and 0) = Z_n / G_n``, one walk allowed to revisit
the origin and two walks that are not give an unbiased estimate of
``Z_n^3 G_n^-2``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numba import njit

from . import _walk as K
from .estimate import Estimate, parallel_map, ratio
from .field import cutoff_N, scaling_a_n
from .green import EIGHT_OVER_PI2
from .lattice import Annulus, RadialRegion, Region, ShellBall, exp_r2_ceil, exp_r2_floor
from .paths import DEFAULT_CAP, Occupancy, Saw, Walk, loop_erase
from .rng import as_stream, derive, new_state

PI2_OVER_24 = math.pi**2 / 24
DEFAULT_DELTA = 2.0


@dataclass(frozen=True)
class NestedConfig:
    """Outer/inner sample sizes of a nested estimator.

    ``inner`` walks estimate a conditional probability given one path;
    ``inner_u`` is the number of independent U-statistic replicates per path
    (each replicate uses as many walks as the power being estimated).
    ``horizon`` is ``"steps"`` (``n^2`` steps) or ``"shell"`` (exit of the ball
    of radius ``n``).
    """

    outer: int = 1000
    inner: int = 0
    delta: float = DEFAULT_DELTA
    horizon: str = "steps"
    inner_u: int = 1
    inner_g: int = 16

    def __post_init__(self):
        if self.inner == 0:
            object.__setattr__(self, "inner", int(math.ceil(64 * math.sqrt(self.outer))))
        if min(self.outer, self.inner, self.inner_u, self.inner_g) < 1:
            raise ValueError("all sample counts must be at least 1")
        if self.horizon not in ("steps", "shell"):
            raise ValueError("horizon must be 'steps' or 'shell'")
        if self.delta <= 0:
            raise ValueError("delta must be positive")


@dataclass
class EscapeSample:
    eta: Saw
    inner: Estimate


# -- kernels -----------------------------------------------------------------
#
# Batch kernels reuse one workspace per chunk: page-faulting fresh buffers for
# every long walk costs more than the walk.  A workspace is a tuple of arrays
#   0 walk keys, 1 walk r2, 2 erasure table, 3 spare, 4 used slots, 5 positions,
#   6 eta keys, 7 eta r2, 8-9 first avoidance set, 10-11 second set.

BIG = np.int64(2**62)


@njit(cache=True)
def _ws_new():
    e = np.empty(1024, np.int64)
    tab = np.full(2048, -1, np.int64)
    t1, _ = K.h_new(512)
    t2, _ = K.h_new(512)
    return (e, e.copy(), tab, e.copy(), e.copy(), e.copy(), e.copy(), e.copy(),
            t1, e.copy(), t2, e.copy())


@njit(cache=True)
def _eta_ws(x0, lim2, st, cap, bits, off, ws):
    """Loop-erasure of a walk from ``x0`` run until ``|z|^2 > lim2``; the
    path is ``ws[6][:m]`` with squared norms ``ws[7][:m]``."""
    kb, rb, n, status = K.radial_into(x0, 0, lim2, st, cap, bits, off, ws[0], ws[1])
    tab, used, pos, m = K.le_into(kb, n, ws[2], ws[4], ws[5])
    ek, er = ws[6], ws[7]
    if ek.shape[0] < m:
        ek = np.empty(max(m, 2 * ek.shape[0]), np.int64)
        er = np.empty(ek.shape[0], np.int64)
    for j in range(m):
        ek[j] = kb[pos[j]]
        er[j] = rb[pos[j]]
    return (kb, rb, tab, ws[3], used, pos, ek, er, ws[8], ws[9], ws[10], ws[11]), m, status


@njit(cache=True)
def _ws_sets(ws, t1, u1, t2, u2):
    return (ws[0], ws[1], ws[2], ws[3], ws[4], ws[5], ws[6], ws[7], t1, u1, t2, u2)


@njit(cache=True)
def _le_walk(x0, lim2, st, cap, bits, off):
    """Loop-erasure of a walk from ``x0`` run until ``|z|^2 > lim2``."""
    ws, m, status = _eta_ws(x0, lim2, st, cap, bits, off, _ws_new())
    return ws[6][:m].copy(), ws[7][:m].copy(), status


@njit(cache=True)
def _table_below(keys, r2s, lo, cap2):
    """Hash set of ``keys[lo:]`` restricted to ``|z|^2 <= cap2``."""
    hk, _ = K.h_new(keys.shape[0] - lo)
    used = np.empty(keys.shape[0], np.int64)
    hk, _, _, _ = K.set_fill(hk, used, keys, r2s, lo, keys.shape[0], cap2)
    return hk


@njit(cache=True, nogil=True)
def _zn_batch(d, thr, guard2, inner, reps, g_walks, base, lo, hi, cap, bits, off):
    """Per path ``Gamma_n``: escapes among ``inner`` walks, the U-statistic
    ``Z (Z/G)^2`` averaged over ``reps`` triples, a ``G_n`` estimate from
    ``g_walks`` walks, and ``|Gamma_n|``.  Column ``4`` flags a capped walk."""
    out = np.zeros((hi - lo, 5))
    x0 = np.zeros(d, np.int64)
    key0 = K._pack1(x0, bits, off)
    ws = _ws_new()
    for i in range(lo, hi):
        ki = derive(base, i)
        ws, m, status = _eta_ws(x0, thr, new_state(derive(ki, 0)), cap, bits, off, ws)
        if status != K.STATUS_OK:
            out[i - lo, 4] = 1
            continue
        hk, u1, c1, chk = K.set_fill(ws[8], ws[9], ws[6], ws[7], 1, m, BIG)
        ws = _ws_sets(ws, hk, u1, ws[10], ws[11])
        esc = 0
        sk = derive(ki, 1)
        for j in range(inner):
            if K.first_hit_walk(x0, hk, chk, 0, False, 1, guard2,
                                new_state(derive(sk, j)), bits, off) < 0:
                esc += 1
        u = 0.0
        uk = derive(ki, 2)
        for j in range(reps):
            rk = derive(uk, j)
            if K.first_hit_walk(x0, hk, chk, 0, False, 1, guard2,
                                new_state(derive(rk, 0)), bits, off) >= 0:
                continue
            if K.first_hit_walk(x0, hk, chk, 0, True, 1, guard2,
                                new_state(derive(rk, 1)), bits, off) >= 0:
                continue
            if K.first_hit_walk(x0, hk, chk, 0, True, 1, guard2,
                                new_state(derive(rk, 2)), bits, off) >= 0:
                continue
            u += 1.0
        gsum = 0.0
        gk = derive(ki, 3)
        for j in range(g_walks):
            v, _ = K.visits_before_exit(x0, key0, hk, chk, guard2,
                                        new_state(derive(gk, j)), bits, off)
            gsum += v
        K.set_clear(hk, u1, c1)
        out[i - lo, 0] = esc / inner
        out[i - lo, 1] = u / reps
        out[i - lo, 2] = gsum / g_walks
        out[i - lo, 3] = m - 1
    return out


@njit(cache=True, nogil=True)
def _twosided_z_batch(d, thr, guard2, inner, base, lo, hi, cap, bits, off):
    """``P(S[1, sigma_n] avoids eta cap C_n | eta)`` with ``eta`` the
    loop-erasure of a walk run to the guard."""
    out = np.zeros((hi - lo, 2))
    x0 = np.zeros(d, np.int64)
    ws = _ws_new()
    for i in range(lo, hi):
        ki = derive(base, i)
        ws, m, status = _eta_ws(x0, guard2, new_state(derive(ki, 0)), cap, bits, off, ws)
        if status != K.STATUS_OK:
            out[i - lo, 1] = 1
            continue
        hk, u1, c1, _ = K.set_fill(ws[8], ws[9], ws[6], ws[7], 0, m, thr)
        ws = _ws_sets(ws, hk, u1, ws[10], ws[11])
        esc = 0
        sk = derive(ki, 1)
        for j in range(inner):
            if K.first_hit_walk(x0, hk, thr, 1, False, 1, thr,
                                new_state(derive(sk, j)), bits, off) < 0:
                esc += 1
        K.set_clear(hk, u1, c1)
        out[i - lo, 0] = esc / inner
    return out


@njit(cache=True, nogil=True)
def _xn_batch(d, w_lim2, mode, limit, inner, pairs, base, lo, hi, cap, bits, off):
    """Per ``eta = LE(W)``: fraction of ``inner`` walks with ``S[1, T]``
    avoiding ``eta``, and the pair U-statistic for the squared probability."""
    out = np.zeros((hi - lo, 3))
    x0 = np.zeros(d, np.int64)
    ws = _ws_new()
    for i in range(lo, hi):
        ki = derive(base, i)
        ws, m, status = _eta_ws(x0, w_lim2, new_state(derive(ki, 0)), cap, bits, off, ws)
        if status != K.STATUS_OK:
            out[i - lo, 2] = 1
            continue
        hk, u1, c1, chk = K.set_fill(ws[8], ws[9], ws[6], ws[7], 0, m, BIG)
        ws = _ws_sets(ws, hk, u1, ws[10], ws[11])
        esc = 0
        sk = derive(ki, 1)
        for j in range(inner):
            if K.first_hit_walk(x0, hk, chk, 1, False, mode, limit,
                                new_state(derive(sk, j)), bits, off) < 0:
                esc += 1
        both = 0
        pk = derive(ki, 2)
        for j in range(pairs):
            rk = derive(pk, j)
            if K.first_hit_walk(x0, hk, chk, 1, False, mode, limit,
                                new_state(derive(rk, 0)), bits, off) < 0:
                if K.first_hit_walk(x0, hk, chk, 1, False, mode, limit,
                                    new_state(derive(rk, 1)), bits, off) < 0:
                    both += 1
        K.set_clear(hk, u1, c1)
        out[i - lo, 0] = esc / inner
        out[i - lo, 1] = both / pairs
    return out


@njit(cache=True, nogil=True)
def _three_walk_batch(d, w_lim2, mode, limit, check_cap, base, lo, hi, cap, bits, off):
    """One ``eta`` per sample and four fresh walks: columns are the joint
    event (two walks avoid ``eta`` from time 1, one avoids ``eta`` minus the
    origin), the single-walk event, and a cap flag."""
    out = np.zeros((hi - lo, 3))
    x0 = np.zeros(d, np.int64)
    ws = _ws_new()
    for i in range(lo, hi):
        ki = derive(base, i)
        ws, m, status = _eta_ws(x0, w_lim2, new_state(derive(ki, 0)), cap, bits, off, ws)
        if status != K.STATUS_OK:
            out[i - lo, 2] = 1
            continue
        hk, u1, c1, chk = K.set_fill(ws[8], ws[9], ws[6], ws[7], 0, m, check_cap)
        hk1, u2, c2, _ = K.set_fill(ws[10], ws[11], ws[6], ws[7], 1, m, check_cap)
        ws = _ws_sets(ws, hk, u1, hk1, u2)
        a = K.first_hit_walk(x0, hk, chk, 1, False, mode, limit,
                             new_state(derive(ki, 1)), bits, off) < 0
        b = a and K.first_hit_walk(x0, hk, chk, 1, False, mode, limit,
                                   new_state(derive(ki, 2)), bits, off) < 0
        c = b and K.first_hit_walk(x0, hk1, chk, 0, False, mode, limit,
                                   new_state(derive(ki, 3)), bits, off) < 0
        single = K.first_hit_walk(x0, hk, chk, 1, False, mode, limit,
                                  new_state(derive(ki, 4)), bits, off) < 0
        K.set_clear(hk, u1, c1)
        K.set_clear(hk1, u2, c2)
        out[i - lo, 0] = 1.0 if c else 0.0
        out[i - lo, 1] = 1.0 if single else 0.0
    return out


@njit(cache=True, nogil=True)
def _bn_batch(d, N2, reps, base, lo, hi, cap, bits, off):
    """``u (u~)^2`` U-statistic in ``A_N``: one walk may revisit the origin,
    two may not; the boundary endpoint of ``eta`` is never counted."""
    out = np.zeros((hi - lo, 2))
    x0 = np.zeros(d, np.int64)
    ws = _ws_new()
    for i in range(lo, hi):
        ki = derive(base, i)
        ws, m, status = _eta_ws(x0, N2, new_state(derive(ki, 0)), cap, bits, off, ws)
        if status != K.STATUS_OK:
            out[i - lo, 1] = 1
            continue
        hk, u1, c1, _ = K.set_fill(ws[8], ws[9], ws[6], ws[7], 0, m, N2)
        hk1, u2, c2, _ = K.set_fill(ws[10], ws[11], ws[6], ws[7], 1, m, N2)
        ws = _ws_sets(ws, hk, u1, hk1, u2)
        acc = 0.0
        for j in range(reps):
            rk = derive(derive(ki, 1), j)
            if K.first_hit_walk(x0, hk1, N2, 0, False, 1, N2,
                                new_state(derive(rk, 0)), bits, off) >= 0:
                continue
            if K.first_hit_walk(x0, hk, N2, 1, False, 1, N2,
                                new_state(derive(rk, 1)), bits, off) >= 0:
                continue
            if K.first_hit_walk(x0, hk, N2, 1, False, 1, N2,
                                new_state(derive(rk, 2)), bits, off) >= 0:
                continue
            acc += 1.0
        K.set_clear(hk, u1, c1)
        K.set_clear(hk1, u2, c2)
        out[i - lo, 0] = acc / reps
    return out


@njit(cache=True, nogil=True)
def _hn_batch(d, thr_prev, thr, guard2, base, lo, hi, cap, bits, off):
    """Indicator that a fresh walk hits ``eta^n = LE(S[sigma_{n-1}, sigma_n])``."""
    out = np.zeros((hi - lo, 2))
    x0 = np.zeros(d, np.int64)
    ws = _ws_new()
    for i in range(lo, hi):
        ki = derive(base, i)
        kb, rb, n, status = K.radial_into(x0, 0, thr, new_state(derive(ki, 0)), cap, bits, off,
                                          ws[0], ws[1])
        if status != K.STATUS_OK:
            out[i - lo, 1] = 1
            continue
        s0 = 0
        while rb[s0] <= thr_prev:
            s0 += 1
        tab, used, pos, m = K.le_into(kb[s0:n], n - s0, ws[2], ws[4], ws[5])
        t1, u1 = ws[8], ws[9]
        if t1.shape[0] < 2 * m + 2:
            t1, _ = K.h_new(m)
        if u1.shape[0] < m:
            u1 = np.empty(max(m, 2 * u1.shape[0]), np.int64)
        chk = np.int64(-1)
        c1 = 0
        for j in range(m):
            key = kb[s0 + pos[j]]
            sl = K.h_slot(t1, key)
            t1[sl] = key
            u1[c1] = sl
            c1 += 1
            if rb[s0 + pos[j]] > chk:
                chk = rb[s0 + pos[j]]
        ws = (kb, rb, tab, ws[3], used, pos, ws[6], ws[7], t1, u1, ws[10], ws[11])
        t = K.first_hit_walk(x0, t1, chk, 0, False, 1, guard2,
                             new_state(derive(ki, 1)), bits, off)
        K.set_clear(t1, u1, c1)
        out[i - lo, 0] = 1.0 if t >= 0 else 0.0
    return out


@njit(cache=True, nogil=True)
def _hit_batch(x0, hk, chk, guard2, base, lo, hi, bits, off):
    out = np.empty(hi - lo)
    for i in range(lo, hi):
        t = K.first_hit_walk(x0, hk, chk, 0, False, 1, guard2,
                             new_state(derive(base, i)), bits, off)
        out[i - lo] = 1.0 if t >= 0 else 0.0
    return out


@njit(cache=True, nogil=True)
def _green_killed_batch(hk, chk, guard2, base, lo, hi, d, bits, off):
    out = np.empty(hi - lo)
    x0 = np.zeros(d, np.int64)
    key0 = K._pack1(x0, bits, off)
    for i in range(lo, hi):
        v, _ = K.visits_before_exit(x0, key0, hk, chk, guard2,
                                    new_state(derive(base, i)), bits, off)
        out[i - lo] = v
    return out


@njit(cache=True, nogil=True)
def _gap_batch(d, length, window, base, lo, hi, bits, off):
    """Indicator that a walk of ``length`` steps has ``window`` consecutive
    indices without a loop-free time."""
    out = np.empty(hi - lo)
    x0 = np.zeros(d, np.int64)
    for i in range(lo, hi):
        keys, _ = K.walk_fixed(x0, length, new_state(derive(base, i)), bits, off)
        mask = K.loop_free_mask(keys)
        prev = -1
        hit = False
        for t in range(mask.shape[0]):
            if mask[t]:
                if t - prev - 1 >= window:
                    hit = True
                    break
                prev = t
        if not hit and mask.shape[0] - prev - 1 >= window:
            hit = True
        out[i - lo] = 1.0 if hit else 0.0
    return out


# -- helpers -------------------------------------------------------------------

def _setup(seed, d=4):
    stream = as_stream(seed)
    bits, off = K.packing(d)
    return stream, np.uint64(stream.key), bits, off


def _guard2(n: float, delta: float) -> int:
    return exp_r2_floor(n + delta)


def _run(kernel, samples, chunk, workers=None):
    out = parallel_map(kernel, samples, chunk=chunk, workers=workers)
    if out.ndim == 2 and np.any(out[:, -1] != 0):
        raise RuntimeError("a walk exceeded the step cap; raise cap")
    return out


def _horizon(n: float, horizon: str) -> tuple[int, int]:
    """``(mode, limit)`` for ``first_hit_walk``: ``n^2`` steps, or exit of
    the ball ``|z| < n``."""
    if horizon == "steps":
        return 0, int(round(n * n))
    return 1, int(math.ceil(n * n)) - 1


# -- public operations -----------------------------------------------------------

def hitting_prob(V, start, guard: Region, samples: int, seed=0, workers=None) -> Estimate:
    """``H(start, V)``: fraction of walks from ``start`` that meet ``V``
    (time 0 included) before leaving ``guard``."""
    if not isinstance(V, Occupancy):
        V = Occupancy(V)
    stream, base, bits, off = _setup(seed, V.d if len(V) else len(start))
    if len(V) == 0:
        return Estimate(0.0, 0.0, samples, stream.provenance())
    if tuple(start) in V:
        return Estimate(1.0, 0.0, samples, stream.provenance())
    if not isinstance(guard, RadialRegion) or guard.r2_bounds[0] != 0:
        raise ValueError("guard must be a ball centred at the origin")
    guard2 = guard.r2_bounds[1]
    if V.max_r2 > guard2:
        raise ValueError("guard must contain V")
    x0 = np.asarray(start, dtype=np.int64)
    vals = parallel_map(lambda lo, hi: _hit_batch(x0, V.hk, V.max_r2, guard2, base, lo, hi, bits, off),
                        samples, chunk=16384, workers=workers)
    return Estimate.from_samples(vals, stream.provenance())


def escape_prob(V, start, guard: Region, samples: int, seed=0, workers=None) -> Estimate:
    """``Es = 1 - H`` on the same walks."""
    h = hitting_prob(V, start, guard, samples, seed, workers)
    return Estimate(1.0 - h.value, h.stderr, h.samples, h.seed)


def gamma_n(n: float, seed=0, d: int = 4, cap: int = DEFAULT_CAP) -> Saw:
    """``LE(S[0, sigma_n])`` with its first site (the origin) removed."""
    if n < 1:
        raise ValueError("n must be at least 1")
    stream, _, bits, off = _setup(seed, d)
    keys, _, status = _le_walk(np.zeros(d, np.int64), exp_r2_floor(n), stream.state(), cap, bits, off)
    if status != K.STATUS_OK:
        raise RuntimeError("walk exceeded the step cap")
    return Saw._from_keys(keys[1:], d)


def green_killed_origin(gamma, guard: Region, samples: int, seed=0, workers=None) -> Estimate:
    """``G_n``: mean visits to the origin before hitting ``gamma`` or leaving ``guard``."""
    if not isinstance(gamma, Occupancy):
        gamma = Occupancy(gamma) if len(gamma) else Occupancy.empty(guard.d)
    d = guard.d
    if len(gamma) and tuple([0] * d) in gamma:
        raise ValueError("gamma must not contain the origin")
    stream, base, bits, off = _setup(seed, d)
    guard2 = guard.r2_bounds[1]
    vals = parallel_map(lambda lo, hi: _green_killed_batch(gamma.hk, gamma.max_r2, guard2, base,
                                                           lo, hi, d, bits, off),
                        samples, chunk=16384, workers=workers)
    est = Estimate.from_samples(vals, stream.provenance())
    if not 1.0 <= est.value <= 8.0:
        raise ArithmeticError(f"G_n estimate {est.value} outside [1, 8]")
    return est


@dataclass
class ZnBatch:
    """Per-path nested estimates for ``Z_n``."""

    n: float
    cfg: NestedConfig
    z: np.ndarray
    u3: np.ndarray
    g: np.ndarray
    size: np.ndarray
    seed: str

    def pn(self, r: float) -> Estimate:
        if r == 0:
            return Estimate(1.0, 0.0, self.z.size, self.seed)
        return Estimate.from_samples(self.z**r, self.seed)

    def pn_hat(self) -> Estimate:
        """Unbiased three-walk estimate of ``E[Z_n^3 G_n^-2]``."""
        return Estimate.from_samples(self.u3, self.seed)

    def pn_hat_plugin(self) -> Estimate:
        return Estimate.from_samples(self.z**3 / np.clip(self.g, 1, 8) ** 2, self.seed)


def sample_zn(n: float, cfg: NestedConfig, seed=0, d: int = 4, cap: int = DEFAULT_CAP,
              workers=None) -> ZnBatch:
    if n < 1:
        raise ValueError("n must be at least 1")
    stream, base, bits, off = _setup(seed, d)
    thr, guard2 = exp_r2_floor(n), _guard2(n, cfg.delta)
    out = _run(lambda lo, hi: _zn_batch(d, thr, guard2, cfg.inner, cfg.inner_u, cfg.inner_g,
                                        base, lo, hi, cap, bits, off),
               cfg.outer, chunk=16, workers=workers)
    return ZnBatch(n, cfg, out[:, 0], out[:, 1], out[:, 2], out[:, 3], stream.provenance())


def escape_Zn(n: float, cfg: NestedConfig, seed=0, convention: str = "shell", d: int = 4,
              cap: int = DEFAULT_CAP) -> EscapeSample:
    """One path and the inner estimate of its escape probability.

    ``convention="shell"``: ``Z_n = Es[Gamma_n]`` with walks run to the
    guard.  ``convention="twosided"``: ``eta`` is the loop-erasure of a walk
    run to the guard, and the fresh walk must avoid ``eta cap C_n`` during
    ``[1, sigma_n]`` (the acceptance event of the two-sided sampler).
    """
    stream, base, bits, off = _setup(seed, d)
    x0 = np.zeros(d, np.int64)
    thr, guard2 = exp_r2_floor(n), _guard2(n, cfg.delta)
    key = derive(base, 0)
    lim = thr if convention == "shell" else guard2
    keys, r2s, _ = _le_walk(x0, lim, new_state(derive(key, 0)), cap, bits, off)
    if convention == "shell":
        eta = Saw._from_keys(keys[1:], d)
        vals = _zn_batch(d, thr, guard2, cfg.inner, 1, 1, base, 0, 1, cap, bits, off)[0, 0]
    elif convention == "twosided":
        eta = Saw._from_keys(keys, d)
        vals = _twosided_z_batch(d, thr, guard2, cfg.inner, base, 0, 1, cap, bits, off)[0, 0]
    else:
        raise ValueError(f"unknown convention {convention!r}")
    p = float(vals)
    se = math.sqrt(max(p * (1 - p), 0.0) / max(cfg.inner - 1, 1))
    return EscapeSample(eta, Estimate(p, se, cfg.inner, stream.provenance()))


def mean_Zn(n: float, cfg: NestedConfig, seed=0, convention: str = "shell", d: int = 4,
            cap: int = DEFAULT_CAP, workers=None) -> Estimate:
    """``E[Z_n]`` as the outer mean of inner escape fractions."""
    stream, base, bits, off = _setup(seed, d)
    thr, guard2 = exp_r2_floor(n), _guard2(n, cfg.delta)
    if convention == "shell":
        out = _run(lambda lo, hi: _zn_batch(d, thr, guard2, cfg.inner, 1, 1, base, lo, hi, cap,
                                            bits, off), cfg.outer, chunk=16, workers=workers)
    elif convention == "twosided":
        out = _run(lambda lo, hi: _twosided_z_batch(d, thr, guard2, cfg.inner, base, lo, hi, cap,
                                                    bits, off), cfg.outer, chunk=16, workers=workers)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return Estimate.from_samples(out[:, 0], stream.provenance())


def estimate_pn(n: float, r: float, cfg: NestedConfig, seed=0, workers=None) -> Estimate:
    """``p_n = E[Z_n^r]`` by plug-in; integer ``r`` uses a U-statistic over
    ``r`` independent walks per replicate."""
    stream = as_stream(seed)
    if r == 0:
        return Estimate(1.0, 0.0, cfg.outer, stream.provenance())
    if float(r).is_integer() and r >= 1:
        return _pn_ustat(n, int(r), cfg, seed, workers)
    return sample_zn(n, cfg, seed, workers=workers).pn(r)


@njit(cache=True, nogil=True)
def _pn_u_batch(d, thr, guard2, r, reps, base, lo, hi, cap, bits, off):
    out = np.zeros((hi - lo, 2))
    x0 = np.zeros(d, np.int64)
    ws = _ws_new()
    for i in range(lo, hi):
        ki = derive(base, i)
        ws, m, status = _eta_ws(x0, thr, new_state(derive(ki, 0)), cap, bits, off, ws)
        if status != K.STATUS_OK:
            out[i - lo, 1] = 1
            continue
        hk, u1, c1, chk = K.set_fill(ws[8], ws[9], ws[6], ws[7], 1, m, BIG)
        ws = _ws_sets(ws, hk, u1, ws[10], ws[11])
        acc = 0.0
        for j in range(reps):
            rk = derive(derive(ki, 1), j)
            ok = True
            for w in range(r):
                if K.first_hit_walk(x0, hk, chk, 0, False, 1, guard2,
                                    new_state(derive(rk, w)), bits, off) >= 0:
                    ok = False
                    break
            if ok:
                acc += 1.0
        K.set_clear(hk, u1, c1)
        out[i - lo, 0] = acc / reps
    return out


def _pn_ustat(n, r, cfg, seed, workers):
    stream, base, bits, off = _setup(seed)
    thr, guard2 = exp_r2_floor(n), _guard2(n, cfg.delta)
    out = _run(lambda lo, hi: _pn_u_batch(4, thr, guard2, r, cfg.inner_u, base, lo, hi, DEFAULT_CAP,
                                          bits, off), cfg.outer, chunk=32, workers=workers)
    return Estimate.from_samples(out[:, 0], stream.provenance())


def estimate_pn_hat(n: float, cfg: NestedConfig, seed=0, workers=None) -> Estimate:
    """``hat p_n = E[Z_n^3 G_n^-2]`` from the unbiased three-walk statistic."""
    if n < 2:
        raise ValueError("n must be at least 2")
    cfg = replace(cfg, inner=1, inner_g=1)
    return sample_zn(n, cfg, seed, workers=workers).pn_hat()


def estimate_hn(n: float, samples: int, seed=0, delta: float = DEFAULT_DELTA, d: int = 4,
                cap: int = DEFAULT_CAP, workers=None) -> Estimate:
    """``E[H(eta^n)]`` with ``eta^n = LE(S[sigma_{n-1}, sigma_n])``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    stream, base, bits, off = _setup(seed, d)
    thr_prev, thr, guard2 = exp_r2_floor(n - 1), exp_r2_floor(n), _guard2(n, delta)
    out = _run(lambda lo, hi: _hn_batch(d, thr_prev, thr, guard2, base, lo, hi, cap, bits, off),
               samples, chunk=1024, workers=workers)
    return Estimate.from_samples(out[:, 0], stream.provenance())


def phi_n(n: int, samples: int, seed=0, delta: float = DEFAULT_DELTA, workers=None):
    """``phi_n = prod_{j <= n} exp(-E[H(eta^j)])`` with the per-``j`` estimates."""
    stream = as_stream(seed)
    hs = [estimate_hn(j, samples, stream.child(j), delta, workers=workers) for j in range(1, n + 1)]
    total = math.fsum(h.value for h in hs)
    se = math.sqrt(math.fsum(h.stderr**2 for h in hs))
    phi = math.exp(-total)
    return Estimate(phi, phi * se, samples, stream.provenance()), hs


def ratio_check_exact_relation(n: float, cfg: NestedConfig, seed=0, hn_samples: int | None = None,
                               workers=None) -> dict:
    """``E[H(eta^n)]`` against ``(8/pi^2) hat p_n`` on independent streams."""
    if n < 3:
        raise ValueError("n must be at least 3")
    stream = as_stream(seed)
    lhs = estimate_hn(n, hn_samples or 4 * cfg.outer * cfg.inner_u, stream.child(0), cfg.delta,
                      workers=workers)
    rhs = estimate_pn_hat(n, cfg, stream.child(1), workers=workers).scaled(EIGHT_OVER_PI2)
    r = ratio(lhs, rhs)
    return {"lhs": lhs, "rhs": rhs, "ratio": r,
            "overlap": lhs.interval[0] <= rhs.interval[1] and rhs.interval[0] <= lhs.interval[1]}


@dataclass
class XnSample:
    n: float
    x: np.ndarray
    x2_ustat: np.ndarray
    seed: str

    @property
    def mean(self) -> Estimate:
        return Estimate.from_samples(self.x, self.seed)

    @property
    def second_moment(self) -> Estimate:
        """Unbiased ``E[X_n^2]`` from pairs of independent inner walks."""
        return Estimate.from_samples(self.x2_ustat, self.seed)

    @property
    def moment_ratio(self) -> float:
        return self.second_moment.value / self.mean.value**2


def estimate_Xn(n: float, cfg: NestedConfig, seed=0, d: int = 4, cap: int = DEFAULT_CAP,
                pairs: int | None = None, workers=None) -> XnSample:
    """``X_n = (log n)^(1/3) P(S[1, T] avoids eta | eta)`` with ``eta`` the
    loop-erasure of a walk run to radius ``e^delta n``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    stream, base, bits, off = _setup(seed, d)
    mode, limit = _horizon(n, cfg.horizon)
    w_lim2 = int(math.floor((math.exp(cfg.delta) * n) ** 2))
    pairs = pairs or max(1, cfg.inner // 2)
    out = _run(lambda lo, hi: _xn_batch(d, w_lim2, mode, limit, cfg.inner, pairs, base, lo, hi,
                                        cap, bits, off), cfg.outer, chunk=8, workers=workers)
    s = math.log(n) ** (1 / 3)
    return XnSample(n, s * out[:, 0], s * s * out[:, 1], stream.provenance())


@dataclass
class JointResult:
    n: float
    joint: Estimate
    single: Estimate
    scaled: Estimate

    @property
    def mean_field_ratio(self) -> float:
        """``single / joint^(1/3)``; near 1 in the mean-field picture."""
        return self.single.value / self.joint.value ** (1 / 3)


def joint_nonintersection(n: float, samples: int, seed=0, delta: float = DEFAULT_DELTA,
                          horizon: str = "steps", d: int = 4, cap: int = DEFAULT_CAP,
                          workers=None) -> JointResult:
    """``P((S u S')[1, T] avoids eta, S''[0, T] meets eta only at 0)`` and
    ``(log n)`` times it."""
    if n < 2:
        raise ValueError("n must be at least 2")
    stream, base, bits, off = _setup(seed, d)
    mode, limit = _horizon(n, horizon)
    w_lim2 = int(math.floor((math.exp(delta) * n) ** 2))
    out = _run(lambda lo, hi: _three_walk_batch(d, w_lim2, mode, limit, np.int64(2**62), base, lo,
                                                hi, cap, bits, off), samples, chunk=64,
               workers=workers)
    joint = Estimate.from_samples(out[:, 0], stream.provenance())
    single = Estimate.from_samples(out[:, 1], stream.provenance())
    return JointResult(n, joint, single, joint.scaled(math.log(n)))


def estimate_bn(n: float, cfg: NestedConfig, seed=0, d: int = 4, cap: int = DEFAULT_CAP,
                workers=None) -> Estimate:
    """``b_n = E[u(eta) u~(eta)^2]`` in ``A_N`` with ``N = cutoff_N(n)``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    stream, base, bits, off = _setup(seed, d)
    N = cutoff_N(n)
    out = _run(lambda lo, hi: _bn_batch(d, N * N, cfg.inner_u, base, lo, hi, cap, bits, off),
               cfg.outer, chunk=16, workers=workers)
    return Estimate.from_samples(out[:, 0], stream.provenance())


def a_n_from_bn(bn: Estimate) -> Estimate:
    a = math.sqrt(math.pi**2 / (8 * bn.value))
    return Estimate(a, 0.5 * a * bn.stderr / bn.value, bn.samples, bn.seed)


@dataclass
class CapacityFit:
    value: Estimate
    per_radius: dict
    residual: float


def capacity_estimate(V, fit_radii: Sequence[float], samples: int, seed=0, n: float | None = None,
                      guard_factor: float = math.exp(3), workers=None) -> CapacityFit:
    """Fit ``H(z, V) |z|^2`` on lattice shells ``|z| ~ R`` for each fit radius.

    Starting points are drawn uniformly from the shell ``R <= |z| < R + 1``;
    walks stop at radius ``guard_factor * R``.
    """
    if not isinstance(V, Occupancy):
        V = Occupancy(V) if len(V) else Occupancy.empty(4)
    stream = as_stream(seed)
    if len(V) == 0:
        return CapacityFit(Estimate(0.0, 0.0, samples, stream.provenance()), {}, 0.0)
    vmax = math.sqrt(max(V.max_r2, 0))
    inner = math.exp(n + 1) if n is not None else vmax
    if min(fit_radii) <= inner:
        raise ValueError("fit radii must lie outside the set (outside C_{n+1} when n is given)")
    from .lattice import ball_points

    per = {}
    bits, off = K.packing(V.d)
    for k, R in enumerate(fit_radii):
        lo2, hi2 = int(math.ceil(R * R)), int(math.ceil((R + 1) ** 2)) - 1
        shell = ball_points(hi2, V.d, lo2)
        sub = stream.child(k)
        base = np.uint64(sub.key)
        guard2 = int((guard_factor * R) ** 2)

        def work(lo, hi, shell=shell, base=base, guard2=guard2):
            return _cap_batch(shell, V.hk, V.max_r2, guard2, base, lo, hi, bits, off)

        vals = parallel_map(work, samples, chunk=4096, workers=workers)
        per[R] = Estimate.from_samples(vals, sub.provenance())
    vals = np.array([e.value for e in per.values()])
    ses = np.array([e.stderr for e in per.values()])
    w = 1 / np.maximum(ses, 1e-300) ** 2
    c = float((w * vals).sum() / w.sum())
    se = float(1 / math.sqrt(w.sum()))
    resid = float(np.sqrt(np.mean((vals - c) ** 2)))
    return CapacityFit(Estimate(c, se, samples * len(fit_radii), stream.provenance()), per, resid)


@njit(cache=True, nogil=True)
def _cap_batch(shell, hk, chk, guard2, base, lo, hi, bits, off):
    out = np.empty(hi - lo)
    for i in range(lo, hi):
        st = new_state(derive(base, i))
        z = shell[np.int64(K.rand_below(st, shell.shape[0]))].copy()
        r2 = 0
        for a in range(z.shape[0]):
            r2 += z[a] * z[a]
        t = K.first_hit_walk(z, hk, chk, 0, False, 1, guard2, st, bits, off)
        out[i - lo] = r2 if t >= 0 else 0.0
    return out


@dataclass
class NiceSetResult:
    passed: bool
    failing: list
    tested: list
    estimates: dict


def niceset_check(V, n: float, samples: int = 4000, seed=0, m_max: int | None = None,
                  delta: float = DEFAULT_DELTA, workers=None) -> NiceSetResult:
    """Test ``H(V_m) <= log^2 m / m`` for integers ``m >= sqrt(n)`` with
    ``V_m = V cap A(m-1, m)``; a shell fails only when the estimate exceeds
    the threshold by more than three standard errors."""
    pts = np.atleast_2d(np.asarray(V.sites() if isinstance(V, Occupancy) else V, dtype=np.int64))
    stream = as_stream(seed)
    if pts.size == 0:
        return NiceSetResult(True, [], [], {})
    d = pts.shape[1]
    r2 = np.einsum("ij,ij->i", pts, pts)
    top = m_max or max(int(math.ceil(math.log(math.sqrt(r2.max()) + 1))) + 1, 1)
    m0 = max(1, math.ceil(math.sqrt(n)))
    failing, tested, est = [], [], {}
    for m in range(m0, top + 1):
        lo, hi = exp_r2_ceil(m - 1), exp_r2_floor(m)
        sel = pts[(r2 >= lo) & (r2 <= hi)]
        if sel.shape[0] == 0:
            continue
        tested.append(m)
        h = hitting_prob(Occupancy(sel), np.zeros(d, np.int64), ShellBall(m + delta, d), samples,
                         stream.child(m), workers)
        est[m] = h
        thresh = math.log(m) ** 2 / m
        if h.value - 3 * h.stderr > thresh:
            failing.append(m)
    return NiceSetResult(not failing, failing, tested, est)


def loop_free_gap_diagnostic(n: int, samples: int, seed=0, delta_frac: float = 0.5, d: int = 4,
                             workers=None) -> Estimate:
    """Fraction of ``n``-step walks with a window of ``ceil(delta n)``
    consecutive indices containing no loop-free time."""
    if not 0 < delta_frac <= 1:
        raise ValueError("delta must lie in (0, 1]")
    stream, base, bits, off = _setup(seed, d)
    window = int(math.ceil(delta_frac * n))
    vals = parallel_map(lambda lo, hi: _gap_batch(d, n, window, base, lo, hi, bits, off),
                        samples, chunk=1024, workers=workers)
    return Estimate.from_samples(vals, stream.provenance())


def inner_variance_check(n: float, paths: int, inner: int, seed=0, delta: float = DEFAULT_DELTA):
    """Mean within-path variance of the inner ``Z_n`` estimate at ``inner``
    and ``2 inner`` walks over the same paths; returns ``(v1, v2)``."""
    stream, base, bits, off = _setup(seed)
    thr, guard2 = exp_r2_floor(n), _guard2(n, delta)
    reps = 8
    v = []
    for k in (inner, 2 * inner):
        per_path = []
        for i in range(paths):
            # same path key i, independent inner streams per replicate
            zs = []
            for rep in range(reps):
                sub = np.uint64(derive(base, i))
                out = _zn_inner(sub, rep, k, thr, guard2, bits, off)
                zs.append(out)
            per_path.append(np.var(zs, ddof=1))
        v.append(float(np.mean(per_path)))
    return v[0], v[1]


@njit(cache=True)
def _zn_inner(ki, rep, inner, thr, guard2, bits, off):
    x0 = np.zeros(4, np.int64)
    keys, r2s, _ = _le_walk(x0, thr, new_state(derive(ki, 0)), DEFAULT_CAP, bits, off)
    hk = _table_below(keys, r2s, 1, BIG)
    chk = r2s[1:].max()
    sk = derive(derive(ki, 7), rep)
    esc = 0
    for j in range(inner):
        if K.first_hit_walk(x0, hk, chk, 0, False, 1, guard2, new_state(derive(sk, j)), bits, off) < 0:
            esc += 1
    return esc / inner


@dataclass
class SameComponentFit:
    slope: float
    intercept: float
    r_n: float
    q: dict


def same_component_fit(N: int = 32, distances: Sequence[int] = (6, 12, 24), samples: int = 20000,
                       seed=0, workers=None) -> SameComponentFit:
    """Regress ``a_n^2 q_N(x, y)`` on ``log |x - y|`` where ``N = cutoff_N(n)``.

    The pair sits symmetrically about the origin on the first axis.  The
    default separations are macroscopic (``n/4`` to ``n`` for ``N = 32``); at
    a few lattice spacings the local escape probability runs at scale
    ``log |x - y|`` rather than ``log n`` and the slope is steeper than -1.
    The intercept plus ``log n`` is the empirical ``r_n``.
    """
    from .wilson import same_component_prob

    n = next(k for k in range(2, 10 * N) if cutoff_N(k) >= N)
    a2 = scaling_a_n(n) ** 2
    stream = as_stream(seed)
    q = {}
    for j, r in enumerate(distances):
        x = np.zeros(4, dtype=np.int64)
        y = np.zeros(4, dtype=np.int64)
        x[0], y[0] = -(r // 2), r - r // 2
        q[r] = same_component_prob(N, x, y, samples, stream.child(j), workers=workers)
    x = np.log(np.array(distances, dtype=float))
    yv = a2 * np.array([q[r].value for r in distances])
    slope, icpt = np.polyfit(x, yv, 1)
    return SameComponentFit(float(slope), float(icpt), float(icpt + math.log(n)), q)


def results_csv(rows: Sequence[dict], config_hash: str = "") -> str:
    """``n, estimator, value, stderr, outer, inner, seed`` rows."""
    buf = io.StringIO()
    if config_hash:
        buf.write(f"#config_hash={config_hash}\n")
    cols = ["n", "estimator", "value", "stderr", "outer", "inner", "seed"]
    buf.write(",".join(cols) + "\n")
    for r in rows:
        buf.write(",".join(str(r[c]) if not isinstance(r[c], float) else repr(r[c]) for c in cols) + "\n")
    return buf.getvalue()
