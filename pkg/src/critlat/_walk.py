"""Jitted walk kernels shared by the sampling modules.

Sites inside kernels are packed into one int64 key, ``bits = 63 // d`` bits
per coordinate with offset ``2**(bits-1)``, so a unit step along axis ``a``
changes the key by ``+-1 << (bits * a)``.  Sets of sites are open-addressing
hash tables (``keys`` array with -1 for empty, parallel ``vals`` array).
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .rng import derive, mix64, new_state, rand_below

STATUS_OK = 0
STATUS_CAP = 1
STATUS_RANGE = 2


def packing(d: int) -> tuple[int, int]:
    bits = 63 // d
    return bits, 1 << (bits - 1)


def pack_many(pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.int64)
    if pts.ndim == 1:
        pts = pts[None, :]
    d = pts.shape[1]
    bits, off = packing(d)
    if pts.size and np.abs(pts).max() >= off:
        raise ValueError("coordinates exceed the packing range")
    key = np.zeros(pts.shape[0], dtype=np.int64)
    for a in range(d):
        key += (pts[:, a] + off) << (bits * a)
    return key


def unpack_many(keys: np.ndarray, d: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    bits, off = packing(d)
    mask = (1 << bits) - 1
    out = np.empty((keys.shape[0], d), dtype=np.int64)
    for a in range(d):
        out[:, a] = ((keys >> (bits * a)) & mask) - off
    return out


# -- hash tables --------------------------------------------------------------

@njit(cache=True)
def h_new(n_expected):
    cap = 16
    while cap < 2 * n_expected + 2:
        cap *= 2
    return np.full(cap, -1, dtype=np.int64), np.zeros(cap, dtype=np.int64)


# Sites in one 8x8x8x8 block (for the d = 4 packing) share a hashed base
# slot and occupy consecutive offsets, so a walk's successive probes stay in
# cache.  For other packings this is still a valid hash.
_BLK = np.int64(7 | (7 << 15) | (7 << 30) | (7 << 45))


@njit(cache=True, inline="always")
def _local(key):
    return (key & 7) | ((key >> 12) & 56) | ((key >> 24) & 448) | ((key >> 36) & 3584)


@njit(cache=True, inline="always")
def h_slot(hk, key):
    mask = hk.shape[0] - 1
    blk = np.int64(mix64(np.uint64(key & ~_BLK)) >> np.uint64(12)) << 12
    i = (blk + _local(key)) & mask
    while hk[i] != -1 and hk[i] != key:
        i = (i + 1) & mask
    return i


@njit(cache=True, inline="always")
def h_put(hk, hv, key, val):
    i = h_slot(hk, key)
    hk[i] = key
    hv[i] = val


@njit(cache=True, inline="always")
def h_get(hk, hv, key):
    i = h_slot(hk, key)
    if hk[i] == key:
        return hv[i]
    return -1


@njit(cache=True, inline="always")
def h_has(hk, key):
    return hk[h_slot(hk, key)] == key


@njit(cache=True)
def h_from_keys(keys):
    """Table mapping each key to the smallest index where it occurs."""
    hk, hv = h_new(keys.shape[0])
    for t in range(keys.shape[0]):
        i = h_slot(hk, keys[t])
        if hk[i] != keys[t]:
            hk[i] = keys[t]
            hv[i] = t
    return hk, hv


# -- steps --------------------------------------------------------------------

@njit(cache=True)
def _pack1(x, bits, off):
    k = np.int64(0)
    for a in range(x.shape[0]):
        k += (x[a] + off) << (bits * a)
    return k


@njit(cache=True, inline="always")
def _step(x, c, bits):
    """Apply direction code ``c``; returns (key delta, r2 delta)."""
    a = c >> 1
    if c & 1:
        dr2 = -2 * x[a] + 1
        x[a] -= 1
        return -(np.int64(1) << (bits * a)), dr2
    dr2 = 2 * x[a] + 1
    x[a] += 1
    return np.int64(1) << (bits * a), dr2


@njit(cache=True)
def _grow(a):
    b = np.empty(2 * a.shape[0], a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def radial_into(x0, lo2, hi2, state, cap, bits, off, keys, r2s):
    """Walk from ``x0`` until the first site with ``r2`` outside ``[lo2, hi2]``,
    writing into the reusable buffers ``keys`` and ``r2s``.

    Returns ``(keys, r2s, n, status)``; buffers are replaced when they grow.
    Inside the band the walk moves in blocks no longer than the distance to
    the band's edge, so the exit test runs once per block.
    """
    d = x0.shape[0]
    x = x0.copy()
    r2 = np.int64(0)
    for a in range(d):
        r2 += x[a] * x[a]
    key = _pack1(x, bits, off)
    keys[0] = key
    r2s[0] = r2
    n = 1
    nd = 2 * d
    lim = off - 1
    safe = np.sqrt(np.float64(hi2)) + 1 < lim
    sq_lo = np.sqrt(np.float64(lo2)) if lo2 > 0 else 0.0
    sq_hi = np.sqrt(np.float64(hi2))
    while lo2 <= r2 <= hi2:
        if n > cap:
            return keys, r2s, n, STATUS_CAP
        b = 1
        if safe:
            rr = np.sqrt(np.float64(r2))
            b = np.int64(min(sq_hi - rr, rr - sq_lo if lo2 > 0 else sq_hi) - 1e-7)
            if b < 1:
                b = 1
        if n + b > keys.shape[0]:
            m = max(2 * keys.shape[0], n + b)
            k2 = np.empty(m, np.int64)
            k2[:n] = keys[:n]
            keys = k2
            q2 = np.empty(m, np.int64)
            q2[:n] = r2s[:n]
            r2s = q2
        for t in range(b):
            c = rand_below(state, nd)
            dk, dr = _step(x, c, bits)
            key += dk
            r2 += dr
            keys[n + t] = key
            r2s[n + t] = r2
        if not safe and (x[c >> 1] > lim or x[c >> 1] < -lim):
            return keys, r2s, n, STATUS_RANGE
        n += b
    return keys, r2s, n, STATUS_OK


@njit(cache=True)
def walk_radial(x0, lo2, hi2, state, cap, bits, off):
    """Walk from ``x0`` until the first site with ``r2`` outside ``[lo2, hi2]``.

    Returns ``(keys, r2s, status)``.  A start outside the band returns the
    single start site.
    """
    keys, r2s, n, status = radial_into(x0, lo2, hi2, state, cap, bits, off,
                                       np.empty(1024, np.int64), np.empty(1024, np.int64))
    return keys[:n].copy(), r2s[:n].copy(), status


@njit(cache=True)
def le_into(keys, n, tab, used, pos):
    """Loop-erasure positions of ``keys[:n]`` using a reusable table.

    ``tab`` interleaves keys and last-visit times (one cache line per probe)
    and is left empty on return.  Returns ``(tab, used, pos, m)`` with the
    positions in ``pos[:m]``.
    """
    if tab.shape[0] < 4 * n + 4:
        cap = 16
        while cap < 2 * n + 2:
            cap *= 2
        tab = np.full(2 * cap, -1, np.int64)
    if used.shape[0] < n:
        used = np.empty(max(n, 2 * used.shape[0]), np.int64)
    if pos.shape[0] < n:
        pos = np.empty(max(n, 2 * pos.shape[0]), np.int64)
    mask = tab.shape[0] // 2 - 1
    cnt = 0
    for t in range(n):
        k = keys[t]
        i = _probe(tab, k, mask)
        if tab[2 * i] != k:
            tab[2 * i] = k
            used[cnt] = i
            cnt += 1
        tab[2 * i + 1] = t
    m = 0
    t = 0
    while n > 0:
        j = tab[2 * _probe(tab, keys[t], mask) + 1]
        pos[m] = j
        m += 1
        if j >= n - 1:
            break
        t = j + 1
    for c in range(cnt):
        tab[2 * used[c]] = -1
    return tab, used, pos, m


@njit(cache=True, inline="always")
def _probe(tab, key, mask):
    blk = np.int64(mix64(np.uint64(key & ~_BLK)) >> np.uint64(12)) << 12
    i = (blk + _local(key)) & mask
    while tab[2 * i] != -1 and tab[2 * i] != key:
        i = (i + 1) & mask
    return i


@njit(cache=True)
def set_fill(hk, used, keys, r2s, lo, hi, cap2):
    """Insert ``keys[lo:hi]`` with ``r2 <= cap2`` into the empty reusable set
    ``hk``.  Returns ``(hk, used, count, max_r2)``; clear with :func:`set_clear`."""
    m = hi - lo
    if hk.shape[0] < 2 * m + 2:
        hk, _ = h_new(m)
    if used.shape[0] < m:
        used = np.empty(max(m, 2 * used.shape[0]), np.int64)
    cnt = 0
    mr = np.int64(-1)
    for t in range(lo, hi):
        if r2s[t] <= cap2:
            i = h_slot(hk, keys[t])
            if hk[i] != keys[t]:
                hk[i] = keys[t]
                used[cnt] = i
                cnt += 1
            if r2s[t] > mr:
                mr = r2s[t]
    return hk, used, cnt, mr


@njit(cache=True)
def set_clear(hk, used, cnt):
    for c in range(cnt):
        hk[used[c]] = -1


@njit(cache=True)
def walk_in_set(x0, hk, state, cap, bits, off):
    """Walk while the current site is in the hash set ``hk``."""
    d = x0.shape[0]
    x = x0.copy()
    r2 = np.int64(0)
    for a in range(d):
        r2 += x[a] * x[a]
    keys = np.empty(256, np.int64)
    r2s = np.empty(256, np.int64)
    key = _pack1(x, bits, off)
    keys[0] = key
    r2s[0] = r2
    n = 1
    nd = 2 * d
    status = STATUS_OK
    while h_has(hk, key):
        if n > cap:
            status = STATUS_CAP
            break
        c = rand_below(state, nd)
        dk, dr = _step(x, c, bits)
        key += dk
        r2 += dr
        if n == keys.shape[0]:
            keys = _grow(keys)
            r2s = _grow(r2s)
        keys[n] = key
        r2s[n] = r2
        n += 1
    return keys[:n].copy(), r2s[:n].copy(), status


@njit(cache=True)
def walk_fixed(x0, k, state, bits, off):
    d = x0.shape[0]
    x = x0.copy()
    r2 = np.int64(0)
    for a in range(d):
        r2 += x[a] * x[a]
    keys = np.empty(k + 1, np.int64)
    r2s = np.empty(k + 1, np.int64)
    key = _pack1(x, bits, off)
    keys[0] = key
    r2s[0] = r2
    nd = 2 * d
    for t in range(1, k + 1):
        c = rand_below(state, nd)
        dk, dr = _step(x, c, bits)
        key += dk
        r2 += dr
        keys[t] = key
        r2s[t] = r2
    return keys, r2s


# -- loop erasure -------------------------------------------------------------

@njit(cache=True)
def le_positions(keys):
    """Positions ``j_0 < j_1 < ...`` such that ``keys[j_k]`` is the
    chronological loop-erasure (each ``j_k`` is a last visit)."""
    n = keys.shape[0]
    out = np.empty(max(n, 1), np.int64)
    if n == 0:
        return out[:0]
    hk, hv = h_new(n)
    for t in range(n):
        h_put(hk, hv, keys[t], t)
    m = 0
    t = 0
    while True:
        j = h_get(hk, hv, keys[t])
        out[m] = j
        m += 1
        if j >= n - 1:
            break
        t = j + 1
    return out[:m].copy()


@njit(cache=True)
def loop_free_mask(keys):
    """``mask[j]`` is True iff ``keys[:j+1]`` and ``keys[j+1:]`` are disjoint."""
    n = keys.shape[0]
    hk, hv = h_new(n)
    first = np.empty(n, np.int64)
    # hv holds the last visit; first visits recorded per position
    for t in range(n):
        i = h_slot(hk, keys[t])
        if hk[i] != keys[t]:
            hk[i] = keys[t]
            first[t] = t
        else:
            first[t] = -1
        hv[i] = t
    diff = np.zeros(n + 1, np.int64)
    for t in range(n):
        if first[t] >= 0:
            last = h_get(hk, hv, keys[t])
            if last > t:
                diff[t] += 1
                diff[last] -= 1
    mask = np.empty(n, np.bool_)
    run = 0
    for t in range(n):
        run += diff[t]
        mask[t] = run == 0
    return mask


# -- hitting ------------------------------------------------------------------

@njit(cache=True)
def first_hit_walk(x0, hk, check_r2, skip_first, forbid_start, mode, limit,
                   state, bits, off):
    """Run a fresh walk from ``x0`` and report the first hitting time.

    A hit at time ``t`` means ``t >= skip_first`` and either the site is in
    ``hk`` (looked up only while ``r2 <= check_r2``) or ``forbid_start`` and
    the walk is back at ``x0`` with ``t >= 1``.  ``mode`` 0 runs ``limit``
    steps; ``mode`` 1 runs until ``r2 > limit``.  Returns -1 on no hit.
    """
    d = x0.shape[0]
    x = x0.copy()
    r2 = np.int64(0)
    for a in range(d):
        r2 += x[a] * x[a]
    key = _pack1(x, bits, off)
    start = key
    if skip_first == 0 and r2 <= check_r2 and h_has(hk, key):
        return 0
    nd = 2 * d
    t = 0
    while True:
        if mode == 0:
            if t >= limit:
                return -1
        elif r2 > limit:
            return -1
        c = rand_below(state, nd)
        dk, dr = _step(x, c, bits)
        key += dk
        r2 += dr
        t += 1
        if r2 <= check_r2:
            if h_has(hk, key):
                return t
            if forbid_start and key == start:
                return t


@njit(cache=True)
def visits_before_exit(x0, target, hk, check_r2, r2_exit, state, bits, off):
    """Visits to ``target`` (key) before exiting ``r2 <= r2_exit`` or hitting
    the kill set ``hk`` (checked while ``r2 <= check_r2``).

    Returns ``(visits, exit_key)`` with ``exit_key = -1`` when killed.
    """
    d = x0.shape[0]
    x = x0.copy()
    r2 = np.int64(0)
    for a in range(d):
        r2 += x[a] * x[a]
    key = _pack1(x, bits, off)
    if r2 <= check_r2 and h_has(hk, key):
        return 0, np.int64(-1)
    visits = 0
    nd = 2 * d
    while r2 <= r2_exit:
        if key == target:
            visits += 1
        c = rand_below(state, nd)
        dk, dr = _step(x, c, bits)
        key += dk
        r2 += dr
        if r2 <= check_r2 and h_has(hk, key):
            return visits, np.int64(-1)
    return visits, key


@njit(cache=True)
def empty_table():
    return h_new(0)


@njit(cache=True)
def table_from(keys):
    hk, hv = h_new(keys.shape[0])
    for t in range(keys.shape[0]):
        h_put(hk, hv, keys[t], t)
    return hk, hv


@njit(cache=True)
def max_r2_of(r2s, idx):
    m = np.int64(-1)
    for i in idx:
        if r2s[i] > m:
            m = r2s[i]
    return m


@njit(cache=True)
def sample_key(base, i):
    return derive(base, i)


@njit(cache=True)
def stream_for(base, i):
    return new_state(derive(base, i))
