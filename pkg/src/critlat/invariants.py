"""Brute-force invariant checks on exhaustively enumerated short walks."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _le_naive(keys, lo, hi, out):
    """Chronological loop-erasure of ``keys[lo:hi+1]`` into ``out``; returns length."""
    m = 0
    t = lo
    while True:
        last = t
        for s in range(hi, t - 1, -1):
            if keys[s] == keys[t]:
                last = s
                break
        out[m] = keys[last]
        m += 1
        if last >= hi:
            return m
        t = last + 1


@njit(cache=True)
def _check_walk(keys, n, full, win, restricted, lf):
    """Window property for every pair of loop-free times of ``keys[:n]``."""
    cnt = 0
    for j in range(n):
        ok = True
        for a in range(j + 1):
            for b in range(j + 1, n):
                if keys[a] == keys[b]:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            lf[cnt] = j
            cnt += 1
    mf = _le_naive(keys, 0, n - 1, full)
    for p in range(cnt):
        for q in range(p + 1, cnt):
            j, k = lf[p], lf[q]
            mw = _le_naive(keys, j, k, win)
            mr = 0
            for i in range(mf):
                inside = False
                for s in range(j, k + 1):
                    if keys[s] == full[i]:
                        inside = True
                        break
                if inside:
                    restricted[mr] = full[i]
                    mr += 1
            if mr != mw:
                return False
            for i in range(mw):
                if restricted[i] != win[i]:
                    return False
    return True


@njit(cache=True)
def _exhaustive(max_len):
    checked = 0
    failures = 0
    keys = np.empty(max_len + 1, np.int64)
    full = np.empty(max_len + 1, np.int64)
    win = np.empty(max_len + 1, np.int64)
    restricted = np.empty(max_len + 1, np.int64)
    lf = np.empty(max_len + 1, np.int64)
    dk = np.array([1, -1, 64, -64], np.int64)
    base = 32 * 64 + 32
    for length in range(0, max_len + 1):
        # the first step is fixed to +e1; the other three follow by rotation
        total = 4 ** (length - 1) if length > 0 else 1
        for code in range(total):
            keys[0] = base
            if length > 0:
                keys[1] = base + 1
            c = code
            for t in range(2, length + 1):
                keys[t] = keys[t - 1] + dk[c & 3]
                c >>= 2
            checked += 1
            if not _check_walk(keys, length + 1, full, win, restricted, lf):
                failures += 1
    return checked, failures


def exhaustive_window_check(max_len: int = 12) -> tuple[int, int]:
    """Check the loop-free window property on every planar walk of at most
    ``max_len`` steps whose first step is ``+e1`` (the rest follow by
    rotation).  Returns ``(walks checked, failures)``."""
    if not 0 <= max_len <= 14:
        raise ValueError("max_len must lie in [0, 14]")
    c, f = _exhaustive(max_len)
    return int(c), int(f)
