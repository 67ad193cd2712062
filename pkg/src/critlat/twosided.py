"""Two-sided loop-erased walk through the origin by joint rejection.

One attempt draws ``eta = LE(W)`` for a walk ``W`` run to the guard shell
``C_{n + delta}`` and an independent walk ``S`` run to ``sigma_n``; it is
accepted when ``S[1, sigma_n]`` avoids ``eta cap C_n``.  Accepted ``eta`` have
the law of ``LE(W)`` reweighted by ``Z(eta) / E[Z]`` and the accepted ``S`` is
a walk conditioned to avoid ``eta``.  The past side is ``eta`` up to its first
exit of ``C_n``; the future side is ``LE(S)``.
"""
from __future__ import annotations

import io
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numba import njit
from scipy import stats

from . import _walk as K
from .estimate import Estimate, parallel_map
from .lattice import exp_r2_floor
from .lerw_stats import DEFAULT_DELTA, _eta_ws, _ws_new
from .oracle import SmallGraph, exact_hitting, exact_lerw_law, total_variation
from .paths import DEFAULT_CAP, Saw
from .rng import as_stream, derive, new_state, rand_below
from .wilson import WiredGraph

MAX_ATTEMPTS = 10_000


@dataclass
class SamplerStats:
    accepted: int
    attempted: int

    @property
    def rate(self) -> Estimate:
        if self.attempted == 0:
            return Estimate(float("nan"), float("nan"), 0)
        p = self.accepted / self.attempted
        se = math.sqrt(p * (1 - p) / self.attempted)
        return Estimate(p, se, self.attempted)

    def merge(self, other: "SamplerStats") -> "SamplerStats":
        return SamplerStats(self.accepted + other.accepted, self.attempted + other.attempted)


class RejectionExhausted(RuntimeError):
    def __init__(self, stats: SamplerStats):
        super().__init__(f"no acceptance in {stats.attempted} attempts")
        self.stats = stats


@dataclass
class TwoSidedPath:
    past: Saw
    future: Saw
    n: float
    attempts: int

    def disjoint(self) -> bool:
        """Sides share only the origin inside ``C_n``."""
        thr = exp_r2_floor(self.n)
        a = set(map(tuple, self.past.sites[1:][self.past.r2[1:] <= thr]))
        b = set(map(tuple, self.future.sites[1:][self.future.r2[1:] <= thr]))
        return not (a & b)


# -- lattice kernels ----------------------------------------------------------

@njit(cache=True)
def _attempt_ws(d, thr, guard2, key, cap, bits, off, ws):
    """One attempt; returns ``(accepted, ws, m, n_s, status)`` with ``eta`` in
    ``ws[6][:m]`` and the walk ``S`` in ``ws[0][:n_s]``."""
    x0 = np.zeros(d, np.int64)
    ws, m, status = _eta_ws(x0, guard2, new_state(derive(key, 0)), cap, bits, off, ws)
    if status != K.STATUS_OK:
        return False, ws, m, 0, 1
    hk, u1, c1, _ = K.set_fill(ws[8], ws[9], ws[6], ws[7], 0, m, thr)
    sk, sr2, ns, s2 = K.radial_into(x0, 0, thr, new_state(derive(key, 1)), cap, bits, off,
                                    ws[0], ws[1])
    ws = (sk, sr2, ws[2], ws[3], ws[4], ws[5], ws[6], ws[7], hk, u1, ws[10], ws[11])
    ok = s2 == K.STATUS_OK
    if ok:
        for t in range(1, ns):
            if sr2[t] <= thr and K.h_has(hk, sk[t]):
                ok = False
                break
    K.set_clear(hk, u1, c1)
    return ok, ws, m, ns, s2


@njit(cache=True, nogil=True)
def _attempt_batch(d, thr, guard2, base, lo, hi, cap, bits, off):
    out = np.zeros((hi - lo, 2))
    ws = _ws_new()
    for a in range(lo, hi):
        ok, ws, _, _, status = _attempt_ws(d, thr, guard2, derive(base, a), cap, bits, off, ws)
        out[a - lo, 0] = 1.0 if ok else 0.0
        out[a - lo, 1] = status
    return out


def _accept_flags(n, attempts, base, delta, d, cap, workers, offset=0):
    bits, off = K.packing(d)
    thr, guard2 = exp_r2_floor(n), exp_r2_floor(n + delta)
    out = parallel_map(lambda lo, hi: _attempt_batch(d, thr, guard2, base, lo + offset, hi + offset,
                                                     cap, bits, off),
                       attempts, chunk=64, workers=workers)
    if np.any(out[:, 1] != 0):
        raise RuntimeError("a walk exceeded the step cap")
    return out[:, 0] > 0


def _build(n, a, base, delta, d, cap, attempts) -> TwoSidedPath:
    bits, off = K.packing(d)
    thr, guard2 = exp_r2_floor(n), exp_r2_floor(n + delta)
    ok, ws, m, ns, _ = _attempt_ws(d, thr, guard2, np.uint64(derive(base, np.int64(a))), cap, bits,
                                  off, _ws_new())
    assert ok
    eta, er2 = ws[6][:m], ws[7][:m]
    outside = np.flatnonzero(er2 > thr)
    past = eta[: outside[0] + 1].copy()
    skeys = ws[0][:ns].copy()
    fut = skeys[K.le_positions(skeys)]
    return TwoSidedPath(Saw._from_keys(past, d), Saw._from_keys(fut, d), n, attempts)


def sample_two_sided(n: float, seed=0, max_attempts: int = MAX_ATTEMPTS,
                     delta: float = DEFAULT_DELTA, d: int = 4, cap: int = DEFAULT_CAP) -> TwoSidedPath:
    """First accepted two-sided path for ``seed``."""
    paths, stats = sample_many(n, 1, seed, max_attempts, delta, d, cap)
    return paths[0]


def sample_many(n: float, count: int, seed=0, max_attempts: int = MAX_ATTEMPTS,
                delta: float = DEFAULT_DELTA, d: int = 4, cap: int = DEFAULT_CAP,
                workers=None) -> tuple[list[TwoSidedPath], SamplerStats]:
    """The first ``count`` accepted paths of the attempt sequence for ``seed``.

    Attempt ``a`` uses its own key, so the ``k``-th accepted path does not
    depend on the worker count.  ``max_attempts`` bounds the attempts spent
    on each accepted path.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    stream = as_stream(seed)
    base = np.uint64(stream.key)
    paths: list[TwoSidedPath] = []
    done, last = 0, -1
    block = 256
    while len(paths) < count:
        flags = _accept_flags(n, block, base, delta, d, cap, workers, offset=done)
        for j in np.flatnonzero(flags):
            a = done + int(j)
            paths.append(_build(n, a, base, delta, d, cap, a - last))
            last = a
            if len(paths) == count:
                done = a + 1
                break
        else:
            done += block
            if done - last - 1 >= max_attempts:
                raise RejectionExhausted(SamplerStats(len(paths), done))
    return paths, SamplerStats(len(paths), done)


def acceptance_rate(n: float, attempts: int, seed=0, delta: float = DEFAULT_DELTA, d: int = 4,
                    cap: int = DEFAULT_CAP, workers=None) -> SamplerStats:
    stream = as_stream(seed)
    flags = _accept_flags(n, attempts, np.uint64(stream.key), delta, d, cap, workers)
    return SamplerStats(int(flags.sum()), attempts)


def paths_csv(paths, config_hash: str = "") -> str:
    """``sample_id, side, index, x1..xd`` rows."""
    buf = io.StringIO()
    if config_hash:
        buf.write(f"#config_hash={config_hash}\n")
    d = paths[0].past.d if paths else 4
    buf.write(",".join(["sample_id", "side", "index"] + [f"x{i + 1}" for i in range(d)]) + "\n")
    for sid, p in enumerate(paths):
        for side, saw in (("past", p.past), ("future", p.future)):
            for i, x in enumerate(saw.sites):
                buf.write(f"{sid},{side},{i}," + ",".join(str(int(v)) for v in x) + "\n")
    return buf.getvalue()


# -- stationarity probe -------------------------------------------------------

def _first_dirs(saw, k):
    steps = np.diff(saw.sites[: k + 1], axis=0)
    d = saw.d
    codes = []
    for s in steps:
        a = int(np.flatnonzero(s)[0])
        codes.append(2 * a + (0 if s[a] > 0 else 1))
    return codes, d


def stationarity_probe(n: float, samples: int, seed=0, steps: int = 3, **kw) -> dict:
    """Near-root step-direction histograms of the two sides and a chi-square
    comparison of them; exploratory output."""
    if n < 3:
        raise ValueError("n must be at least 3")
    paths, stats_ = sample_many(n, samples, seed, **kw)
    hp, hf = Counter(), Counter()
    first_p, first_f = Counter(), Counter()
    d = paths[0].past.d
    for p in paths:
        cp, _ = _first_dirs(p.past, steps)
        cf, _ = _first_dirs(p.future, steps)
        hp.update(cp)
        hf.update(cf)
        first_p[cp[0]] += 1
        first_f[cf[0]] += 1
    dirs = range(2 * d)
    table = np.array([[hp[c] for c in dirs], [hf[c] for c in dirs]])
    table = table[:, table.sum(axis=0) > 0]
    chi2, pval, _, _ = stats.chi2_contingency(table)
    first = np.array([first_p[c] + first_f[c] for c in dirs])
    _, p_uniform = stats.chisquare(first)
    return {"past": dict(hp), "future": dict(hf), "chi2": float(chi2), "p_sides": float(pval),
            "p_first_uniform": float(p_uniform), "stats": stats_}


# -- tiny graph validation ----------------------------------------------------

@njit(cache=True)
def _graph_walk(indptr, nbr, start, root, state):
    out = np.empty(16, np.int64)
    out[0] = start
    t = 1
    v = start
    while v != root:
        deg = indptr[v + 1] - indptr[v]
        v = nbr[indptr[v] + rand_below(state, deg)]
        if t == out.shape[0]:
            out = K._grow(out)
        out[t] = v
        t += 1
    return out[:t]


@njit(cache=True, nogil=True)
def _graph_attempts(indptr, nbr, start, root, base, lo, hi, maxlen):
    """Per attempt: accepted flag and the loop-erased path padded with -1."""
    out = np.full((hi - lo, maxlen + 1), -1, np.int64)
    for a in range(lo, hi):
        key = derive(base, a)
        w = _graph_walk(indptr, nbr, start, root, new_state(derive(key, 0)))
        eta = w[K.le_positions(w)]
        s = _graph_walk(indptr, nbr, start, root, new_state(derive(key, 1)))
        ok = True
        for t in range(1, s.shape[0] - 1):
            for b in range(eta.shape[0] - 1):
                if s[t] == eta[b]:
                    ok = False
                    break
            if not ok:
                break
        out[a - lo, 0] = 1 if ok else 0
        out[a - lo, 1:1 + eta.shape[0]] = eta
    return out


def exact_marginal(g: SmallGraph, start) -> tuple[dict, Fraction]:
    """Normalized law ``P(eta = beta) Z(beta)`` and the normalizer (the exact
    acceptance probability)."""
    law = exact_lerw_law(g, start)
    trans = g.transition(start)
    weights = {}
    for beta, p in law.items():
        avoid = set(beta[:-1])
        z = Fraction(0)
        for u, pu in trans.items():
            if u == g.root:
                z += pu
            elif u not in avoid:
                z += pu * (1 - Fraction(exact_hitting(g, avoid, u)))
        weights[beta] = p * z
    total = sum(weights.values(), Fraction(0))
    return {b: w / total for b, w in weights.items()}, total


@dataclass
class MarginalCheck:
    tv: float
    exact: dict
    empirical: dict
    normalizer: Fraction
    stats: SamplerStats

    @property
    def rate_z(self) -> float:
        return self.stats.rate.zscore(float(self.normalizer))


def validate_marginal_tiny(g: SmallGraph, samples: int, seed=0, start=None,
                           workers=None) -> MarginalCheck:
    """Run the rejection sampler on ``g`` until ``samples`` acceptances and
    compare the accepted ``eta`` law with the exact reweighted law."""
    if len(g.vertices) > 8:
        raise ValueError("validate_marginal_tiny is meant for graphs with at most 8 vertices")
    start = g.nonroot[0] if start is None else start
    exact, total = exact_marginal(g, start)
    wg = WiredGraph.from_small(g)
    labels = wg.labels
    s0, root = labels.index(start), wg.root
    maxlen = wg.n + 1
    base = np.uint64(as_stream(seed).key)
    counts: Counter = Counter()
    accepted = attempted = 0
    block = max(1024, int(1.2 * samples / float(total)))
    while accepted < samples:
        out = parallel_map(lambda lo, hi: _graph_attempts(wg.indptr, wg.nbr, s0, root, base,
                                                          lo + attempted, hi + attempted, maxlen),
                           block, chunk=8192, workers=workers)
        for j, row in enumerate(out):
            if row[0]:
                counts[tuple(labels[v] for v in row[1:] if v >= 0)] += 1
                accepted += 1
                if accepted == samples:
                    attempted += j + 1
                    break
        else:
            attempted += block
    emp = {b: c / accepted for b, c in counts.items()}
    return MarginalCheck(total_variation(emp, exact), exact, emp, total,
                         SamplerStats(accepted, attempted))
