"""Wilson's algorithm for the wired uniform spanning tree on finite graphs.

A :class:`WiredGraph` is stored in CSR form: interior vertices are
``0..n-1`` and the root (the identified boundary) is vertex ``n``.  Every
interior-to-boundary lattice edge becomes its own edge to the root, so the
wired graph is a multigraph and trees remember which CSR slot they used.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

from . import _walk as K
from .estimate import Estimate, parallel_map
from .lattice import EuclideanBall, Region, SiteIndex, direction_vectors
from .rng import as_stream, derive, new_state, rand_below

DEFAULT_WALK_CAP = 10**9


class WilsonCapExceeded(RuntimeError):
    pass


@dataclass
class WiredGraph:
    """Interior vertices ``0..n-1`` plus root ``n`` in CSR adjacency.

    ``points`` holds lattice coordinates when built from a region; ``labels``
    and ``slot_edge`` map back to an oracle :class:`SmallGraph`.
    """

    indptr: np.ndarray
    nbr: np.ndarray
    points: Optional[np.ndarray] = None
    labels: Optional[list] = None
    slot_edge: Optional[np.ndarray] = None
    descriptor: str = ""

    @property
    def n(self) -> int:
        return self.indptr.shape[0] - 1

    @property
    def root(self) -> int:
        return self.n

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def root_edges(self) -> np.ndarray:
        """Number of parallel edges from each interior vertex to the root."""
        out = np.zeros(self.n, dtype=np.int64)
        for v in range(self.n):
            out[v] = np.count_nonzero(self.nbr[self.indptr[v]:self.indptr[v + 1]] == self.n)
        return out

    @classmethod
    def from_region(cls, region: Region) -> "WiredGraph":
        pts = region.interior()
        n = pts.shape[0]
        if n == 0:
            raise ValueError("region has no interior vertices")
        idx = SiteIndex(pts)
        dirs = direction_vectors(region.d)
        nbr = np.empty((n, dirs.shape[0]), dtype=np.int64)
        for c, e in enumerate(dirs):
            j = idx.lookup(pts + e)
            j[j < 0] = n
            nbr[:, c] = j
        indptr = np.arange(n + 1, dtype=np.int64) * dirs.shape[0]
        return cls(indptr, nbr.ravel(), points=pts, descriptor=region.descriptor())

    @classmethod
    def ball(cls, N: float, d: int = 4) -> "WiredGraph":
        return cls.from_region(EuclideanBall(N, d))

    @classmethod
    def from_small(cls, g) -> "WiredGraph":
        """CSR view of an oracle graph; vertex order is ``g.nonroot`` then root."""
        order = g.nonroot + [g.root]
        pos = {v: i for i, v in enumerate(order)}
        inc = g.incident()
        indptr = [0]
        nbr, slot_edge = [], []
        for v in order[:-1]:
            for eid, w in inc[v]:
                nbr.append(pos[w])
                slot_edge.append(eid)
            indptr.append(len(nbr))
        pts = None
        if g.embedding:
            pts = np.array([g.embedding[v] for v in order[:-1]], dtype=np.int64)
        return cls(np.array(indptr, dtype=np.int64), np.array(nbr, dtype=np.int64),
                   points=pts, labels=order, slot_edge=np.array(slot_edge, dtype=np.int64),
                   descriptor="small")

    def index_of(self, x) -> int:
        if self.points is None:
            return self.labels.index(x)
        hit = np.flatnonzero(np.all(self.points == np.asarray(x), axis=1))
        if hit.size == 0:
            raise KeyError(f"{x} is not an interior vertex")
        return int(hit[0])


# -- kernels --------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _wilson_into(indptr, nbr, order, key, cap, parent, pslot, nxt, nslot, in_tree):
    """One Wilson tree.  Branch ``b`` (started from ``order[b]``) draws from
    the stream ``derive(key, b)``.  Returns 0, or -1 when a walk hits ``cap``."""
    n = indptr.shape[0] - 1
    in_tree[:] = False
    in_tree[n] = True
    for b in range(order.shape[0]):
        v0 = order[b]
        if in_tree[v0]:
            continue
        st = new_state(derive(key, b))
        u = v0
        steps = 0
        while not in_tree[u]:
            lo = indptr[u]
            s = lo + rand_below(st, indptr[u + 1] - lo)
            nxt[u] = nbr[s]
            nslot[u] = s
            u = nbr[s]
            steps += 1
            if steps > cap:
                return -1
        u = v0
        while not in_tree[u]:
            in_tree[u] = True
            parent[u] = nxt[u]
            pslot[u] = nslot[u]
            u = nxt[u]
    return 0


@njit(cache=True, nogil=True)
def _wilson_batch(indptr, nbr, order, base, lo, hi, cap):
    n = indptr.shape[0] - 1
    parents = np.empty((hi - lo, n), np.int64)
    slots = np.empty((hi - lo, n), np.int64)
    nxt = np.empty(n, np.int64)
    nslot = np.empty(n, np.int64)
    in_tree = np.empty(n + 1, np.bool_)
    for i in range(lo, hi):
        if _wilson_into(indptr, nbr, order, derive(base, i), cap, parents[i - lo],
                        slots[i - lo], nxt, nslot, in_tree) < 0:
            return parents[:0], slots[:0]
    return parents, slots


@njit(cache=True, nogil=True)
def _uf_find(uf, a):
    r = a
    while uf[r] != r:
        r = uf[r]
    while uf[a] != r:
        nx = uf[a]
        uf[a] = r
        a = nx
    return r


@njit(cache=True, nogil=True)
def component_labels(parent):
    """Union-find (path compression, union by size) over non-root edges.

    Each vertex is labelled by the smallest vertex index in its class.
    """
    n = parent.shape[0]
    uf = np.arange(n)
    size = np.ones(n, np.int64)
    for v in range(n):
        p = parent[v]
        if p >= n:
            continue
        a = _uf_find(uf, v)
        b = _uf_find(uf, p)
        if a == b:
            continue
        if size[a] < size[b]:
            a, b = b, a
        uf[b] = a
        size[a] += size[b]
    rep = np.full(n, n, np.int64)
    for v in range(n):
        r = _uf_find(uf, v)
        if v < rep[r]:
            rep[r] = v
    out = np.empty(n, np.int64)
    for v in range(n):
        out[v] = rep[_uf_find(uf, v)]
    return out


@njit(cache=True, nogil=True)
def _same_component_batch(indptr, nbr, order, base, lo, hi, cap, x, y):
    n = indptr.shape[0] - 1
    out = np.empty(hi - lo, np.float64)
    parent = np.empty(n, np.int64)
    pslot = np.empty(n, np.int64)
    nxt = np.empty(n, np.int64)
    nslot = np.empty(n, np.int64)
    in_tree = np.empty(n + 1, np.bool_)
    for i in range(lo, hi):
        if _wilson_into(indptr, nbr, order, derive(base, i), cap, parent, pslot,
                        nxt, nslot, in_tree) < 0:
            return out[:0]
        lab = component_labels(parent)
        out[i - lo] = 1.0 if lab[x] == lab[y] else 0.0
    return out


@njit(cache=True, nogil=True)
def _two_walk_batch(x0, y0, hi2, base, lo, hi, bits, off, cap):
    """Walk from ``x0`` to exit of ``|z|^2 <= hi2``, erase loops, then report
    whether a walk from ``y0`` meets the erased path before exiting."""
    out = np.empty(hi - lo, np.float64)
    for i in range(lo, hi):
        st = new_state(derive(base, i))
        keys, _, status = K.walk_radial(x0, 0, hi2, st, cap, bits, off)
        if status != K.STATUS_OK:
            return out[:0]
        pos = K.le_positions(keys)
        hk, _ = K.table_from(keys[pos])
        t = K.first_hit_walk(y0, hk, hi2, 0, False, 1, hi2, st, bits, off)
        out[i - lo] = 1.0 if t >= 0 else 0.0
    return out


# -- public API -----------------------------------------------------------------

@dataclass
class Forest:
    """A wired spanning tree: ``parent[v]`` for interior ``v`` (root = ``n``)."""

    graph: WiredGraph
    parent: np.ndarray
    slot: np.ndarray
    seed: str = ""

    def __post_init__(self):
        self.parent.setflags(write=False)

    @property
    def n(self) -> int:
        return self.graph.n

    def root_children(self) -> np.ndarray:
        return np.flatnonzero(self.parent == self.n)

    def edge_ids(self) -> frozenset:
        """Edge ids in the source :class:`SmallGraph` (oracle interop)."""
        if self.graph.slot_edge is None:
            return frozenset(int(s) for s in self.slot)
        return frozenset(int(e) for e in self.graph.slot_edge[self.slot])

    def is_spanning_tree(self) -> bool:
        n = self.n
        state = np.zeros(n + 1, dtype=np.int8)
        state[n] = 2
        for v in range(n):
            path = []
            u = v
            while state[u] == 0:
                state[u] = 1
                path.append(u)
                u = self.parent[u]
                if not (0 <= u <= n):
                    return False
            if state[u] == 1:
                return False
            for w in path:
                state[w] = 2
        return True

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("vertex,parent\n")
        for v, p in enumerate(self.parent):
            buf.write(f"{v},{'root' if p == self.n else int(p)}\n")
        return buf.getvalue()


@dataclass
class Partition:
    """Components of the forest with root edges removed."""

    labels: np.ndarray

    @property
    def count(self) -> int:
        return int(np.unique(self.labels).size)

    def same(self, u: int, v: int) -> bool:
        return bool(self.labels[u] == self.labels[v])

    def classes(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == r) for r in np.unique(self.labels)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("vertex,component\n")
        for v, c in enumerate(self.labels):
            buf.write(f"{v},{int(c)}\n")
        return buf.getvalue()


def _order_array(graph: WiredGraph, order) -> np.ndarray:
    if order is None:
        return np.arange(graph.n, dtype=np.int64)
    order = np.asarray(order, dtype=np.int64)
    if order.shape != (graph.n,) or not np.array_equal(np.sort(order), np.arange(graph.n)):
        raise ValueError("order must be a permutation of the interior vertices")
    return order


def wilson_ust(graph: WiredGraph, order=None, seed=0, cap: int = DEFAULT_WALK_CAP) -> Forest:
    """Uniform spanning tree of the wired graph by Wilson's algorithm."""
    stream = as_stream(seed)
    parents, slots = sample_trees(graph, 1, stream, order=order, cap=cap)
    return Forest(graph, parents[0], slots[0], stream.provenance())


def sample_trees(graph: WiredGraph, count: int, seed=0, order=None,
                 cap: int = DEFAULT_WALK_CAP, workers: int | None = None):
    """``count`` independent trees as ``(parents, slots)`` arrays; tree ``i``
    uses the key ``derive(seed key, i)``."""
    order = _order_array(graph, order)
    base = np.uint64(as_stream(seed).key)
    ip, nb = graph.indptr, graph.nbr

    def work(lo, hi):
        p, s = _wilson_batch(ip, nb, order, base, lo, hi, cap)
        if p.shape[0] != hi - lo:
            raise WilsonCapExceeded(f"a Wilson walk exceeded {cap} steps")
        return np.stack([p, s], axis=1)

    out = parallel_map(work, count, chunk=max(1, min(4096, 2**22 // max(graph.n, 1))),
                       workers=workers)
    if count == 0:
        return np.zeros((0, graph.n), np.int64), np.zeros((0, graph.n), np.int64)
    return out[:, 0, :], out[:, 1, :]


def usf_components(forest: Forest) -> Partition:
    return Partition(component_labels(np.ascontiguousarray(forest.parent)))


def same_component_prob(N: float, x, y, samples: int, seed=0, method: str = "walks",
                        d: int = 4, order=None, cap: int = DEFAULT_WALK_CAP,
                        workers: int | None = None) -> Estimate:
    """Estimate ``q_N(x, y)``, the probability that ``x`` and ``y`` share a
    component of the wired forest on ``A_N``.

    ``method="wilson"`` samples full forests.  ``method="walks"`` uses the
    event that a walk from ``y`` hits the loop-erased walk from ``x`` before
    the boundary (Wilson's algorithm with ``x`` then ``y`` first).
    """
    stream = as_stream(seed)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    region = EuclideanBall(N, d)
    if not (region.contains(tuple(x)) and region.contains(tuple(y))):
        raise ValueError("x and y must lie in A_N")
    if np.array_equal(x, y):
        return Estimate(1.0, 0.0, samples, stream.provenance())
    base = np.uint64(stream.key)
    if method == "wilson":
        g = WiredGraph.from_region(region)
        ix, iy = g.index_of(x), g.index_of(y)
        ordr = _order_array(g, order)

        def work(lo, hi):
            r = _same_component_batch(g.indptr, g.nbr, ordr, base, lo, hi, cap, ix, iy)
            if r.shape[0] != hi - lo:
                raise WilsonCapExceeded(f"a Wilson walk exceeded {cap} steps")
            return r

        chunk = max(1, 2**20 // g.n)
    elif method == "walks":
        bits, off = K.packing(d)
        hi2 = region.r2_bounds[1]

        def work(lo, hi):
            r = _two_walk_batch(x, y, hi2, base, lo, hi, bits, off, cap)
            if r.shape[0] != hi - lo:
                raise WilsonCapExceeded(f"a walk exceeded {cap} steps")
            return r

        chunk = 4096
    else:
        raise ValueError(f"unknown method {method!r}")
    vals = parallel_map(work, samples, chunk=chunk, workers=workers)
    return Estimate.from_samples(vals, stream.provenance())


def tree_counts(graph: WiredGraph, slots: np.ndarray) -> dict:
    """Histogram of sampled trees keyed by oracle edge-id sets."""
    edges = graph.slot_edge[slots] if graph.slot_edge is not None else slots
    edges = np.sort(edges, axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return {frozenset(int(e) for e in row): int(c) for row, c in zip(uniq, counts)}


def component_counts(parents: np.ndarray, n: int) -> np.ndarray:
    """Number of components per sampled tree (= edges into the root)."""
    return np.count_nonzero(parents == n, axis=1)
