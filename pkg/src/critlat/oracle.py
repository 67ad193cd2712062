"""Exact ground truth on tiny graphs.

Spanning trees are enumerated as rooted parent-edge assignments (one
outgoing edge per non-root vertex, acyclic), which is a bijection with
spanning trees.  Linear systems are solved in exact rational arithmetic.
Graphs may carry parallel edges: a wired boundary contributes one edge to
the root per boundary neighbour.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

import numpy as np

ENUM_VERTEX_CAP = 12
ENUM_TREE_CAP = 5_000_000
EXACT_SOLVE_CAP = 12


class OracleSizeError(ValueError):
    pass


@dataclass
class SmallGraph:
    """Undirected multigraph on labels ``vertices`` with a designated root.

    ``edges`` is a list of label pairs; an edge id is its list position.
    """

    vertices: list
    edges: list
    root: Hashable
    embedding: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = list(self.vertices)
        self.edges = [tuple(e) for e in self.edges]
        if self.root not in self.vertices:
            raise ValueError("root must be a vertex")
        known = set(self.vertices)
        for u, v in self.edges:
            if u not in known or v not in known:
                raise ValueError(f"edge ({u}, {v}) references an unknown vertex")
            if u == v:
                raise ValueError("self-loops are not allowed")
        if not self._connected():
            raise ValueError("graph must be connected")

    # structure ----------------------------------------------------------------

    @property
    def nonroot(self) -> list:
        return [v for v in self.vertices if v != self.root]

    def incident(self) -> dict:
        inc = defaultdict(list)
        for eid, (u, v) in enumerate(self.edges):
            inc[u].append((eid, v))
            inc[v].append((eid, u))
        return inc

    def degree(self, v) -> int:
        return sum(1 for u, w in self.edges if v in (u, w))

    def transition(self, u) -> dict:
        """``{v: Fraction}`` one-step law of simple random walk from ``u``."""
        c = Counter()
        for _, w in self.incident()[u]:
            c[w] += 1
        deg = sum(c.values())
        return {w: Fraction(k, deg) for w, k in c.items()}

    def _connected(self) -> bool:
        inc = self.incident()
        seen = {self.root}
        stack = [self.root]
        while stack:
            u = stack.pop()
            for _, w in inc[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(self.vertices)

    # construction -------------------------------------------------------------

    @classmethod
    def from_region(cls, region) -> "SmallGraph":
        """Wired graph of a finite lattice region: vertices ``0..n-1`` in
        lexicographic site order, root ``n``."""
        from .lattice import SiteIndex, direction_vectors

        pts = region.interior()
        idx = SiteIndex(pts)
        n = pts.shape[0]
        edges = []
        for i, p in enumerate(pts):
            for e in direction_vectors(region.d):
                j = idx.index(p + e)
                if j < 0:
                    edges.append((i, n))
                elif i < j:
                    edges.append((i, j))
        emb = {i: tuple(int(c) for c in p) for i, p in enumerate(pts)}
        return cls(list(range(n + 1)), edges, n, emb)

    @classmethod
    def complete(cls, k: int) -> "SmallGraph":
        edges = [(i, j) for i in range(k) for j in range(i + 1, k)]
        return cls(list(range(k)), edges, k - 1)

    @classmethod
    def cycle(cls, k: int) -> "SmallGraph":
        edges = [(i, (i + 1) % k) for i in range(k)]
        return cls(list(range(k)), edges, 0)

    @classmethod
    def path(cls, k: int) -> "SmallGraph":
        """Path ``0 - 1 - ... - k``, rooted at ``0``."""
        return cls(list(range(k + 1)), [(i, i + 1) for i in range(k)], 0)

    @classmethod
    def wired_grid(cls, rows: int, cols: int) -> "SmallGraph":
        from .lattice import ExplicitSet

        return cls.from_region(ExplicitSet([(i, j) for i in range(rows) for j in range(cols)]))

    @classmethod
    def parse(cls, text: str) -> "SmallGraph":
        """Edge-list text: one ``u v`` per line, ``#root r`` names the root;
        other ``#`` lines are comments.  Integer-looking labels become ints."""

        def lab(s):
            try:
                return int(s)
            except ValueError:
                return s

        edges, root = [], None
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "root":
                    root = lab(parts[1])
                continue
            u, v = line.split()[:2]
            edges.append((lab(u), lab(v)))
        if root is None:
            raise ValueError("edge list needs a '#root r' line")
        verts = sorted({x for e in edges for x in e} | {root}, key=lambda s: (str(type(s)), s))
        return cls(verts, edges, root)

    @classmethod
    def load(cls, path) -> "SmallGraph":
        with open(path) as fh:
            return cls.parse(fh.read())

    def dumps(self) -> str:
        lines = [f"#root {self.root}"] + [f"{u} {v}" for u, v in self.edges]
        return "\n".join(lines) + "\n"


# -- exact linear algebra -------------------------------------------------------

def bareiss_det(mat: Sequence[Sequence[int]]) -> int:
    """Determinant of an integer matrix by fraction-free elimination."""
    a = [list(map(int, row)) for row in mat]
    n = len(a)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def solve_exact(a: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    n = len(a)
    m = [list(row) + [bi] for row, bi in zip(a, b)]
    for c in range(n):
        piv = next(r for r in range(c, n) if m[r][c] != 0)
        m[c], m[piv] = m[piv], m[c]
        inv = 1 / m[c][c]
        m[c] = [v * inv for v in m[c]]
        for r in range(n):
            if r != c and m[r][c] != 0:
                f = m[r][c]
                m[r] = [vr - f * vc for vr, vc in zip(m[r], m[c])]
    return [m[r][n] for r in range(n)]


def laplacian(g: SmallGraph) -> tuple[list, np.ndarray]:
    order = g.nonroot + [g.root]
    pos = {v: i for i, v in enumerate(order)}
    L = np.zeros((len(order), len(order)), dtype=object)
    L[:] = 0
    for u, v in g.edges:
        i, j = pos[u], pos[v]
        L[i, i] += 1
        L[j, j] += 1
        L[i, j] -= 1
        L[j, i] -= 1
    return order, L


def matrix_tree_count(g: SmallGraph) -> int:
    _, L = laplacian(g)
    k = len(g.vertices) - 1
    return bareiss_det([[int(L[i, j]) for j in range(k)] for i in range(k)])


# -- spanning trees -------------------------------------------------------------

def enumerate_spanning_trees(g: SmallGraph, max_trees: int = ENUM_TREE_CAP) -> list[frozenset]:
    """All spanning trees as frozensets of edge ids."""
    if len(g.nonroot) > ENUM_VERTEX_CAP:
        raise OracleSizeError(f"enumeration capped at {ENUM_VERTEX_CAP} non-root vertices")
    if matrix_tree_count(g) > max_trees:
        raise OracleSizeError("too many spanning trees to enumerate")
    return [frozenset(t.values()) for t in _rooted_assignments(g)]


def _rooted_assignments(g: SmallGraph):
    """Yield ``{vertex: edge id}`` parent choices forming trees oriented to root."""
    inc = g.incident()
    verts = g.nonroot
    parent: dict = {}
    pedge: dict = {}

    def reaches_root_without(v, target) -> bool:
        # follow assigned parents from v; False if we meet target
        while v != g.root:
            if v == target:
                return False
            if v not in parent:
                return True
            v = parent[v]
        return True

    def rec(i):
        if i == len(verts):
            yield dict(pedge)
            return
        v = verts[i]
        for eid, w in inc[v]:
            if not reaches_root_without(w, v):
                continue
            parent[v], pedge[v] = w, eid
            # every earlier vertex must still avoid cycles: only cycles through v
            # can be created, and those were excluded above
            yield from rec(i + 1)
            del parent[v], pedge[v]

    yield from rec(0)


def tree_parents(g: SmallGraph, tree: Iterable[int]) -> dict:
    """Orient a tree (edge ids) towards the root: ``{vertex: (parent, eid)}``."""
    adj = defaultdict(list)
    for eid in tree:
        u, v = g.edges[eid]
        adj[u].append((eid, v))
        adj[v].append((eid, u))
    out = {}
    stack = [g.root]
    seen = {g.root}
    while stack:
        u = stack.pop()
        for eid, w in adj[u]:
            if w not in seen:
                seen.add(w)
                out[w] = (u, eid)
                stack.append(w)
    return out


def root_path(g: SmallGraph, tree, start) -> tuple:
    par = tree_parents(g, tree)
    path = [start]
    while path[-1] != g.root:
        path.append(par[path[-1]][0])
    return tuple(path)


def exact_lerw_law(g: SmallGraph, start) -> dict[tuple, Fraction]:
    """Law of the loop-erased walk from ``start`` to the root, as vertex paths."""
    if start == g.root:
        return {(start,): Fraction(1)}
    trees = enumerate_spanning_trees(g)
    c = Counter(root_path(g, t, start) for t in trees)
    total = len(trees)
    return {beta: Fraction(k, total) for beta, k in sorted(c.items(), key=lambda kv: kv[0])}


def lerw_path_probability(g: SmallGraph, beta: Sequence) -> Fraction:
    """Product formula: ``prod p(b_i, b_i+1) * prod G_{A_i}(b_i, b_i)`` with
    ``A_i`` the non-root vertices minus ``b_0..b_{i-1}``.  Independent of
    tree enumeration."""
    prob = Fraction(1)
    removed: list = []
    for i in range(len(beta) - 1):
        u, v = beta[i], beta[i + 1]
        prob *= g.transition(u).get(v, Fraction(0))
        prob *= exact_green(g, u, u, killed=removed)
        removed.append(u)
    return prob


def count_components_law(g: SmallGraph) -> dict[int, Fraction]:
    """Law of the number of USF components (= tree edges into the root).

    Weighting root edges by ``t`` turns the reduced Laplacian determinant
    into the generating polynomial of trees by root degree; it is recovered
    exactly from integer evaluations, so no enumeration is needed.
    """
    order, L = laplacian(g)
    k = len(order) - 1
    to_root = [int(-L[i, k]) for i in range(k)]
    vals = []
    for t in range(k + 1):
        m = [[int(L[i, j]) for j in range(k)] for i in range(k)]
        for i in range(k):
            m[i][i] += (t - 1) * to_root[i]
        vals.append(bareiss_det(m))
    coeffs = _interpolate(list(range(k + 1)), vals)
    total = sum(coeffs)
    return {j: Fraction(c, total) for j, c in enumerate(coeffs) if c}


def count_components_enum(g: SmallGraph) -> dict[int, Fraction]:
    """Same law by brute-force enumeration (small graphs only)."""
    trees = enumerate_spanning_trees(g)
    c = Counter()
    for t in trees:
        c[sum(1 for eid in t if g.root in g.edges[eid])] += 1
    return {j: Fraction(v, len(trees)) for j, v in sorted(c.items())}


def _interpolate(xs: list[int], ys: list[int]) -> list[int]:
    """Integer coefficients (low degree first) of the polynomial through the points."""
    n = len(xs)
    coeffs = [Fraction(0)] * n
    for i in range(n):
        basis = [Fraction(1)]
        denom = Fraction(1)
        for j in range(n):
            if j == i:
                continue
            basis = [Fraction(0)] + basis
            for a in range(len(basis) - 1):
                basis[a] -= xs[j] * basis[a + 1]
            denom *= xs[i] - xs[j]
        for a in range(n):
            coeffs[a] += ys[i] * basis[a] / denom
    if any(c.denominator != 1 for c in coeffs):
        raise ArithmeticError("non-integer tree counts")
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    return [int(c) for c in coeffs]


# -- hitting and Green ----------------------------------------------------------

def _system(g: SmallGraph, unknowns: list, exact: bool):
    pos = {v: i for i, v in enumerate(unknowns)}
    n = len(unknowns)
    one = Fraction(1) if exact else 1.0
    zero = Fraction(0) if exact else 0.0
    a = [[zero] * n for _ in range(n)]
    for v in unknowns:
        i = pos[v]
        a[i][i] = one
        for w, p in g.transition(v).items():
            if w in pos:
                a[i][pos[w]] -= p if exact else float(p)
    return pos, a


def _solve(a, b, exact):
    if exact:
        return solve_exact(a, b)
    sol = np.linalg.solve(np.array(a, dtype=float), np.array(b, dtype=float))
    resid = np.abs(np.array(a, dtype=float) @ sol - np.array(b, dtype=float)).max(initial=0.0)
    if resid > 1e-12:
        raise ArithmeticError(f"residual {resid:.2e} exceeds 1e-12")
    return list(sol)


def exact_hitting(g: SmallGraph, V: Iterable, start, exact: bool | None = None):
    """Probability that the walk from ``start`` visits ``V`` before the root
    (time 0 counts)."""
    V = set(V) - {g.root}
    if start in V:
        return Fraction(1)
    if not V or start == g.root:
        return Fraction(0)
    if exact is None:
        exact = len(g.nonroot) <= EXACT_SOLVE_CAP
    unknowns = [v for v in g.nonroot if v not in V]
    pos, a = _system(g, unknowns, exact)
    b = []
    for v in unknowns:
        b.append(sum((p if exact else float(p)) for w, p in g.transition(v).items() if w in V))
        if exact:
            b[-1] = Fraction(b[-1])
    sol = _solve(a, b, exact)
    return sol[pos[start]]


def exact_green(g: SmallGraph, x, y, killed: Iterable = (), exact: bool | None = None):
    """Expected visits to ``y`` from ``x`` before reaching the root or ``killed``."""
    dead = set(killed) | {g.root}
    if x in dead or y in dead:
        return Fraction(0)
    if exact is None:
        exact = len(g.nonroot) <= EXACT_SOLVE_CAP
    unknowns = [v for v in g.nonroot if v not in dead]
    pos, a = _system(g, unknowns, exact)
    # G(., y) solves (I - P) u = 1_y
    zero = Fraction(0) if exact else 0.0
    b = [zero] * len(unknowns)
    b[pos[y]] = Fraction(1) if exact else 1.0
    sol = _solve(a, b, exact)
    return sol[pos[x]]


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(float(p.get(k, 0)) - float(q.get(k, 0))) for k in keys)
