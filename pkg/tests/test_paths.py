import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from critlat.lattice import EuclideanBall, ExplicitSet, direction_vectors
from critlat.oracle import SmallGraph, exact_hitting, exact_lerw_law, total_variation
from critlat.paths import (Occupancy, Saw, Walk, check_window_property, first_intersection,
                           loop_erase, loop_free_times, shell_stopping_times, srw_fixed_steps,
                           srw_until_exit, walk_to_shell)
from critlat.rng import SeedStream

E1, E2 = (1, 0, 0, 0), (0, 1, 0, 0)
O4 = (0, 0, 0, 0)


@st.composite
def walks(draw, max_len=80):
    d = draw(st.integers(2, 4))
    codes = draw(st.lists(st.integers(0, 2 * d - 1), max_size=max_len))
    steps = direction_vectors(d)[codes] if codes else np.zeros((0, d), np.int64)
    sites = np.vstack([np.zeros((1, d), np.int64), np.cumsum(steps, axis=0)])
    return Walk(sites)


def test_loop_erase_example():
    assert loop_erase(Walk([O4, E1, O4, E2])).tuples() == [O4, E2]


def test_self_avoiding_unchanged():
    w = Walk([O4, E1, (1, 1, 0, 0), (1, 1, 1, 0)])
    assert loop_erase(w) == w


@given(walks())
def test_loop_erase_properties(w):
    le = loop_erase(w)
    s = le.tuples()
    assert len(set(s)) == len(s) <= len(w)
    assert le.start == w.start and le.end == w.end
    assert loop_erase(le) == le
    Saw(le.sites)  # validates distinctness and adjacency


@given(walks(max_len=40))
def test_window_property_sampled(w):
    assert check_window_property(w)


@given(walks())
def test_loop_free_times_definition(w):
    lf = set(loop_free_times(w))
    t = w.tuples()
    for j in range(len(t)):
        assert (j in lf) == set(t[: j + 1]).isdisjoint(t[j + 1:])


def test_loop_free_times_examples():
    lf = loop_free_times(Walk([O4, E1, O4, E2]))
    assert 0 not in lf and 2 in lf
    saw = Walk([O4, E1, (1, 1, 0, 0)])
    assert loop_free_times(saw) == [0, 1, 2]


@given(walks())
def test_serialization_roundtrip(w):
    assert Walk.from_bytes(w.to_bytes()) == w
    assert Walk.from_csv(w.to_csv()) == w


def test_walk_rejects_jumps():
    with pytest.raises(ValueError):
        Walk([(0, 0), (2, 0)])
    with pytest.raises(ValueError):
        Saw([(0, 0), (1, 0), (0, 0)])


def test_start_on_boundary_gives_single_site():
    w = srw_until_exit((2, 0, 0, 0), EuclideanBall(1, 4), SeedStream(1))
    assert len(w) == 1


def test_exit_time_from_ball():
    # |S_t|^2 - t is a martingale, so E[tau] = E|S_tau|^2 lies in (N^2, (N+1)^2]
    N, m = 10, 3000
    root = SeedStream(2)
    taus = np.array([len(srw_until_exit(O4, EuclideanBall(N, 4), root.child(i))) - 1
                     for i in range(m)])
    se = taus.std(ddof=1) / math.sqrt(m)
    assert N * N - 3 * se <= taus.mean() <= (N + 1) ** 2 + 3 * se


def _harmonic_measure(region):
    pts = [tuple(map(int, p)) for p in region.interior()]
    idx = {p: i for i, p in enumerate(pts)}
    bnd = [tuple(map(int, b)) for b in region.boundary()]
    bidx = {b: i for i, b in enumerate(bnd)}
    n, d = len(pts), region.d
    A = np.eye(n)
    B = np.zeros((n, len(bnd)))
    for i, p in enumerate(pts):
        for e in direction_vectors(d):
            q = tuple(int(a + b) for a, b in zip(p, e))
            if q in idx:
                A[i, idx[q]] -= 1 / (2 * d)
            else:
                B[i, bidx[q]] += 1 / (2 * d)
    H = np.linalg.solve(A, B)
    return {b: H[idx[(0,) * d], j] for j, b in enumerate(bnd)}


def test_exit_distribution_matches_harmonic_measure():
    region = EuclideanBall(2, 4)
    exact = _harmonic_measure(region)
    m = 300_000
    root = SeedStream(3)
    c = Counter(srw_until_exit(O4, region, root.child(i)).end for i in range(m))
    assert total_variation(exact, {k: v / m for k, v in c.items()}) < 0.02


def test_fixed_steps_zero_and_one():
    assert srw_fixed_steps(O4, 0, 1).tuples() == [O4]
    root = SeedStream(4)
    m = 100_000
    c = Counter(srw_fixed_steps(O4, 1, root.child(i)).end for i in range(m))
    assert len(c) == 8
    assert stats.chisquare(list(c.values())).pvalue > 1e-3


def test_fixed_steps_second_moment():
    root = SeedStream(5)
    m = 100_000
    r2 = np.array([srw_fixed_steps(O4, 100, root.child(i)).r2[-1] for i in range(m)])
    se = r2.std(ddof=1) / math.sqrt(m)
    assert abs(r2.mean() - 100) <= 3 * se


def _square():
    sites = [(0, 0), (1, 0), (0, 1), (1, 1)]
    region = ExplicitSet(sites)
    g = SmallGraph.from_region(region)
    return region, g, {s: v for v, s in g.embedding.items()}


def _le_law(region, g, label, m, seed, reverse=False):
    root = SeedStream(seed)
    c = Counter()
    for i in range(m):
        w = srw_until_exit(g.embedding[0], region, root.child(i))
        le = loop_erase(w.reversed()).reversed() if reverse else loop_erase(w)
        c[tuple(label.get(x, g.root) for x in le.tuples())] += 1
    return {k: v / m for k, v in c.items()}


def test_loop_erased_law_on_five_vertex_graph():
    region, g, label = _square()
    assert len(g.vertices) == 5
    exact = exact_lerw_law(g, 0)
    assert total_variation(exact, _le_law(region, g, label, 200_000, 6)) < 0.02


def test_reverse_loop_erasure_has_same_law():
    region, g, label = _square()
    exact = exact_lerw_law(g, 0)
    assert total_variation(exact, _le_law(region, g, label, 100_000, 7, reverse=True)) < 0.02


def test_first_intersection_basic():
    w = Walk([O4, E1, E2 and (1, 1, 0, 0)])
    assert first_intersection(w, Occupancy.empty(4)) is None
    assert first_intersection(w, Occupancy([O4])) == 0
    assert first_intersection(w, Occupancy([O4]), skip_first=True) is None
    assert first_intersection(w, Occupancy([(1, 1, 0, 0)])) == 2


def test_first_intersection_hitting_estimator():
    sites = [(i, j) for i in range(2) for j in range(3)]
    region = ExplicitSet(sites)
    g = SmallGraph.from_region(region)
    label = {s: v for v, s in g.embedding.items()}
    target = (1, 2)
    exact = float(exact_hitting(g, {label[target]}, 0))
    occ = Occupancy([target])
    root = SeedStream(8)
    m = 40_000
    hits = np.array([first_intersection(srw_until_exit((0, 0), region, root.child(i)), occ)
                     is not None for i in range(m)], dtype=float)
    se = hits.std(ddof=1) / math.sqrt(m)
    assert abs(hits.mean() - exact) <= 3 * se


def test_shell_stopping_times_examples():
    assert shell_stopping_times(Walk([O4, E1]), 0)[0] == 1
    w = walk_to_shell(4, SeedStream(9))
    st_ = shell_stopping_times(w, 4)
    sig = st_.sigma
    assert all(a < b for a, b in zip(sig, sig[1:]))
    for n, s in enumerate(sig):
        r = math.sqrt(w.r2[s])
        assert math.exp(n) <= r < math.exp(n) + 1


@pytest.mark.parametrize("n", [3, 4])
def test_median_exit_time_scale(n):
    root = SeedStream(10 + n)
    s = [len(walk_to_shell(n, root.child(i))) - 1 for i in range(400)]
    ratio = np.median(s) / math.exp(2 * n)
    L = math.log(n)
    assert L**-2 <= ratio <= L**2


def test_no_loop_free_fraction_decreases():
    # walks of length 4n stand in for the infinite future of the window [n, 2n]
    fr = []
    for k, n in enumerate((2**6, 2**8, 2**10)):
        root = SeedStream(20 + k)
        miss = 0
        m = 3000
        for i in range(m):
            lf = np.array(loop_free_times(srw_fixed_steps(O4, 4 * n, root.child(i))))
            miss += not np.any((lf >= n) & (lf <= 2 * n))
        fr.append(miss / m)
    assert fr[0] > fr[1] > fr[2]


def test_occupancy_queries():
    occ = Occupancy(Walk([O4, E1, O4, E2]))
    assert occ.index(O4) == 0 and occ.index(E2) == 3 and (5, 5, 5, 5) not in occ
    assert len(occ) == 3 and occ.max_r2 == 1
    assert len(occ.union(Occupancy([(3, 0, 0, 0)]))) == 4
