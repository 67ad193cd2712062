import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from critlat.lattice import (Annulus, EuclideanBall, ExplicitSet, ShellBall, WholeLattice,
                             ball_points, direction_vectors, exp_r2_floor, neighbors, norm2,
                             origin, point, unit)

coords = st.lists(st.integers(-50, 50), min_size=2, max_size=6)


def test_neighbors_of_origin():
    nb = neighbors(origin(4))
    assert len(nb) == 8 and all(norm2(x) == 1 for x in nb)


def test_neighbors_of_e1():
    nb = neighbors(point(1, 0, 0, 0))
    assert (0, 0, 0, 0) in nb and (2, 0, 0, 0) in nb


@given(coords)
def test_neighbor_symmetry(x):
    for y in neighbors(x):
        assert tuple(x) in neighbors(y)


def test_canonical_direction_order():
    assert direction_vectors(2).tolist() == [[1, 0], [-1, 0], [0, 1], [0, -1]]
    assert neighbors((0, 0)) == [(1, 0), (-1, 0), (0, 1), (0, -1)]


def test_unit_ball():
    A1 = EuclideanBall(1, 4)
    assert len(A1) == 9
    assert all(norm2(p) <= 1 for p in A1.interior())


def test_c0_is_origin_with_unit_boundary():
    C0 = ShellBall(0, 4)
    assert C0.interior().tolist() == [[0, 0, 0, 0]]
    b = {tuple(p) for p in C0.boundary()}
    assert b == {unit(i, 4, s) for i in range(4) for s in (1, -1)}


def test_ball_count_matches_box_scan():
    N = 10
    rng = range(-N, N + 1)
    brute = sum(1 for x in itertools.product(rng, repeat=4) if sum(c * c for c in x) <= N * N)
    assert len(EuclideanBall(N, 4)) == brute


@given(st.integers(0, 40), st.integers(2, 4))
def test_ball_points_exact(r2, d):
    pts = ball_points(r2, d)
    R = int(np.sqrt(r2))
    brute = [x for x in itertools.product(range(-R, R + 1), repeat=d) if sum(c * c for c in x) <= r2]
    assert sorted(map(tuple, pts.tolist())) == sorted(brute)


@pytest.mark.parametrize("region", [EuclideanBall(3, 3), ShellBall(1.2, 4), Annulus(1, 2, 3),
                                    ExplicitSet([(0, 0), (1, 0), (1, 1)])])
def test_boundary_disjoint_and_adjacent(region):
    inner = {tuple(p) for p in region.interior()}
    for b in region.boundary():
        b = tuple(int(c) for c in b)
        assert b not in inner
        assert any(y in inner for y in neighbors(b))


def test_exp_r2_floor_is_strict():
    # e^(2n) is never an integer for n > 0, and the floor is the last r2 inside C_n
    for n in range(1, 8):
        k = exp_r2_floor(n)
        assert k < np.exp(2 * n) <= k + 1


def test_whole_lattice():
    Z = WholeLattice(4)
    assert Z.contains((10**6, 0, 0, 0)) and not Z.finite
    with pytest.raises(ValueError):
        Z.interior()


def test_bad_dimension():
    with pytest.raises(ValueError):
        origin(1)
    with pytest.raises(ValueError):
        Annulus(2, 1)
