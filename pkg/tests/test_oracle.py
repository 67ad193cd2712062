from fractions import Fraction
from itertools import combinations

import pytest
from hypothesis import given, strategies as st

from critlat.oracle import (OracleSizeError, SmallGraph, bareiss_det, count_components_enum,
                            count_components_law, enumerate_spanning_trees, exact_green,
                            exact_hitting, exact_lerw_law, lerw_path_probability,
                            matrix_tree_count, total_variation)


def test_small_tree_counts():
    assert matrix_tree_count(SmallGraph.complete(4)) == 16
    assert matrix_tree_count(SmallGraph.cycle(4)) == 4
    assert matrix_tree_count(SmallGraph.path(4)) == 1
    assert len(enumerate_spanning_trees(SmallGraph.complete(4))) == 16


def test_grid_determinant_matches_enumeration():
    g = SmallGraph.wired_grid(3, 3)
    assert matrix_tree_count(g) == len(enumerate_spanning_trees(g)) == 100352


def test_bareiss_known_values():
    assert bareiss_det([[2, 1], [1, 2]]) == 3
    assert bareiss_det([[0, 1], [1, 0]]) == -1
    assert bareiss_det([[1, 2], [2, 4]]) == 0


@st.composite
def small_graphs(draw):
    n = draw(st.integers(2, 6))
    # a random spanning tree guarantees connectivity, extra edges on top
    edges = [(draw(st.integers(0, i - 1)), i) for i in range(1, n)]
    extra = draw(st.lists(st.sampled_from(list(combinations(range(n), 2))), max_size=6))
    return SmallGraph(list(range(n)), edges + extra, draw(st.integers(0, n - 1)))


@given(small_graphs())
def test_random_graphs_det_equals_enum(g):
    trees = enumerate_spanning_trees(g)
    assert len(trees) == matrix_tree_count(g)
    assert len(set(trees)) == len(trees)
    assert all(len(t) == len(g.vertices) - 1 for t in trees)


@given(small_graphs())
def test_component_law_two_ways(g):
    law = count_components_law(g)
    assert law == count_components_enum(g)
    assert sum(law.values()) == 1


@given(small_graphs())
def test_lerw_law_product_formula(g):
    for v in g.nonroot[:2]:
        law = exact_lerw_law(g, v)
        assert sum(law.values()) == 1
        for beta, p in law.items():
            assert beta[0] == v and beta[-1] == g.root
            assert lerw_path_probability(g, beta) == p


def test_gamblers_ruin():
    g = SmallGraph.path(4)
    assert exact_hitting(g, {4}, 1) == Fraction(1, 4)
    assert exact_hitting(g, {4}, 4) == 1
    assert exact_hitting(g, set(), 1) == 0


def test_path_lerw_is_deterministic():
    assert exact_lerw_law(SmallGraph.path(4), 4) == {(4, 3, 2, 1, 0): Fraction(1)}


def test_green_symmetry_on_regular_graph():
    g = SmallGraph.wired_grid(2, 3)
    for x, y in [(0, 5), (1, 3), (2, 4)]:
        assert exact_green(g, x, y) == exact_green(g, y, x)
    assert exact_green(g, 0, 0, killed=[0]) == 0
    assert exact_green(g, 0, 0) >= 1


def test_float_and_exact_agree():
    g = SmallGraph.wired_grid(2, 3)
    assert abs(float(exact_hitting(g, {5}, 0)) - exact_hitting(g, {5}, 0, exact=False)) < 1e-12
    assert abs(float(exact_green(g, 0, 3)) - exact_green(g, 0, 3, exact=False)) < 1e-12


def test_parse_roundtrip_and_errors():
    g = SmallGraph.complete(4)
    h = SmallGraph.parse(g.dumps())
    assert h.root == g.root and sorted(h.edges) == sorted(g.edges)
    with pytest.raises(ValueError):
        SmallGraph.parse("0 1\n")
    with pytest.raises(ValueError):
        SmallGraph([0, 1, 2], [(0, 1)], 0)
    with pytest.raises(ValueError):
        SmallGraph([0, 1], [(0, 0)], 0)


def test_size_cap():
    with pytest.raises(OracleSizeError):
        enumerate_spanning_trees(SmallGraph.wired_grid(4, 4))


def test_total_variation():
    assert total_variation({1: 0.5, 2: 0.5}, {1: 0.5, 2: 0.5}) == 0
    assert total_variation({1: 1.0}, {2: 1.0}) == 1
