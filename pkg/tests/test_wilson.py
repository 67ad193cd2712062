import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from critlat.oracle import SmallGraph, count_components_law, total_variation
from critlat.rng import SeedStream
from critlat.wilson import (WiredGraph, component_counts, same_component_prob, sample_trees,
                            tree_counts, usf_components, wilson_ust)


@given(st.integers(0, 2**32))
@settings(max_examples=30)
def test_forest_is_spanning_tree(seed):
    g = WiredGraph.ball(2.5, 4)
    f = wilson_ust(g, seed=seed)
    assert f.is_spanning_tree()
    assert usf_components(f).count == len(f.root_children())


def test_components_are_root_edges():
    g = WiredGraph.ball(2, 4)
    parents, _ = sample_trees(g, 200, seed=1)
    counts = component_counts(parents, g.n)
    assert counts.min() >= 1
    for i in range(20):
        f = wilson_ust(g, seed=SeedStream(1, (i,)))
        assert usf_components(f).count == component_counts(f.parent[None, :], g.n)[0]


def test_uniform_on_k4():
    sg = SmallGraph.complete(4)
    g = WiredGraph.from_small(sg)
    _, slots = sample_trees(g, 40_000, seed=2)
    c = tree_counts(g, slots)
    assert len(c) == 16
    assert stats.chisquare(list(c.values())).pvalue > 1e-3


def test_component_count_law_on_unit_ball():
    region_graph = SmallGraph.wired_grid(2, 3)
    g = WiredGraph.from_small(region_graph)
    parents, _ = sample_trees(g, 100_000, seed=3)
    emp = Counter(component_counts(parents, g.n).tolist())
    emp = {k: v / 1e5 for k, v in emp.items()}
    assert total_variation(count_components_law(region_graph), emp) < 0.01


def test_order_invariance():
    sg = SmallGraph.wired_grid(2, 3)
    g = WiredGraph.from_small(sg)
    order = np.arange(g.n)[::-1].copy()
    _, s1 = sample_trees(g, 60_000, seed=4)
    _, s2 = sample_trees(g, 60_000, seed=5, order=order)
    c1, c2 = tree_counts(g, s1), tree_counts(g, s2)
    keys = sorted(set(c1) | set(c2), key=sorted)
    table = np.array([[c1.get(k, 0) for k in keys], [c2.get(k, 0) for k in keys]])
    assert stats.chi2_contingency(table).pvalue > 1e-3


def test_order_validation():
    g = WiredGraph.ball(1, 2)
    with pytest.raises(ValueError):
        wilson_ust(g, order=[0, 0, 1, 2, 3])


def test_same_point_probability_one():
    assert same_component_prob(4, (0, 0, 0, 0), (0, 0, 0, 0), 10).value == 1.0


def test_walk_method_agrees_with_wilson():
    x, y = (0, 0, 0, 0), (2, 0, 0, 0)
    a = same_component_prob(3, x, y, 40_000, seed=6, method="wilson")
    b = same_component_prob(3, x, y, 40_000, seed=7, method="walks")
    assert abs(a.value - b.value) <= 3 * math.hypot(a.stderr, b.stderr)


def test_same_component_decreases_with_distance():
    x = (0, 0, 0, 0)
    vals = [same_component_prob(6, x, (k, 0, 0, 0), 40_000, seed=10 + k).value
            for k in (1, 2, 4)]
    assert vals[0] > vals[1] > vals[2]


def test_tree_deterministic_given_seed():
    g = WiredGraph.ball(3, 4)
    a = wilson_ust(g, seed=SeedStream(9, (3,)))
    b = wilson_ust(g, seed=SeedStream(9, (3,)))
    assert np.array_equal(a.parent, b.parent)
    p1, _ = sample_trees(g, 64, seed=9, workers=1)
    p2, _ = sample_trees(g, 64, seed=9, workers=4)
    assert np.array_equal(p1, p2)


def test_csv_outputs():
    g = WiredGraph.ball(1, 2)
    f = wilson_ust(g, seed=1)
    assert f.to_csv().startswith("vertex,parent\n")
    assert usf_components(f).to_csv().count("\n") == g.n + 1


def test_same_component_trend_at_n32():
    x = (0, 0, 0, 0)
    vals = [same_component_prob(32, x, (k, 0, 0, 0), 20_000, seed=20 + k) for k in (2, 4, 8)]
    for a, b in zip(vals, vals[1:]):
        assert a.value - b.value > 3 * math.hypot(a.stderr, b.stderr)


def test_neighbor_disagreement_scaling():
    e1 = (1, 0, 0, 0)
    d = {N: 1 - same_component_prob(N, (0, 0, 0, 0), e1, 40_000, seed=30 + N).value
         for N in (16, 32)}
    expected = (math.log(32) / math.log(16)) ** (-1 / 3)
    assert 0.5 <= (d[32] / d[16]) / expected <= 2
