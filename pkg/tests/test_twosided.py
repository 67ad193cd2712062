from fractions import Fraction

import numpy as np
import pytest

from critlat.oracle import SmallGraph
from critlat.twosided import (RejectionExhausted, SamplerStats, acceptance_rate, exact_marginal,
                              paths_csv, sample_many, sample_two_sided, stationarity_probe,
                              validate_marginal_tiny)


def test_exact_marginal_on_cycle():
    law, total = exact_marginal(SmallGraph.cycle(4), 2)
    assert total == Fraction(1, 4)
    assert law == {(2, 1, 0): Fraction(1, 2), (2, 3, 0): Fraction(1, 2)}


def test_exact_marginal_normalized():
    g = SmallGraph.wired_grid(2, 3)
    law, total = exact_marginal(g, 0)
    assert sum(law.values()) == 1 and 0 < total <= 1


def test_tiny_graph_sampler():
    chk = validate_marginal_tiny(SmallGraph.wired_grid(2, 3), 20_000, seed=1)
    assert chk.tv < 0.03
    assert abs(chk.rate_z) < 4
    with pytest.raises(ValueError):
        validate_marginal_tiny(SmallGraph.wired_grid(3, 3), 10)


def test_lattice_paths_deterministic_and_disjoint():
    a, sa = sample_many(3, 12, seed=2, workers=1)
    b, sb = sample_many(3, 12, seed=2, workers=3)
    assert sa == sb
    for p, q in zip(a, b):
        assert p.past == q.past and p.future == q.future
        assert p.disjoint()
        assert p.past.start == p.future.start == (0, 0, 0, 0)
    assert sample_two_sided(3, seed=2).past == a[0].past


def test_rate_and_validation():
    st = acceptance_rate(3, 500, seed=3)
    assert 0 < st.rate.value < 1 and st.attempted == 500
    assert np.isnan(SamplerStats(0, 0).rate.value)
    assert SamplerStats(1, 2).merge(SamplerStats(3, 4)) == SamplerStats(4, 6)
    with pytest.raises(ValueError):
        sample_many(1, 1)
    with pytest.raises(ValueError):
        stationarity_probe(2, 10)
    assert RejectionExhausted(SamplerStats(0, 9)).stats.attempted == 9


def test_paths_csv():
    paths, _ = sample_many(3, 2, seed=4)
    lines = paths_csv(paths, "h").splitlines()
    assert lines[:2] == ["#config_hash=h", "sample_id,side,index,x1,x2,x3,x4"]
    assert len(lines) == 2 + sum(len(p.past) + len(p.future) for p in paths)


def test_stationarity_probe_runs():
    out = stationarity_probe(3, 60, seed=5)
    assert 0 <= out["p_sides"] <= 1 and out["stats"].accepted == 60
