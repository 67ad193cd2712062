import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critlat.field import (TestFunction, bump_diff, covariance_quadrature, cutoff_N,
                           moment_experiment, moments, moments_json, pair, pairings,
                           pairings_csv, sample_spin_field, scaling_a_n)


def test_scaling_examples():
    assert scaling_a_n(math.e) == pytest.approx(math.sqrt(3))
    assert scaling_a_n(1000) == pytest.approx(4.552, abs=5e-4)
    assert scaling_a_n(100, d=6) == pytest.approx(100.0)
    assert scaling_a_n(4, d=5, a=2) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        scaling_a_n(10, d=3)
    with pytest.raises(ValueError):
        scaling_a_n(1.5)


def test_cutoff_examples():
    assert cutoff_N(2) == 2
    # 100 * log(100)^(1/4) = 146.49
    assert cutoff_N(100) == 146
    with pytest.raises(ValueError):
        cutoff_N(1)


@given(st.floats(2, 1e4), st.floats(0, 1e3))
def test_cutoff_monotone(n, dn):
    assert cutoff_N(n + dn) >= cutoff_N(n)
    if n >= 3:
        assert cutoff_N(n) >= n


def test_spin_field_structure():
    f = sample_spin_field(3, seed=1)
    assert set(np.unique(f.values)) <= {-1, 1}
    assert f.constant_on_components()
    assert f.at(np.array([[100, 0, 0, 0]]))[0] == 0
    assert f.at(np.zeros((1, 4), np.int64))[0] in (-1, 1)


def test_pairing_linearity():
    f = sample_spin_field(4, seed=2)
    h = bump_diff()
    g = bump_diff(radius=0.5, offset=0.4).translated([0, 0.2, 0, 0])
    assert pair(h + g, f).value == pytest.approx(pair(h, f).value + pair(g, f).value, abs=1e-12)
    assert pair(2.5 * h, f).value == pytest.approx(2.5 * pair(h, f).value, abs=1e-12)
    assert pair(TestFunction(()), f).value == 0.0


def test_batch_matches_single_fields():
    h = bump_diff()
    vals = pairings([h], 3, 6, seed=3)[:, 0]
    single = [pair(h, sample_spin_field(3, seed=3, index=i)).value for i in range(6)]
    assert np.allclose(vals, single, atol=1e-12)


def test_start_offset_resumes():
    hs = [bump_diff()]
    whole = pairings(hs, 3, 10, seed=4)
    tail = pairings(hs, 3, 5, seed=4, start=5)
    assert np.array_equal(whole[5:], tail)
    assert np.array_equal(pairings(hs, 3, 10, seed=4, workers=1),
                          pairings(hs, 3, 10, seed=4, workers=3))


def test_quadrature_properties():
    h = bump_diff()
    v = covariance_quadrature(h)
    assert v > 0
    assert covariance_quadrature(h.translated([0.3, -0.2, 0.1, 0])) == pytest.approx(v, rel=1e-4)
    # mean-zero functions make the log kernel scale invariant
    assert covariance_quadrature(h.scaled(2.0)) == pytest.approx(v, rel=1e-4)
    assert covariance_quadrature(2 * h) == pytest.approx(4 * v, rel=1e-6)


def test_quadrature_requires_mean_zero_in_four_dimensions():
    from critlat.field import Bump
    with pytest.raises(ValueError):
        covariance_quadrature(TestFunction((Bump(1.0, (0, 0, 0, 0), 0.5),)))


def test_moments_on_gaussian_sample():
    x = np.random.default_rng(0).normal(size=20_000)
    m = moments(x)
    assert abs(m.mean.value) < 3 * m.mean.stderr + 1e-12
    assert abs(m.var.value - 1) < 3 * m.var.stderr
    assert abs(m.kurtosis_ratio.value - 1) < 3 * m.kurtosis_ratio.stderr
    assert '"kurtosis_ratio"' in moments_json(m)


def test_moment_experiment_small():
    m = moment_experiment(bump_diff(), 3, 200, seed=5)
    assert m.values.shape == (200,) and m.var.value > 0
    with pytest.raises(ValueError):
        moment_experiment(bump_diff(), 3, 10)


def test_pairings_csv():
    text = pairings_csv(np.array([0.5, -1.0]), "abc")
    assert text.splitlines() == ["#config_hash=abc", "sample_id,pairing_value", "0,0.5", "1,-1.0"]
