import math

import numpy as np
import pytest

from critlat.green import DirichletSolver, green_free_array
from critlat.lattice import EuclideanBall, ShellBall, ball_points, exp_r2_floor
from critlat.estimate import Estimate
from critlat.lerw_stats import (NestedConfig, a_n_from_bn, capacity_estimate, escape_prob,
                                estimate_pn, gamma_n, green_killed_origin, hitting_prob,
                                estimate_bn, inner_variance_check, same_component_fit,
                                loop_free_gap_diagnostic, mean_Zn,
                                niceset_check, phi_n, results_csv, sample_zn)
from critlat.paths import Occupancy

O4 = (0, 0, 0, 0)


def test_hitting_trivial_cases():
    guard = EuclideanBall(6, 4)
    assert hitting_prob(Occupancy.empty(4), O4, guard, 100).value == 0.0
    assert hitting_prob([O4], O4, guard, 100).value == 1.0
    with pytest.raises(ValueError):
        hitting_prob([(9, 0, 0, 0)], O4, guard, 100)


def test_hitting_single_point_matches_green_ratio():
    guard = EuclideanBall(6, 4)
    s = DirichletSolver(guard)
    z = (2, 0, 0, 0)
    exact = s.green(O4, z) / s.green(z, z)
    h = hitting_prob([z], O4, guard, 100_000, seed=1)
    assert abs(h.value - exact) <= 3 * h.stderr
    es = escape_prob([z], O4, guard, 100_000, seed=1)
    assert es.value == pytest.approx(1 - h.value)


def test_gamma_n_shape():
    g = gamma_n(3, seed=2)
    r2 = g.r2
    assert O4 not in Occupancy(g)
    assert r2[-1] > exp_r2_floor(3) >= r2[:-1].max()
    assert len(set(g.tuples())) == len(g)


def test_green_killed_clamp():
    guard = EuclideanBall(5, 4)
    nbrs = [tuple(int(c) for c in v) for v in np.vstack([np.eye(4, dtype=int), -np.eye(4, dtype=int)])]
    assert green_killed_origin(nbrs, guard, 1000, seed=3).value == 1.0
    free = green_killed_origin([], guard, 100_000, seed=4)
    exact = DirichletSolver(guard).green(O4, O4)
    assert abs(free.value - exact) <= 3 * free.stderr
    with pytest.raises(ValueError):
        green_killed_origin([O4], guard, 10)


def test_zn_batch_ranges_and_determinism():
    cfg = NestedConfig(outer=40, inner=20)
    a = sample_zn(2, cfg, seed=5, workers=1)
    b = sample_zn(2, cfg, seed=5, workers=3)
    assert np.array_equal(a.z, b.z) and np.array_equal(a.u3, b.u3)
    assert np.all((a.z >= 0) & (a.z <= 1))
    assert np.all((a.g >= 1) & (a.g <= 8))
    assert a.pn(0).value == 1.0 and estimate_pn(2, 0, cfg).value == 1.0


def test_mean_escape_decreases():
    cfg = NestedConfig(outer=400, inner=50)
    z2, z3 = mean_Zn(2, cfg, seed=6), mean_Zn(3, cfg, seed=7)
    assert z2.value - z3.value > 3 * math.hypot(z2.stderr, z3.stderr)
    with pytest.raises(ValueError):
        mean_Zn(2, cfg, convention="bogus")


def test_nested_config_validation():
    assert NestedConfig(outer=100).inner == 640
    with pytest.raises(ValueError):
        NestedConfig(outer=0)
    with pytest.raises(ValueError):
        NestedConfig(horizon="forever")
    with pytest.raises(ValueError):
        NestedConfig(delta=0)


def test_capacity_of_a_point():
    shell = ball_points(35, 4, 25)
    r2 = (shell**2).sum(axis=1)
    ref = np.mean(r2 * green_free_array(shell)) / green_free_array(np.zeros((1, 4), int))[0]
    fit = capacity_estimate([O4], [5], 200_000, seed=8)
    assert abs(fit.value.value - ref) <= 3 * fit.value.stderr
    assert capacity_estimate([], [5], 10).value.value == 0.0
    with pytest.raises(ValueError):
        capacity_estimate([(6, 0, 0, 0)], [5], 10)


def test_niceset_path_passes_and_solid_shell_fails():
    assert niceset_check(gamma_n(4, seed=9), 4, 2000, seed=10).passed
    shell = ball_points(exp_r2_floor(3), 4, exp_r2_floor(2) + 1)
    res = niceset_check(shell, 4, 500, seed=11)
    assert not res.passed and 3 in res.failing


def test_gap_diagnostic():
    est = loop_free_gap_diagnostic(100, 2000, seed=12)
    assert 0 <= est.value <= 1
    with pytest.raises(ValueError):
        loop_free_gap_diagnostic(100, 10, delta_frac=0)


def test_inner_variance_halves():
    v1, v2 = inner_variance_check(3, 20, 20, seed=13)
    assert v2 < v1


def test_phi_is_product():
    phi, hs = phi_n(2, 2000, seed=14)
    assert phi.value == pytest.approx(math.exp(-sum(h.value for h in hs)))


def test_a_n_from_bn():
    assert a_n_from_bn(Estimate(math.pi**2 / 8, 0.01, 10)).value == pytest.approx(1.0)


def test_results_csv():
    text = results_csv([{"n": 4, "estimator": "pn", "value": 0.5, "stderr": 0.1, "outer": 10,
                         "inner": 5, "seed": "0"}], "h")
    assert text.splitlines() == ["#config_hash=h", "n,estimator,value,stderr,outer,inner,seed",
                                 "4,pn,0.5,0.1,10,5,0"]


def test_same_component_slope():
    fit = same_component_fit(seed=15)
    assert -1.2 <= fit.slope <= -0.8


def test_bn_and_derived_scaling():
    b = estimate_bn(3, NestedConfig(outer=200, inner_u=2), seed=16)
    assert 0 < b.value < 1
    a = a_n_from_bn(b)
    assert a.value == pytest.approx(math.sqrt(math.pi**2 / (8 * b.value)))
