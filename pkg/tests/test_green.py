import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critlat.green import (EIGHT_OVER_PI2, DirichletSolver, GreenTable, SiteBudgetExceeded,
                           f_lambda, g2_dirichlet, g2_free, g2_free_quadrature, g2_hat,
                           g2_hat_surrogate, g2_tilde, green_asymptotic, green_constant,
                           green_dirichlet, green_free, green_free_array, green_free_mc,
                           lambda_constant, lattice_ball_count)
from critlat.lattice import EuclideanBall, ExplicitSet

O4 = np.zeros(4, np.int64)


def test_constant_in_four_dimensions():
    assert green_constant(4) == pytest.approx(2 / math.pi**2, rel=1e-15)


def test_value_at_origin():
    assert green_free(O4) == pytest.approx(1.2394671218, abs=1e-9)


def test_far_value_matches_expansion():
    x = np.array([20, 0, 0, 0])
    exact = green_free(x, tol=1e-14)
    assert exact == pytest.approx(2 / (math.pi**2 * 400), rel=5e-3)
    assert abs(exact - green_asymptotic(x)) < 1.5 * 20.0**-6


def test_recurrent_dimensions_rejected():
    with pytest.raises(ValueError):
        green_free(np.zeros(2, np.int64))


@given(st.lists(st.integers(-6, 6), min_size=4, max_size=4), st.permutations(range(4)),
       st.lists(st.sampled_from([-1, 1]), min_size=4, max_size=4))
@settings(max_examples=40)
def test_lattice_symmetry(x, perm, signs):
    x = np.array(x)
    y = (x * np.array(signs))[list(perm)]
    assert green_free(x) == pytest.approx(green_free(y), abs=1e-12)


def test_array_agrees_with_pointwise():
    pts = np.array([[0, 0, 0, 0], [1, 2, 0, 0], [3, 3, 3, 3], [14, 0, 0, 1]])
    ref = [green_free(p, tol=1e-12) for p in pts]
    got = green_free_array(pts)
    assert np.allclose(got[:3], ref[:3], atol=1e-10)
    # beyond r_exact the two-term expansion is accurate to about |x|^-6
    assert abs(got[3] - ref[3]) < 1.5 * 14.0**-6


def test_monte_carlo_agrees():
    est = green_free_mc(np.array([1, 0, 0, 0]), 200_000, seed=1)
    assert abs(est.value - green_free(np.array([1, 0, 0, 0]))) <= 3 * est.stderr


def test_single_site_region():
    assert green_dirichlet(ExplicitSet([(0, 0, 0, 0)]), O4, O4) == pytest.approx(1.0)
    assert green_dirichlet(ExplicitSet([(0, 0, 0, 0)]), O4, (1, 0, 0, 0)) == 0.0


def test_dirichlet_symmetry_and_residual():
    region = EuclideanBall(4, 4)
    s = DirichletSolver(region)
    x, y = (1, 2, 0, 0), (-3, 0, 1, 0)
    assert s.green(x, y) == pytest.approx(s.green(y, x), abs=1e-9)
    assert s.laplacian_residual(y) < 1e-9
    assert 0 < s.green(O4, O4) < green_free(O4)


@pytest.mark.parametrize("N", [3, 6])
def test_expected_exit_time(N):
    s = DirichletSolver(EuclideanBall(N, 4))
    total = s.column(O4).sum()
    assert N * N <= total <= (N + 1) ** 2


def test_green_monte_carlo_dirichlet():
    region = EuclideanBall(4, 4)
    est = green_dirichlet(region, O4, (1, 1, 0, 0), mode="mc", samples=100_000, seed=2)
    exact = green_dirichlet(region, O4, (1, 1, 0, 0))
    assert abs(est.value - exact) <= 3 * est.stderr


def test_g2_lower_bound():
    region = EuclideanBall(5, 4)
    x, y = O4, (2, 1, 0, 0)
    gxx = green_dirichlet(region, x, x)
    gxy = green_dirichlet(region, x, y)
    assert g2_dirichlet(region, x, y) >= gxx * gxy
    assert g2_tilde(region, x, y) >= g2_dirichlet(region, x, y)


def test_site_budget():
    with pytest.raises(SiteBudgetExceeded):
        DirichletSolver(EuclideanBall(6, 4), site_budget=100)


@pytest.mark.parametrize("y", [(0, 0, 0, 0, 0), (3, 0, 0, 0, 0), (2, 1, 1, 0, 0)])
def test_free_g2_five_dimensions(y):
    x = np.zeros(5, np.int64)
    assert g2_free(x, np.array(y)) == pytest.approx(g2_free_quadrature(np.array(y)), rel=1e-4)


def test_free_g2_rejects_four_dimensions():
    with pytest.raises(ValueError):
        g2_free(O4, O4)


def test_surrogate_values():
    assert g2_hat_surrogate(3, O4) == pytest.approx(3 * EIGHT_OVER_PI2)
    w = np.array([math.e, 0, 0, 0])
    assert g2_hat_surrogate(3, w) == pytest.approx(2 * EIGHT_OVER_PI2)


def test_g2_hat_decreases_outwards():
    vals = g2_hat(2, np.array([[0, 0, 0, 0], [1, 0, 0, 0], [3, 0, 0, 0], [5, 0, 0, 0]]))
    assert np.all(np.diff(vals) < 0) and vals[-1] > 0


def test_lambda_sequence():
    res = lambda_constant(40, 20)
    assert res.radii == [20, 40]
    assert res.value == pytest.approx(f_lambda(40))
    assert abs(res.f[1] - res.f[0]) < 0.01
    with pytest.raises(ValueError):
        lambda_constant(10)


def test_ball_counts():
    assert lattice_ball_count(1, 4) == 9
    assert lattice_ball_count(4, 4) == 89
    assert lattice_ball_count(16, 4) == len(EuclideanBall(4, 4))


def test_green_table(tmp_path):
    t = GreenTable("free", "quadrature", 1e-10)
    a, b = (0, 0, 0, 0), (1, 0, 0, 0)
    t.add(a, b, green_free(np.array(b)))
    t.add(b, a, green_free(np.array(b)))
    assert t.is_symmetric() and len(t) == 2 and t[a, b] > 0
    t.save(tmp_path)
    back = GreenTable.load(tmp_path, "free", "quadrature", 1e-10)
    assert back.entries == t.entries
    assert t.to_csv().splitlines()[0].count(",") >= 2
