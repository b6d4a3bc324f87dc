"""Chebyshev-basis polynomial algebra tests.

Expected values for evaluation come from independent monomial-expansion
oracles (numpy.polynomial.chebyshev), never from the code under test.
"""

import numpy as np
import pytest
from numpy.polynomial import chebyshev as npcheb

from qlspoly.chebpoly import (ChebPoly, cheb_eval, chebyshev_points,
                              compose_square, divide_by_y, grid_supnorm,
                              parity_split, poly_from_values)


def as_monomial(p: ChebPoly):
    """Oracle-side evaluation through numpy's Chebyshev class."""
    ref = npcheb.Chebyshev(p.coeffs)
    return lambda y: ref(np.asarray(y) / p.gamma_ref)


class TestEval:
    def test_t2_at_half(self):
        p = ChebPoly([0, 0, 1])
        assert cheb_eval(p, 0.5) == pytest.approx(-0.5, abs=1e-12)

    def test_t4_at_one(self):
        p = ChebPoly([0, 0, 0, 0, 1])
        assert cheb_eval(p, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_t4_outside_interval(self):
        # monomial oracle: 8 y^4 - 8 y^2 + 1 at y = 1.2
        p = ChebPoly([0, 0, 0, 0, 1])
        assert cheb_eval(p, 1.2) == pytest.approx(6.0688, abs=1e-12)

    def test_matches_monomial_expansion(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            deg = int(rng.integers(0, 17))
            p = ChebPoly(rng.uniform(-1e3, 1e3, size=deg + 1))
            y = rng.uniform(-2.0, 2.0, size=40)
            np.testing.assert_allclose(cheb_eval(p, y), as_monomial(p)(y),
                                       rtol=1e-10, atol=1e-8)

    def test_scaled_reference_interval(self):
        p = ChebPoly([1.0, 2.0, -0.5], gamma_ref=2.0)
        y = np.linspace(-2, 2, 11)
        np.testing.assert_allclose(cheb_eval(p, y), as_monomial(p)(y),
                                   rtol=1e-12)

    def test_degree_ignores_trailing_zeros(self):
        assert ChebPoly([1.0, 2.0, 0.0, 0.0]).degree == 1
        assert ChebPoly([0.0]).degree == 0


class TestParitySplit:
    def test_simple(self):
        even, odd = parity_split(ChebPoly([1, 2, 3]))
        np.testing.assert_array_equal(even.coeffs, [1, 0, 3])
        np.testing.assert_array_equal(odd.coeffs, [0, 2, 0])

    def test_pure_odd(self):
        even, odd = parity_split(ChebPoly([0, 5]))
        np.testing.assert_array_equal(even.coeffs, [0, 0])
        np.testing.assert_array_equal(odd.coeffs, [0, 5])

    def test_sum_and_symmetry(self):
        rng = np.random.default_rng(11)
        p = ChebPoly(rng.standard_normal(9))
        even, odd = parity_split(p)
        y = rng.uniform(-1, 1, size=50)
        np.testing.assert_allclose(cheb_eval(p, y) + cheb_eval(p, -y),
                                   2 * cheb_eval(even, y), atol=1e-12)
        np.testing.assert_allclose(cheb_eval(even, y), cheb_eval(even, -y),
                                   atol=1e-13)
        np.testing.assert_allclose(cheb_eval(odd, y), -cheb_eval(odd, -y),
                                   atol=1e-13)

    def test_idempotent(self):
        p = ChebPoly(np.arange(1.0, 8.0))
        even, _ = parity_split(p)
        even2, odd2 = parity_split(even)
        np.testing.assert_array_equal(even.coeffs, even2.coeffs)
        assert not odd2.coeffs.any()


class TestGridSupnorm:
    def test_t1(self):
        s_even, s_odd = grid_supnorm(ChebPoly([0, 1]), 1)
        assert s_even == 0.0
        assert s_odd == pytest.approx(1.0)

    def test_t2(self):
        # oracle: max over the 9 grid points j/4 of |2 y^2 - 1| is 1
        s_even, s_odd = grid_supnorm(ChebPoly([0, 0, 1]), 2)
        assert s_even == pytest.approx(1.0)
        assert s_odd == 0.0

    def test_constant(self):
        s_even, s_odd = grid_supnorm(ChebPoly([-3.5]), 0)
        assert (s_even, s_odd) == (3.5, 0.0)

    def test_capacity_error(self):
        with pytest.raises(ValueError, match="grid capacity"):
            grid_supnorm(ChebPoly([0, 1]), 0)
        with pytest.raises(ValueError, match="grid capacity"):
            grid_supnorm(ChebPoly(np.ones(6)), 4)

    def test_lower_bounds_dense_supnorm(self):
        # 4/3 factor: true sup-norm within [s, (4/3) s] for deg <= n_cap
        rng = np.random.default_rng(23)
        dense = np.linspace(-1, 1, 10_001)
        for _ in range(100):
            deg = int(rng.integers(1, 13))
            p = ChebPoly(rng.standard_normal(deg + 1))
            even, odd = parity_split(p)
            s_even, s_odd = grid_supnorm(p, deg)
            true_even = np.abs(cheb_eval(even, dense)).max()
            true_odd = np.abs(cheb_eval(odd, dense)).max()
            assert s_even <= true_even + 1e-12
            assert true_even <= 4.0 / 3.0 * s_even + 1e-9
            assert s_odd <= true_odd + 1e-12
            assert true_odd <= 4.0 / 3.0 * s_odd + 1e-9


class TestInterpolation:
    def test_parabola(self):
        p = poly_from_values([-1.0, 0.0, 1.0], [1.0, 0.0, 1.0], 1.0)
        np.testing.assert_allclose(p.coeffs, [0.5, 0.0, 0.5], atol=1e-12)

    def test_constant(self):
        p = poly_from_values([0.0], [7.0], 1.0)
        np.testing.assert_allclose(p.coeffs, [7.0])

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        p = ChebPoly(rng.standard_normal(6))
        nodes = chebyshev_points(6)
        refit = poly_from_values(nodes, cheb_eval(p, nodes), 1.0)
        np.testing.assert_allclose(refit.coeffs, p.coeffs, atol=1e-9)

    def test_residual_at_nodes(self):
        rng = np.random.default_rng(5)
        nodes = np.sort(rng.uniform(-1, 1, size=12))
        values = rng.uniform(-10, 10, size=12)
        p = poly_from_values(nodes, values, 1.0)
        resid = np.abs(cheb_eval(p, nodes) - values).max()
        assert resid <= 1e-9 * np.abs(values).max()

    def test_duplicate_nodes_error(self):
        with pytest.raises(ValueError, match="singular"):
            poly_from_values([0.3, 0.3, 0.9], [1.0, 2.0, 3.0], 1.0)


class TestDivideByY:
    def test_parabola(self):
        q = divide_by_y(ChebPoly([0.5, 0.0, 0.5]))
        np.testing.assert_allclose(q.coeffs, [0.0, 1.0], atol=1e-12)

    def test_cubic(self):
        # oracle: (4y^3 - 6y)/y = 4y^2 - 6, i.e. T_3 - 3 T_1 -> 2 T_2 - 4 T_0
        q = divide_by_y(ChebPoly([0.0, -3.0, 0.0, 1.0]))
        np.testing.assert_allclose(q.coeffs, [-4.0, 0.0, 2.0], atol=1e-12)

    def test_constant_term_error(self):
        with pytest.raises(ValueError, match="constant term"):
            divide_by_y(ChebPoly([1.0]))

    def test_identity_many(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            deg = int(rng.integers(1, 14))
            c = rng.standard_normal(deg + 1)
            p = ChebPoly(c)
            c0 = float(cheb_eval(p, 0.0))
            c = c.copy()
            c[0] -= c0  # force p(0) = 0
            p = ChebPoly(c)
            q = divide_by_y(p)
            assert q.degree <= max(p.degree - 1, 0)
            y = rng.uniform(-1, 1, size=50)
            np.testing.assert_allclose(cheb_eval(q, y) * y, cheb_eval(p, y),
                                       atol=1e-10)


class TestComposeSquare:
    def test_linear(self):
        r = compose_square(ChebPoly([0.0, 1.0]))
        np.testing.assert_allclose(r.coeffs, [0.5, 0.0, 0.5], atol=1e-12)

    def test_affine(self):
        r = compose_square(ChebPoly([1.0, 1.0]))
        y = np.linspace(-1, 1, 21)
        np.testing.assert_allclose(cheb_eval(r, y), y**2 + 1.0, atol=1e-12)

    def test_random_degree4(self):
        rng = np.random.default_rng(31)
        p = ChebPoly(rng.standard_normal(5))
        r = compose_square(p)
        assert r.degree == 2 * p.degree
        y = rng.uniform(-1, 1, size=50)
        np.testing.assert_allclose(cheb_eval(r, y), cheb_eval(p, y**2),
                                   atol=1e-10)
        even, odd = parity_split(r)
        assert np.abs(odd.coeffs).max() < 1e-12

    def test_commutes_with_argument_squaring(self):
        rng = np.random.default_rng(37)
        p = ChebPoly(rng.standard_normal(7))
        r = compose_square(p)
        y = rng.uniform(-1, 1, size=30)
        np.testing.assert_allclose(cheb_eval(r, y), cheb_eval(r, -y),
                                   atol=1e-11)
        np.testing.assert_allclose(cheb_eval(r, 0.3), cheb_eval(p, 0.09),
                                   atol=1e-10)
