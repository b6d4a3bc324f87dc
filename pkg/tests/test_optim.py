"""QP and BFGS solver tests with independent optimality certificates."""

import numpy as np
import pytest

from qlspoly.optim import (OptimError, QpProblem, bfgs_minimize, kkt_check,
                           solve_qp)


def random_ball_qp(rng, dim=5, n_cons=12, radius=1.5):
    """QP whose feasible set contains a known ball, so random feasible
    points are easy to draw."""
    a = rng.standard_normal((dim, dim))
    hess = a @ a.T + 0.5 * np.eye(dim)
    lin = rng.standard_normal(dim) * 2.0
    center = rng.standard_normal(dim)
    rows = rng.standard_normal((n_cons, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    bounds = rows @ center + radius
    return QpProblem(hess, lin, rows, bounds), center, radius


class TestSolveQp:
    def test_projection_onto_halfspace(self):
        q = QpProblem(np.eye(2), np.zeros(2), np.array([[-1.0, 0.0]]),
                      np.array([-1.0]))
        z = solve_qp(q, 1e-10)
        np.testing.assert_allclose(z, [1.0, 0.0], atol=1e-8)

    def test_unconstrained(self):
        # oracle: solve H z = -g by hand, z = (1, 2)
        q = QpProblem(2.0 * np.eye(2), np.array([-2.0, -4.0]),
                      np.zeros((0, 2)), np.zeros(0))
        z = solve_qp(q, 1e-10)
        np.testing.assert_allclose(z, [1.0, 2.0], atol=1e-9)

    def test_kkt_conditions_hold(self):
        rng = np.random.default_rng(42)
        for _ in range(30):
            q, _, _ = random_ball_qp(rng)
            z = solve_qp(q, 1e-9)
            report = kkt_check(q, z, 1e-6)
            assert report["ok"], report

    def test_beats_random_feasible_points(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            q, center, radius = random_ball_qp(rng)
            z = solve_qp(q, 1e-9)
            best = q.objective(z)
            dirs = rng.standard_normal((1000, 5))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            pts = center + dirs * (radius * rng.random((1000, 1)))
            vals = 0.5 * np.einsum("ij,jk,ik->i", pts, q.hess, pts) + pts @ q.lin
            assert best <= vals.min() + 1e-8

    def test_singular_hessian_flat_direction(self):
        # curvature only along z0 + z1, like the gamma block of the
        # constrained fits; constraints pin the flat direction
        hess = np.array([[1.0, 1.0], [1.0, 1.0]])
        cons = np.array([[-1.0, 0.0], [0.0, -1.0]])
        q = QpProblem(hess, np.array([1.0, 1.0]), cons, np.zeros(2))
        z = solve_qp(q, 1e-9)
        np.testing.assert_allclose(z, [0.0, 0.0], atol=1e-7)

    def test_duplicate_constraint_rows(self):
        rows = np.array([[-1.0, 0.0], [-1.0, 0.0], [0.0, -1.0]])
        q = QpProblem(np.eye(2), np.array([2.0, 2.0]), rows,
                      np.array([-1.0, -1.0, 0.0]))
        z = solve_qp(q, 1e-9)
        np.testing.assert_allclose(z, [1.0, 0.0], atol=1e-7)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            QpProblem(np.eye(3), np.zeros(2), np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(ValueError):
            QpProblem(np.array([[0.0, 1.0], [0.5, 0.0]]), np.zeros(2),
                      np.zeros((0, 2)), np.zeros(0))


class TestKktChecker:
    def test_rejects_suboptimal_point(self):
        q = QpProblem(np.eye(2), np.zeros(2), np.array([[-1.0, 0.0]]),
                      np.array([-1.0]))
        bad = np.array([2.0, 0.5])  # feasible but not stationary
        assert not kkt_check(q, bad, 1e-6)["ok"]

    def test_rejects_infeasible_point(self):
        q = QpProblem(np.eye(2), np.zeros(2), np.array([[-1.0, 0.0]]),
                      np.array([-1.0]))
        assert not kkt_check(q, np.zeros(2), 1e-6)["ok"]


class TestBfgs:
    def test_shifted_quadratic(self):
        c = np.array([3.0, -1.0])

        def fg(x):
            return float(np.sum((x - c) ** 2)), 2.0 * (x - c)

        x = bfgs_minimize(fg, np.zeros(2), tol=1e-10)
        np.testing.assert_allclose(x, c, atol=1e-7)

    def test_one_dim_exponential_dual(self):
        # D(q) = e^q - q on [0, 1] with unit mass: stationarity e^q = 1
        def fg(q):
            return float(np.exp(q[0]) - q[0]), np.array([np.exp(q[0]) - 1.0])

        x = bfgs_minimize(fg, np.array([0.7]), tol=1e-10)
        assert x[0] == pytest.approx(0.0, abs=1e-7)

    def test_ill_conditioned_quadratic(self):
        h = np.diag([1.0, 100.0])
        calls = {"n": 0}

        def fg(x):
            calls["n"] += 1
            return float(0.5 * x @ h @ x), h @ x

        x = bfgs_minimize(fg, np.array([5.0, 5.0]), tol=1e-8)
        assert np.abs(x).max() < 1e-6
        assert calls["n"] <= 200

    def test_monotone_decrease(self):
        rng = np.random.default_rng(12)
        a = rng.standard_normal((6, 6))
        h = a @ a.T + np.eye(6)
        values = []

        def fg(x):
            values.append(float(0.5 * x @ h @ x))
            return values[-1], h @ x

        bfgs_minimize(fg, rng.standard_normal(6), tol=1e-9)
        accepted = np.minimum.accumulate(values)
        # accepted iterates never increase (line search evaluations may)
        assert accepted[-1] <= accepted[0]

    def test_iteration_cap_error(self):
        def fg(x):
            return float(x[0]), np.array([1.0])  # linear, unbounded below

        with pytest.raises(OptimError) as err:
            bfgs_minimize(fg, np.zeros(1), tol=1e-12, max_iter=5)
        assert err.value.best_x is not None
