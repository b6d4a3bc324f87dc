"""Small dense optimizers: an inequality-constrained convex QP and BFGS.

The QP solver is a dual active-set method: it starts from the unconstrained
minimizer and repairs violated constraints one at a time, keeping the working
set dual-feasible. That sidesteps any phase-1 search for a feasible start and
terminates finitely for positive definite Hessians. Problems here are tiny
(tens of variables, a few hundred constraints), so every step re-solves a
dense KKT system from scratch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls


class OptimError(RuntimeError):
    """Solver failure carrying the best iterate found so far."""

    def __init__(self, message, best_x=None, residual=None):
        super().__init__(message)
        self.best_x = best_x
        self.residual = residual


@dataclass(frozen=True)
class QpProblem:
    """min_z 0.5 z'Hz + g'z  subject to  C z <= u."""

    hess: np.ndarray
    lin: np.ndarray
    cons: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.hess, dtype=float)
        g = np.asarray(self.lin, dtype=float)
        c = np.asarray(self.cons, dtype=float)
        u = np.asarray(self.bounds, dtype=float)
        if h.shape != (g.size, g.size):
            raise ValueError("hessian shape does not match linear term")
        if np.max(np.abs(h - h.T)) > 1e-12 * max(1.0, np.abs(h).max()):
            raise ValueError("hessian must be symmetric")
        if c.size == 0:
            c = np.zeros((0, g.size))
            u = np.zeros(0)
        if c.shape != (u.size, g.size):
            raise ValueError("constraint shape does not match bounds")
        for name, arr in (("hess", h), ("lin", g), ("cons", c), ("bounds", u)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.hess @ z + self.lin @ z)


def _regularized(h: np.ndarray) -> np.ndarray:
    # tiny Tikhonov shift so that directions the objective is flat in
    # (the gamma variables enter only through their sum) stay invertible
    dim = h.shape[0]
    shift = 1e-10 * max(np.trace(h), dim) / dim
    return h + shift * np.eye(dim)


def _kkt_solve(h, c_w, rhs_top):
    """Solve [[H, C_w'], [C_w, 0]] [dz; dl] = [rhs_top; 0]."""
    w = c_w.shape[0]
    dim = h.shape[0]
    kkt = np.zeros((dim + w, dim + w))
    kkt[:dim, :dim] = h
    kkt[:dim, dim:] = c_w.T
    kkt[dim:, :dim] = c_w
    rhs = np.concatenate([rhs_top, np.zeros(w)])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:dim], sol[dim:]


def solve_qp(problem: QpProblem, tol: float = 1e-8, max_iter: int = 10_000) -> np.ndarray:
    """Solve the QP to KKT residual `tol`; raises OptimError at the
    iteration cap with the best iterate attached."""
    h = _regularized(problem.hess)
    g = problem.lin
    cons, u = problem.cons, problem.bounds
    n_cons = cons.shape[0]

    z = np.linalg.solve(h, -g)
    work: list[int] = []
    lam = np.zeros(0)
    feas_tol = tol * (1.0 + (np.abs(u).max() if u.size else 0.0))

    for _ in range(max_iter):
        viol = cons @ z - u if n_cons else np.zeros(0)
        if not n_cons or viol.max() <= feas_tol:
            return _polish(problem, h, z, work, feas_tol)
        p = int(np.argmax(viol))
        lam_p = 0.0
        # inner loop: drive constraint p to feasibility, dropping working-set
        # constraints whose multipliers would go negative
        for _ in range(max_iter):
            c_w = cons[work] if work else np.zeros((0, len(z)))
            dz, dlam = _kkt_solve(h, c_w, -cons[p])
            slope = cons[p] @ dz
            t_full = np.inf
            if slope < -1e-14:
                t_full = (u[p] - cons[p] @ z) / slope
            t_drop, drop_idx = np.inf, -1
            for i, dl in enumerate(dlam):
                if dl < -1e-14:
                    t = lam[i] / (-dl)
                    if t < t_drop:
                        t_drop, drop_idx = t, i
            t = min(t_full, t_drop)
            if not np.isfinite(t):
                raise OptimError("infeasible or unbounded QP subproblem",
                                 best_x=z, residual=float(viol.max()))
            z = z + t * dz
            lam = lam + t * dlam
            lam_p += t
            if t_full <= t_drop:
                work.append(p)
                lam = np.append(lam, lam_p)
                break
            work.pop(drop_idx)
            lam = np.delete(lam, drop_idx)
    raise OptimError("QP iteration cap reached", best_x=z,
                     residual=float((cons @ z - u).max() if n_cons else 0.0))


def _polish(problem, h_reg, z, work, feas_tol):
    """Re-solve the equality-constrained problem on the final working set to
    shake off drift accumulated by the incremental updates."""
    if not work:
        return np.linalg.solve(h_reg, -problem.lin)
    c_w = problem.cons[work]
    dim = len(z)
    kkt = np.zeros((dim + len(work), dim + len(work)))
    kkt[:dim, :dim] = h_reg
    kkt[:dim, dim:] = c_w.T
    kkt[dim:, :dim] = c_w
    rhs = np.concatenate([-problem.lin, problem.bounds[work]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return z
    z_new, lam_new = sol[:dim], sol[dim:]
    # accept only if the polish stays feasible with nonnegative multipliers
    if lam_new.size and lam_new.min() < -1e-7 * (1.0 + np.abs(lam_new).max()):
        return z
    if problem.cons.size and (problem.cons @ z_new - problem.bounds).max() > feas_tol:
        return z
    return z_new


def kkt_check(problem: QpProblem, z, tol: float) -> dict:
    """Independent optimality certificate for a claimed QP solution.

    Recovers multipliers for the near-active constraints by nonnegative least
    squares (a code path disjoint from solve_qp) and reports feasibility,
    stationarity, and complementary slackness residuals.
    """
    z = np.asarray(z, dtype=float)
    cons, u = problem.cons, problem.bounds
    grad = problem.hess @ z + problem.lin
    g_scale = 1.0 + np.abs(problem.lin).max() if problem.lin.size else 1.0
    u_scale = 1.0 + (np.abs(u).max() if u.size else 0.0)

    slack = u - cons @ z if cons.size else np.zeros(0)
    feas = float(-slack.min()) if slack.size else 0.0
    active = np.where(slack <= tol * u_scale)[0]
    if active.size:
        lam, _ = nnls(cons[active].T, -grad)
        stat_vec = grad + cons[active].T @ lam
        comp = float(np.max(lam * np.abs(slack[active]))) if lam.size else 0.0
    else:
        lam = np.zeros(0)
        stat_vec = grad
        comp = 0.0
    stationarity = float(np.abs(stat_vec).max()) if stat_vec.size else 0.0
    ok = (feas <= tol * u_scale
          and stationarity <= tol * g_scale
          and comp <= tol * max(g_scale, u_scale))
    return {
        "ok": bool(ok),
        "feasibility": feas,
        "stationarity": stationarity,
        "complementarity": comp,
        "active": active,
        "multipliers": lam,
    }


def _wolfe_search(fg, x, d, f0, g0, c1=1e-4, c2=0.9, max_steps=60):
    """Strong Wolfe line search (bracket and zoom with bisection)."""
    slope0 = float(g0 @ d)
    if slope0 >= 0:
        raise OptimError("search direction is not a descent direction", best_x=x)

    def phi(a):
        f, g = fg(x + a * d)
        return f, g, float(g @ d)

    a_prev, f_prev = 0.0, f0
    a = 1.0
    f_a, g_a, s_a = phi(a)
    for _ in range(max_steps):
        if f_a > f0 + c1 * a * slope0 or (f_a >= f_prev and a_prev > 0):
            return _zoom(phi, a_prev, a, f_prev, f0, slope0, c1, c2, x, d)
        if abs(s_a) <= -c2 * slope0:
            return a, f_a, g_a
        if s_a >= 0:
            return _zoom(phi, a, a_prev, f_a, f0, slope0, c1, c2, x, d)
        a_prev, f_prev = a, f_a
        a = 2.0 * a
        f_a, g_a, s_a = phi(a)
    raise OptimError("line search failed to bracket", best_x=x + a * d)


def _zoom(phi, lo, hi, f_lo, f0, slope0, c1, c2, x, d, max_steps=60):
    for _ in range(max_steps):
        a = 0.5 * (lo + hi)
        f_a, g_a, s_a = phi(a)
        if f_a > f0 + c1 * a * slope0 or f_a >= f_lo:
            hi = a
        else:
            if abs(s_a) <= -c2 * slope0:
                return a, f_a, g_a
            if s_a * (hi - lo) >= 0:
                hi = lo
            lo, f_lo = a, f_a
        if abs(hi - lo) < 1e-16 * (1.0 + abs(lo)):
            return a, f_a, g_a
    raise OptimError("line search zoom failed", best_x=x + lo * d)


def bfgs_minimize(fg, x0, tol: float = 1e-8, max_iter: int = 2000):
    """Minimize a smooth convex function given fg(x) -> (value, gradient).

    Stops when the gradient infinity norm drops below tol * (1 + |f|);
    raises OptimError (with the best iterate attached) on line search
    failure or when the iteration cap is hit.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fg(x)
    h_inv = np.eye(x.size)
    for _ in range(max_iter):
        if np.abs(g).max() <= tol * (1.0 + abs(f)):
            return x
        d = -h_inv @ g
        try:
            a, f_new, g_new = _wolfe_search(fg, x, d, f, g)
        except OptimError as err:
            # restart once from steepest descent before giving up
            if not np.allclose(h_inv, np.eye(x.size)):
                h_inv = np.eye(x.size)
                d = -g
                try:
                    a, f_new, g_new = _wolfe_search(fg, x, d, f, g)
                except OptimError:
                    raise OptimError("line search failed", best_x=x,
                                     residual=float(np.abs(g).max())) from None
            else:
                raise OptimError("line search failed", best_x=x,
                                 residual=float(np.abs(g).max())) from err
        s = a * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-14 * max(1.0, float(np.linalg.norm(s)) * float(np.linalg.norm(y))):
            rho = 1.0 / sy
            v = np.eye(x.size) - rho * np.outer(s, y)
            h_inv = v @ h_inv @ v.T + rho * np.outer(s, s)
        x, f, g = x + s, f_new, g_new
    if np.abs(g).max() <= tol * (1.0 + abs(f)):
        return x
    raise OptimError("BFGS iteration cap reached", best_x=x,
                     residual=float(np.abs(g).max()))
