"""Construction of the solver polynomial families.

Every family produces a SolverPlan: the polynomial to run, the structural
transform mode, the even/odd sup-norm surrogates that set the measurement
normalization, and the number of block-encoding applications per shot.

Families:
  qsvt   - truncated expansion of (1 - (1 - y^2)^n_ref) / y in odd Chebyshev
           polynomials, with binomial tail-sum coefficients.
  cheb1  - classical Chebyshev-iteration polynomial for 1/y on
           [lam_min, lam_max].
  cheb2  - symmetrized variant: the Chebyshev factor takes y^2, keeping the
           polynomial odd and controlled on the whole reference interval.
  cheb3  - like cheb2 with the Chebyshev factor replaced by a weighted
           combination T_n + w T_{n-1}, w = (1 - lam_min) / (1 + lam_min).
  cup    - convex least-squares fit of 1/y against a spectral density with a
           penalized grid bound on the even/odd sup-norms (a QP).
  cap    - cup run against a maximum-entropy density fitted to measured
           Chebyshev moments; falls back to the uniform density when the fit
           is infeasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .chebpoly import (ChebPoly, cheb_eval, chebyshev_basis, chebyshev_points,
                       compose_square, divide_by_y, grid_supnorm,
                       poly_from_values)
from .density import (MaxentInfeasibleError, MomentVector, SpectralDensity,
                      density_samples, maxent_density)
from .optim import QpProblem, kkt_check, solve_qp

GAMMA_A = 1.0  # reference half-width of the executed spectral interval

TRANSFORMS = ("none", "inner_square", "outer_square")


@dataclass(frozen=True)
class SolverPlan:
    """A solver polynomial plus everything the measurement channel needs."""

    poly: ChebPoly
    family: str
    transform: str = "none"
    gamma_even: float = 0.0
    gamma_odd: float = 0.0
    steps: int = 0
    n: int | None = None
    eps: float | None = None
    kappa: float | None = None
    lam_min: float | None = None
    lam_max: float | None = None
    maxent_fallback: bool = False

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")

    @property
    def gamma_total(self) -> float:
        """Normalization of the produced solution vector: gamma_even +
        gamma_odd per application, squared when the polynomial is applied
        twice (outer square transform)."""
        if self.transform == "outer_square":
            return self.gamma_odd**2
        return self.gamma_even + self.gamma_odd

    @property
    def label(self) -> str:
        return f"{self.family}:{self.transform}"


def _plan(poly: ChebPoly, family: str, **params) -> SolverPlan:
    s_even, s_odd = grid_supnorm(poly, max(poly.degree, 1))
    return SolverPlan(poly=poly, family=family, gamma_even=s_even,
                      gamma_odd=s_odd, steps=poly.degree, **params)


def _drop_parity_noise(coeffs: np.ndarray, odd: bool) -> np.ndarray:
    """Zero the numerically-dead coefficients of the wrong parity left over
    from interpolation, so parity checks see exact zeros."""
    c = np.asarray(coeffs, dtype=float).copy()
    scale = np.abs(c).max() if c.size else 0.0
    idx = np.arange(c.size)
    wrong = (idx % 2 == 0) if odd else (idx % 2 == 1)
    mask = wrong & (np.abs(c) < 1e-11 * max(scale, 1.0))
    c[mask] = 0.0
    return c


def reference_steps(kappa: float, eps: float) -> int:
    """Reference truncation order ceil(kappa^2 * ln(kappa / eps))."""
    if not (kappa > 1 and eps > 0):
        raise ValueError("need kappa > 1 and eps > 0")
    return int(math.ceil(kappa**2 * math.log(kappa / eps)))


def qsvt_poly(n: int, kappa: float, eps: float) -> SolverPlan:
    """Degree 2n-1 truncation of the inverse-approximating polynomial whose
    full version (n = n_ref) is (1 - (1 - y^2)^n_ref) / y.

    Coefficients are 4 * (-1)^j * 2^(-2 n_ref) * sum_{k=j+1}^{n_ref}
    binom(2 n_ref, n_ref + k); the binomial tail is accumulated through the
    normalized central-term recurrence so nothing overflows.
    """
    n_ref = reference_steps(kappa, eps)
    if not 1 <= n <= n_ref:
        raise ValueError(f"need 1 <= n <= {n_ref} (reference truncation order)")
    # t_k = binom(2m, m+k) / 2^(2m) via t_0 = binom(2m, m)/4^m and the ratio
    # t_{k+1}/t_k = (m - k)/(m + k + 1)
    m = n_ref
    t = np.empty(m + 1)
    t[0] = math.exp(math.lgamma(2 * m + 1) - 2 * math.lgamma(m + 1)
                    - 2 * m * math.log(2.0))
    for k in range(m):
        t[k + 1] = t[k] * (m - k) / (m + k + 1)
    tails = np.cumsum(t[::-1])[::-1]  # tails[j] = sum_{k >= j} t_k
    coeffs = np.zeros(2 * n)
    j = np.arange(n)
    coeffs[2 * j + 1] = 4.0 * (-1.0) ** j * tails[j + 1]
    return _plan(ChebPoly(coeffs, GAMMA_A), "qsvt", n=n, eps=eps, kappa=kappa,
                 lam_min=1.0 / kappa, lam_max=1.0)


def _from_numerator(numerator_fn, degree: int, family: str, **params) -> SolverPlan:
    """Interpolate a numerator that vanishes at 0 and divide by y."""
    nodes = chebyshev_points(degree + 2, GAMMA_A)
    poly_num = poly_from_values(nodes, numerator_fn(nodes), GAMMA_A)
    poly = divide_by_y(poly_num)
    odd = degree % 2 == 1
    coeffs = _drop_parity_noise(poly.coeffs, odd) if odd else poly.coeffs
    return _plan(ChebPoly(coeffs, GAMMA_A), family, **params)


def cheb1_poly(n: int, lam_min: float, lam_max: float) -> SolverPlan:
    """Chebyshev-iteration polynomial of degree n:
    (1 - T_{n+1}(l(y)) / T_{n+1}(l(0))) / y with l affine from
    [lam_min, lam_max] onto [-1, 1]."""
    if not 0 < lam_min < lam_max:
        raise ValueError("need 0 < lam_min < lam_max")
    t_next = ChebPoly(np.eye(n + 2)[n + 1])

    def ell(y):
        return (2.0 * y - lam_min - lam_max) / (lam_max - lam_min)

    denom = cheb_eval(t_next, ell(0.0))

    def numerator(y):
        return 1.0 - cheb_eval(t_next, ell(y)) / denom

    return _from_numerator(numerator, n, "cheb1", n=n,
                           lam_min=lam_min, lam_max=lam_max)


def _cheb_sym_poly(n, lam_min, lam_max, weight, family) -> SolverPlan:
    if not 0 < lam_min < lam_max <= GAMMA_A:
        raise ValueError("need 0 < lam_min < lam_max <= reference half-width")
    g = np.zeros(n + 1)
    g[n] = 1.0
    if weight and n >= 1:
        g[n - 1] = weight
    g_poly = ChebPoly(g)

    def s(z):
        return (2.0 * z - lam_min**2 - lam_max**2) / (lam_max**2 - lam_min**2)

    denom = cheb_eval(g_poly, s(0.0))

    def numerator(y):
        return 1.0 - cheb_eval(g_poly, s(y**2)) / denom

    return _from_numerator(numerator, 2 * n - 1, family, n=n,
                           lam_min=lam_min, lam_max=lam_max)


def cheb2_poly(n: int, lam_min: float, lam_max: float) -> SolverPlan:
    """Symmetrized Chebyshev iteration: odd degree 2n-1, Chebyshev factor in
    y^2 mapped from [lam_min^2, lam_max^2]."""
    return _cheb_sym_poly(n, lam_min, lam_max, 0.0, "cheb2")


def cheb3_poly(n: int, lam_min: float, lam_max: float) -> SolverPlan:
    """Like cheb2 with the factor T_n(x) + w T_{n-1}(x),
    w = (1 - lam_min) / (1 + lam_min)."""
    weight = (1.0 - lam_min) / (1.0 + lam_min)
    return _cheb_sym_poly(n, lam_min, lam_max, weight, "cheb3")


def _cup_qp(nodes, wvals, n: int, eps: float, parity: str) -> tuple[QpProblem, np.ndarray]:
    """Assemble the penalized least-squares QP.

    Variables are (Chebyshev coefficients of P, gamma_even, gamma_odd); the
    objective is eps * (gamma_even + gamma_odd)^2
    + sum_j wvals_j * (y_j P(y_j)^2 - 2 P(y_j)), and the constraints bound
    |P_even|, |P_odd| by the gammas on the grid j * GAMMA_A / (2 deg).
    """
    if parity == "odd":
        k_idx = np.arange(1, n + 1, 2)
    else:
        k_idx = np.arange(0, n + 1)
    deg = int(k_idx.max()) if k_idx.size else 0
    n_c = k_idx.size
    dim = n_c + 2

    basis = chebyshev_basis(nodes, deg, GAMMA_A)[:, k_idx]
    hess = np.zeros((dim, dim))
    hess[:n_c, :n_c] = 2.0 * basis.T @ (basis * (wvals * nodes)[:, None])
    hess[n_c:, n_c:] = 2.0 * eps * np.ones((2, 2))
    lin = np.zeros(dim)
    lin[:n_c] = -2.0 * basis.T @ wvals

    grid_n = max(deg, 1)
    grid = np.arange(-2 * grid_n, 2 * grid_n + 1) * (GAMMA_A / (2.0 * grid_n))
    gbasis = chebyshev_basis(grid, deg, GAMMA_A)
    even_mask = k_idx % 2 == 0
    rows = []
    for sign in (1.0, -1.0):
        for mask, col in ((even_mask, n_c), (~even_mask, n_c + 1)):
            block = np.zeros((grid.size, dim))
            block[:, :n_c] = sign * gbasis[:, k_idx] * mask
            block[:, col] = -1.0
            rows.append(block)
    cons = np.vstack(rows)
    bounds = np.zeros(cons.shape[0])
    return QpProblem(hess, lin, cons, bounds), k_idx


def cup_poly(rho, n: int, eps: float, n_quad: int | None = None,
             parity: str = "any", family: str = "cup",
             qp_tol: float = 1e-8) -> SolverPlan:
    """Constrained least-squares solver polynomial for the density rho.

    n_quad defaults to n+1 nodes (exact for the polynomial integrand of the
    uniform density) and 4(n+1) for reconstructed densities.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if n_quad is None:
        n_quad = n + 1 if rho.kind == "uniform" else 4 * (n + 1)
    nodes, wvals = density_samples(rho, n_quad)
    qp, k_idx = _cup_qp(nodes, wvals, n, eps, parity)
    z = solve_qp(qp, tol=qp_tol)
    coeffs = np.zeros(n + 1)
    coeffs[k_idx] = z[:-2] + 0.0  # normalize -0.0
    g_even, g_odd = max(z[-2], 0.0) + 0.0, max(z[-1], 0.0) + 0.0
    if parity == "odd":
        g_even = 0.0
    lo, hi = rho.interval
    poly = ChebPoly(coeffs, GAMMA_A)
    return SolverPlan(poly=poly, family=family, gamma_even=float(g_even),
                      gamma_odd=float(g_odd), steps=poly.degree, n=n, eps=eps,
                      lam_min=lo, lam_max=hi)


def cup_certificate(plan: SolverPlan, rho, tol: float = 1e-6) -> dict:
    """Rebuild the QP a plan came from and run the independent optimality
    check on its solution."""
    n = plan.n
    n_quad = n + 1 if rho.kind == "uniform" else 4 * (n + 1)
    nodes, wvals = density_samples(rho, n_quad)
    parity = "odd" if plan.gamma_even == 0.0 and np.all(plan.poly.coeffs[::2] == 0.0) else "any"
    qp, k_idx = _cup_qp(nodes, wvals, n, plan.eps, parity)
    z = np.concatenate([plan.poly.coeffs[k_idx],
                        [plan.gamma_even, plan.gamma_odd]])
    report = kkt_check(qp, z, tol)
    report["objective"] = qp.objective(z)
    report["problem"] = qp
    report["k_idx"] = k_idx
    return report


MOMENT_MISMATCH_CAP = 0.1  # fallback threshold for noisy measured moments


def cap_poly(moments: MomentVector, n: int, eps: float, interval,
             qp_tol: float = 1e-8,
             moment_tol: float = MOMENT_MISMATCH_CAP) -> SolverPlan:
    """Adaptive variant: fit a maximum-entropy density to the moments, then
    run the constrained fit against it.

    Measured moments routinely sit a noise-width outside the cone of exactly
    representable densities, so the best approximately-matching density is
    accepted up to a relative moment mismatch of moment_tol; beyond that the
    plan falls back to the uniform density (flagged on the plan).
    """
    lo, hi = float(interval[0]), float(interval[1])
    fallback = False
    try:
        rho = maxent_density(moments, (lo, hi), 4 * (n + 1),
                             moment_tol=moment_tol)
    except MaxentInfeasibleError:
        rho = SpectralDensity("uniform", (lo, hi))
        fallback = True
    plan = cup_poly(rho, n, eps, n_quad=4 * (n + 1), family="cap",
                    qp_tol=qp_tol)
    return replace(plan, maxent_fallback=fallback)


def apply_transform(plan: SolverPlan, mode: str) -> SolverPlan:
    """Attach a square transform to a plan.

    inner_square: the executed polynomial becomes P(y^2), run on the matrix
    square root, doubling the walk length; normalization re-estimated on the
    composed (even) polynomial.

    outer_square: the odd polynomial itself is applied twice on the square
    root; the plan keeps per-application gammas (gamma_total squares them).
    """
    if mode == "none":
        return plan
    if mode not in TRANSFORMS:
        raise ValueError(f"unknown transform {mode!r}")
    if plan.transform != "none":
        raise ValueError("plan already carries a transform")
    if mode == "inner_square":
        composed = compose_square(plan.poly)
        s_even, s_odd = grid_supnorm(composed, max(composed.degree, 1))
        return replace(plan, poly=composed, transform=mode,
                       gamma_even=s_even, gamma_odd=s_odd,
                       steps=composed.degree)
    # outer square: requires odd parity so that P approximates 1/y on both
    # half-axes of the square root's spectrum
    s_even, _ = grid_supnorm(plan.poly, max(plan.poly.degree, 1))
    if s_even > 1e-9 * max(1.0, plan.gamma_odd):
        raise ValueError("outer square transform requires an odd polynomial")
    return replace(plan, transform=mode, steps=2 * plan.poly.degree)
