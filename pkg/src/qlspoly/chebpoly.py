"""Polynomial algebra in the Chebyshev basis.

A polynomial is stored as coefficients c_0..c_m against T_k(y / gamma_ref),
where gamma_ref is the half-width of the reference interval. Everything here
is pure and immutable; evaluation uses the Clenshaw recurrence so that points
outside [-gamma_ref, gamma_ref] are handled without arccos.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular


@dataclass(frozen=True)
class ChebPoly:
    """Real polynomial sum_k coeffs[k] * T_k(y / gamma_ref)."""

    coeffs: np.ndarray
    gamma_ref: float = 1.0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a nonempty 1-d array")
        if not self.gamma_ref > 0:
            raise ValueError("gamma_ref must be positive")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        """Index of the last nonzero coefficient (trailing zeros ignored)."""
        nz = np.nonzero(self.coeffs)[0]
        return int(nz[-1]) if nz.size else 0

    def __call__(self, y):
        return cheb_eval(self, y)


def cheb_eval(p: ChebPoly, y):
    """Evaluate p at y (scalar or array) by the Clenshaw recurrence."""
    t = np.asarray(y, dtype=float) / p.gamma_ref
    c = p.coeffs
    b1 = np.zeros_like(t)
    b2 = np.zeros_like(t)
    for k in range(len(c) - 1, 0, -1):
        b1, b2 = c[k] + 2.0 * t * b1 - b2, b1
    out = c[0] + t * b1 - b2
    return out if out.ndim else float(out)


def chebyshev_basis(y, n_max: int, gamma_ref: float = 1.0) -> np.ndarray:
    """Matrix of T_k(y / gamma_ref) for k = 0..n_max, shape (len(y), n_max+1)."""
    t = np.atleast_1d(np.asarray(y, dtype=float)) / gamma_ref
    out = np.empty((t.size, n_max + 1))
    out[:, 0] = 1.0
    if n_max >= 1:
        out[:, 1] = t
    for k in range(2, n_max + 1):
        out[:, k] = 2.0 * t * out[:, k - 1] - out[:, k - 2]
    return out


def parity_split(p: ChebPoly) -> tuple[ChebPoly, ChebPoly]:
    """Split into even and odd parts; T_k has the parity of k, so the parts
    keep the coefficients at even and odd indices respectively."""
    even = np.where(np.arange(len(p.coeffs)) % 2 == 0, p.coeffs, 0.0)
    odd = p.coeffs - even
    return ChebPoly(even, p.gamma_ref), ChebPoly(odd, p.gamma_ref)


def grid_supnorm(p: ChebPoly, n_cap: int) -> tuple[float, float]:
    """Max of |P_even| and |P_odd| over the grid j*gamma_ref/(2*n_cap),
    j = -2*n_cap..2*n_cap.

    For deg p <= n_cap the true sup-norms on [-gamma_ref, gamma_ref] lie in
    [s, (4/3)*s], so the grid value is a certified lower bound.
    """
    if n_cap < 0 or p.degree > n_cap:
        raise ValueError("degree exceeds grid capacity")
    if n_cap == 0:
        return abs(float(p.coeffs[0])), 0.0
    j = np.arange(-2 * n_cap, 2 * n_cap + 1)
    y = j * (p.gamma_ref / (2.0 * n_cap))
    even, odd = parity_split(p)
    s_even = float(np.max(np.abs(cheb_eval(even, y))))
    s_odd = float(np.max(np.abs(cheb_eval(odd, y))))
    return s_even, s_odd


def chebyshev_points(m: int, gamma_ref: float = 1.0) -> np.ndarray:
    """The m Chebyshev (first-kind) points of [-gamma_ref, gamma_ref]."""
    k = np.arange(m)
    return gamma_ref * np.cos((2 * k + 1) * np.pi / (2 * m))


def poly_from_values(nodes, values, gamma_ref: float) -> ChebPoly:
    """Interpolate the unique degree <= m polynomial through (nodes, values).

    Solves the collocation system in the Chebyshev basis by QR; fine for the
    few dozen unknowns used here.
    """
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if nodes.shape != values.shape or nodes.ndim != 1:
        raise ValueError("nodes and values must be 1-d arrays of equal length")
    m = nodes.size - 1
    a = chebyshev_basis(nodes, m, gamma_ref)
    q, r = np.linalg.qr(a)
    diag = np.abs(np.diag(r))
    if m >= 0 and (diag.min() if diag.size else 0.0) <= 1e-13 * max(diag.max(), 1.0):
        raise ValueError("singular interpolation system (duplicate nodes?)")
    coeffs = solve_triangular(r, q.T @ values)
    return ChebPoly(coeffs, gamma_ref)


def _derivative_at_zero(p: ChebPoly) -> float:
    # d/dy T_k(y/g) at 0 is (k/g) * sin(k*pi/2): zero for even k, +-k/g for odd.
    k = np.arange(len(p.coeffs))
    sign = np.where(k % 4 == 1, 1.0, np.where(k % 4 == 3, -1.0, 0.0))
    return float(np.sum(p.coeffs * k * sign) / p.gamma_ref)


def divide_by_y(p: ChebPoly) -> ChebPoly:
    """Return q with q(y) * y = p(y); requires p(0) = 0.

    Fits p(y)/y at Chebyshev points, substituting the analytic limit p'(0)
    where a node falls on zero; this avoids coefficient recurrences that
    cancel badly.
    """
    p0 = cheb_eval(p, 0.0)
    if abs(p0) > 1e-9 * max(np.sum(np.abs(p.coeffs)), 1e-300):
        raise ValueError("nonzero constant term")
    m = p.degree
    if m == 0:
        # p is the zero polynomial (constant below tolerance)
        return ChebPoly([0.0], p.gamma_ref)
    nodes = chebyshev_points(m, p.gamma_ref)
    near_zero = np.abs(nodes) < 1e-8 * p.gamma_ref
    vals = np.empty_like(nodes)
    safe = ~near_zero
    vals[safe] = cheb_eval(p, nodes[safe]) / nodes[safe]
    if near_zero.any():
        vals[near_zero] = _derivative_at_zero(p)
    return poly_from_values(nodes, vals, p.gamma_ref)


def compose_square(p: ChebPoly) -> ChebPoly:
    """Return r with r(y) = p(y**2), an even polynomial of twice the degree.

    The reference half-width of r is sqrt(p.gamma_ref) so that squaring maps
    r's domain onto the part [0, gamma_ref] of p's domain.
    """
    m = p.degree
    gamma_r = float(np.sqrt(p.gamma_ref))
    nodes = chebyshev_points(2 * m + 1, gamma_r)
    vals = cheb_eval(p, nodes**2)
    fitted = poly_from_values(nodes, vals, gamma_r)
    coeffs = fitted.coeffs.copy()
    coeffs[1::2] = 0.0  # the composition is exactly even; drop fit noise
    return ChebPoly(coeffs, gamma_r)
