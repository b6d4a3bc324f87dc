"""Spectral density models used by the constrained polynomial solvers.

Two shapes: a uniform density on a spectral interval, and a maximum-entropy
reconstruction exp(Q(y)) whose Chebyshev moments match measured values. The
max-entropy fit minimizes the convex dual

    D(q) = integral over the interval of exp(sum_k q_k T_k(y / gamma_a)) dy
           - sum_k q_k mu_k,

whose gradient is (moments of the current density) - (target moments).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chebpoly import ChebPoly, cheb_eval, chebyshev_basis
from .optim import OptimError, bfgs_minimize
from .quadrature import gauss_legendre

# exp() argument cap; an optimum pinned at the cap means no positive density
# on the interval reproduces the requested moments
_LOG_CLAMP = 50.0


class MaxentInfeasibleError(RuntimeError):
    """Raised when no positive density on the interval matches the moments
    (e.g. heavily noise-corrupted measurements)."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class MomentVector:
    """Chebyshev moments mu_k = b' T_k(A / gamma_a) b for k = 0..2n+1."""

    mu: np.ndarray
    gamma_a: float = 1.0

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).copy()
        if mu.ndim != 1 or mu.size < 1:
            raise ValueError("need at least one moment")
        if np.abs(mu).max() > 4.0:
            raise ValueError("moment magnitude above 4; estimator bug?")
        mu.flags.writeable = False
        object.__setattr__(self, "mu", mu)

    @property
    def order(self) -> int:
        """The n with moments mu_0..mu_{2n+1} (measured vectors have an even
        number of entries; a bare mass constraint is also allowed)."""
        return max(self.mu.size // 2 - 1, 0)


@dataclass(frozen=True)
class SpectralDensity:
    """Either uniform on [lam_min, lam_max] or exp(Q(y)) with Q a ChebPoly."""

    kind: str
    interval: tuple[float, float]
    logpoly: ChebPoly | None = None

    def __post_init__(self):
        lo, hi = self.interval
        if not 0 <= lo < hi:
            raise ValueError("interval must satisfy 0 <= lam_min < lam_max")
        if self.kind == "uniform":
            if self.logpoly is not None:
                raise ValueError("uniform density takes no log-polynomial")
        elif self.kind == "maxent":
            if self.logpoly is None:
                raise ValueError("maxent density needs a log-polynomial")
        else:
            raise ValueError(f"unknown density kind {self.kind!r}")
        object.__setattr__(self, "interval", (float(lo), float(hi)))

    def evaluate(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "uniform":
            lo, hi = self.interval
            out = np.full_like(y, 1.0 / (hi - lo))
        else:
            out = np.exp(np.minimum(cheb_eval(self.logpoly, y), _LOG_CLAMP))
        return out if out.ndim else float(out)

    def sqrt_pushforward(self) -> "SqrtImageDensity":
        """Density of sqrt(lambda) when lambda is distributed with this
        density; lives on the square-rooted interval."""
        return SqrtImageDensity(self)


@dataclass(frozen=True)
class SqrtImageDensity:
    """Pushforward of a density under y -> sqrt(y): rho_B(z) = 2 z rho(z^2).

    Quacks like SpectralDensity for sampling purposes; used when a solver
    polynomial is built for the square root of the system matrix.
    """

    base: SpectralDensity

    @property
    def kind(self) -> str:
        return self.base.kind + "_sqrt"

    @property
    def interval(self) -> tuple[float, float]:
        lo, hi = self.base.interval
        return (float(np.sqrt(lo)), float(np.sqrt(hi)))

    def evaluate(self, z):
        z = np.asarray(z, dtype=float)
        out = 2.0 * z * self.base.evaluate(z**2)
        return out if out.ndim else float(out)


def density_samples(rho, n_q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on the density's interval and the weighted
    density values w_j * rho(y_j) at them."""
    lo, hi = rho.interval
    rule = gauss_legendre(n_q, lo, hi)
    return rule.nodes, rule.weights * rho.evaluate(rule.nodes)


def moments_of(rho, order: int, n_q: int, gamma_a: float = 1.0) -> MomentVector:
    """Quadrature Chebyshev moments mu_0..mu_{2*order+1} of a density."""
    nodes, wvals = density_samples(rho, n_q)
    basis = chebyshev_basis(nodes, 2 * order + 1, gamma_a)
    return MomentVector(basis.T @ wvals, gamma_a)


def maxent_density(moments: MomentVector, interval, n_q: int,
                   tol: float = 1e-8, moment_tol: float = 1e-4,
                   ridge: float = 1e-4) -> SpectralDensity:
    """Fit the maximum-entropy density exp(Q) matching the given moments.

    Measured moment vectors routinely sit at or just outside the boundary of
    the cone the quadrature measure can represent (a point-mass spectrum is
    the extreme case); there the plain dual is unbounded and BFGS runs off to
    enormous coefficients. The fit therefore goes in two stages: a ridge
    term keeps the first solve bounded whatever the data, then an unridged
    polish from that warm start recovers full accuracy whenever the moments
    are genuinely representable. The better of the two iterates is kept.

    Raises MaxentInfeasibleError when the density overflows the exp clamp,
    degenerates in mass, or misses the moments by more than moment_tol
    relative.
    """
    lo, hi = float(interval[0]), float(interval[1])
    mu = moments.mu
    n_coef = mu.size
    if n_q < 2 * n_coef:
        raise ValueError("quadrature too coarse for the moment count")
    if mu[0] <= 0:
        raise MaxentInfeasibleError("nonpositive total mass")

    rule = gauss_legendre(n_q, lo, hi)
    basis = chebyshev_basis(rule.nodes, n_coef - 1, moments.gamma_a)
    weights = rule.weights

    def dual(q, alpha):
        logs = basis @ q
        live = logs <= _LOG_CLAMP
        dens = np.exp(np.minimum(logs, _LOG_CLAMP))
        # gradient of the clamped surrogate (flat where clamped), so the
        # line search sees a consistent function/gradient pair
        val = float(weights @ dens - q @ mu) + alpha * float(q @ q)
        grad = basis.T @ (weights * dens * live) - mu + 2.0 * alpha * q
        return val, grad

    def residual_of(q):
        _, grad = dual(q, 0.0)
        return float((np.abs(grad) / np.maximum(1.0, np.abs(mu))).max())

    q = np.zeros(n_coef)
    q[0] = np.log(mu[0] / (hi - lo))
    try:
        q = bfgs_minimize(lambda v: dual(v, ridge), q, tol=tol)
    except OptimError as err:
        if err.best_x is not None:
            q = err.best_x
    best_q, best_resid = q, residual_of(q)
    if best_resid > tol:
        try:
            q = bfgs_minimize(lambda v: dual(v, 0.0), q, tol=tol, max_iter=500)
        except OptimError as err:
            q = err.best_x if err.best_x is not None else q
        polished = residual_of(q)
        if polished < best_resid:
            best_q, best_resid = q, polished
    q = best_q

    logs = basis @ q
    if not np.isfinite(q).all() or logs.max() >= _LOG_CLAMP:
        raise MaxentInfeasibleError("maxent infeasible: density overflow",
                                    residual=best_resid)
    mass = float(weights @ np.exp(np.minimum(logs, _LOG_CLAMP)))
    if not 0.2 * mu[0] <= mass <= 5.0 * mu[0]:
        raise MaxentInfeasibleError(
            f"maxent infeasible: degenerate mass {mass:.3g}",
            residual=best_resid)
    if best_resid > moment_tol:
        raise MaxentInfeasibleError(
            "maxent infeasible: moment residual too large",
            residual=best_resid)
    return SpectralDensity("maxent", (lo, hi), ChebPoly(q, moments.gamma_a))
