"""Gauss-Legendre quadrature on arbitrary intervals.

Nodes are found by Newton iteration on the Legendre polynomial with the
standard cosine initial guess; no external tables needed, and plenty accurate
for the rule sizes used here (up to a few hundred points).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadRule:
    """Nodes and weights integrating functions over (a, b)."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for name in ("nodes", "weights"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _legendre_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Roots of P_n on (-1, 1) and the derivative values there."""
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for j in range(2, n + 1):
            p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
        dp = n * (x * p1 - p0) / (x**2 - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    # recompute derivative at the converged nodes for the weights
    p0 = np.ones_like(x)
    p1 = x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    dp = n * (x * p1 - p0) / (x**2 - 1.0)
    order = np.argsort(x)
    return x[order], dp[order]


def gauss_legendre(n_q: int, a: float, b: float) -> QuadRule:
    """The n_q-point Gauss-Legendre rule on (a, b); exact through degree
    2*n_q - 1."""
    if n_q < 1:
        raise ValueError("need at least one quadrature point")
    if not a < b:
        raise ValueError("interval must satisfy a < b")
    if n_q == 1:
        return QuadRule(np.array([(a + b) / 2.0]), np.array([float(b - a)]))
    x, dp = _legendre_nodes(n_q)
    w = 2.0 / ((1.0 - x**2) * dp**2)
    nodes = 0.5 * (a + b) + 0.5 * (b - a) * x
    weights = 0.5 * (b - a) * w
    return QuadRule(nodes, weights)
