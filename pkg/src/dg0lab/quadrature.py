"""Reference-cell quadrature rules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_interval(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [0, 1] (exact to degree 2n-1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def collapsed_triangle(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Duffy-collapsed tensor Gauss rule on the reference triangle.

    Exact for polynomials of total degree <= 2n - 2.
    """
    u, wu = gauss_interval(n)
    U, V = np.meshgrid(u, u, indexing="ij")
    W = np.outer(wu, wu) * (1.0 - U)
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    return pts, W.ravel()


def cell_rule(dim: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule on the reference simplex exact for the given polynomial degree."""
    degree = max(int(degree), 0)
    if dim == 1:
        x, w = gauss_interval(degree // 2 + 1)
        return x[:, None], w
    return collapsed_triangle((degree + 3) // 2)
