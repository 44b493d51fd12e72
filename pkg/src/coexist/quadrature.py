"""Quadrature rules on uniform grids of [0, 1].

Composite Simpson is the workhorse. Kernels with a kink on the diagonal
``s = t`` are integrated piecewise so each piece is smooth.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize_scalar


def uniform_grid(n: int, a: float = 0.0, b: float = 1.0) -> np.ndarray:
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    return np.linspace(a, b, n)


def simpson_weights(n: int, a: float = 0.0, b: float = 1.0) -> np.ndarray:
    """Composite Simpson weights for ``n`` (odd) equispaced nodes on [a, b]."""
    if n < 3 or n % 2 == 0:
        raise ValueError(f"composite Simpson needs an odd node count >= 3, got {n}")
    h = (b - a) / (n - 1)
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3.0


def trapezoid_weights(n: int, a: float = 0.0, b: float = 1.0) -> np.ndarray:
    h = (b - a) / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = h / 2.0
    return w


def _panel_weights(m: int, h: float) -> np.ndarray:
    """Weights for ``m`` panels (m + 1 nodes) of width ``h``.

    Even ``m`` uses composite Simpson; odd ``m >= 3`` closes with one
    Simpson 3/8 block; ``m == 1`` falls back to the trapezoid.
    """
    w = np.zeros(m + 1)
    if m == 0:
        return w
    if m == 1:
        w[:] = h / 2.0
        return w
    k = m if m % 2 == 0 else m - 3
    if k > 0:
        w[: k + 1] += simpson_weights(k + 1, 0.0, k * h)
    if m % 2 == 1:
        w[k:] += np.array([3.0, 9.0, 9.0, 3.0]) * h / 8.0
    return w


def split_weight_matrix(n: int) -> np.ndarray:
    """Row ``i`` integrates over [0, 1] on the uniform grid, split at node ``i``.

    ``W[i] @ g(t_i, s_k)`` is accurate to fourth order whenever ``g(t_i, .)``
    is smooth on [0, t_i] and on [t_i, 1] separately.
    """
    h = 1.0 / (n - 1)
    W = np.zeros((n, n))
    for i in range(n):
        W[i, : i + 1] += _panel_weights(i, h)
        W[i, i:] += _panel_weights(n - 1 - i, h)
    return W


def golden_section(f, a: float, b: float, maximize: bool = False, xtol: float = 1e-12) -> tuple[float, float]:
    """Bounded scalar extremum of ``f`` on [a, b]; returns (argopt, value)."""
    if b <= a:
        return a, float(f(a))
    sign = -1.0 if maximize else 1.0
    res = minimize_scalar(lambda x: sign * f(x), bounds=(a, b), method="bounded",
                          options={"xatol": xtol * max(1.0, abs(a) + abs(b)), "maxiter": 500})
    return float(res.x), float(f(res.x))
