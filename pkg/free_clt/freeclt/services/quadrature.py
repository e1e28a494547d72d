from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np

EDGE_QUADRATURE_ORDER = 256


@lru_cache(maxsize=8)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def edge_nodes(center: float, radius: float, *, order: int = EDGE_QUADRATURE_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for integrals over ``[center - radius, center + radius]``.

    The substitution ``x = center + radius * sin(theta)`` turns a density with square-root
    (or inverse square-root) edges into a smooth function of ``theta``, which Gauss-Legendre
    then integrates spectrally. The returned weights already contain the Jacobian
    ``radius * cos(theta)``.

    Args:
        center: Midpoint of the interval.
        radius: Half-width of the interval (> 0).
        order: Number of Gauss-Legendre nodes in ``theta``.

    Returns:
        A tuple ``(x, w)`` such that ``sum(w * f(x))`` approximates the integral of ``f``.
    """
    t, w = gauss_legendre(order)
    theta = 0.5 * np.pi * t
    x = center + radius * np.sin(theta)
    jac = 0.5 * np.pi * radius * np.cos(theta)
    return x, w * jac


def edge_integral(
    func: Callable[[np.ndarray], np.ndarray],
    center: float,
    radius: float,
    *,
    order: int = EDGE_QUADRATURE_ORDER,
) -> float:
    x, w = edge_nodes(center, radius, order=order)
    return float(np.dot(w, func(x)))


def semicircle_gauss_rule(count: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule for the standard semicircle law (Chebyshev polynomials of the second kind).

    The ``count`` nodes ``2 cos(k pi / (count + 1))`` with weights
    ``2 sin^2(k pi / (count + 1)) / (count + 1)`` integrate polynomials of degree up to
    ``2 count - 1`` against the semicircle law exactly. The weights sum to 1, so the rule
    doubles as a discrete probability measure approximating the semicircle.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    k = np.arange(count, 0, -1, dtype=float)
    angle = k * np.pi / (count + 1)
    nodes = 2.0 * np.cos(angle)
    weights = 2.0 * np.sin(angle) ** 2 / (count + 1)
    return nodes, weights / weights.sum()


def log_moment_antiderivative(k: int, v: np.ndarray) -> np.ndarray:
    """Antiderivative of ``v**k * log|v|`` vanishing at ``v = 0``."""
    v = np.asarray(v, dtype=float)
    p = k + 1
    with np.errstate(divide="ignore", invalid="ignore"):
        out = v**p * (np.log(np.abs(v)) / p - 1.0 / p**2)
    return np.where(v == 0.0, 0.0, out)


def integrate_log_polynomial(coeffs: np.ndarray, v0: np.ndarray, v1: np.ndarray) -> np.ndarray:
    """Exact ``int_{v0}^{v1} q(v) log|v| dv`` for ``q(v) = sum_k coeffs[k] v**k``."""
    total = np.zeros(np.broadcast(v0, v1, coeffs[0]).shape, dtype=float)
    for k in range(len(coeffs)):
        total = total + coeffs[k] * (log_moment_antiderivative(k, v1) - log_moment_antiderivative(k, v0))
    return total
