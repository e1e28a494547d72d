from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Final

import numpy as np

from freeclt.errors import InvalidMeasure, LowerHalfPlane, NoConvergence, PathAmbiguity
from freeclt.logging_setup import get_logger
from freeclt.models.schemas import AtomicMeasure, Measure, SubordinationSolution
from freeclt.services.expansion import coefficients
from freeclt.services.measures import mean_and_variance, moment
from freeclt.services.transforms import (
    _cauchy_array,
    _reciprocal_array,
    meixner_reciprocal,
    reciprocal_cauchy_derivative,
)

DEFAULT_TOL: Final[float] = 1e-12
DEFAULT_MAX_ITER: Final[int] = 10_000
NEWTON_SWITCH: Final[float] = 1e-3
ORACLE_START: Final[float] = 1e3
AMBIGUITY_DISTANCE: Final[float] = 1e-12
_LEVEL_RATIO: Final[float] = 0.5


@dataclass(frozen=True)
class GridSubordination:
    """Subordination values for many points at once.

    Attributes:
        z: Points the equation was solved at (flattened).
        Z: Solutions, same shape as ``z``.
        iterations: Steps spent per point, summed over continuation levels.
        residual: Final ``|z - n Z + (n-1) F(Z)|`` per point.
    """

    z: np.ndarray
    Z: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray


def _threshold(z, tol: float | None):
    return (DEFAULT_TOL if tol is None else tol) * np.maximum(1.0, np.abs(z))


def _scalar_reciprocal(m: Measure) -> Callable[[complex], complex]:
    if isinstance(m, AtomicMeasure):
        atoms = [(u, w) for u, w in m.atoms]

        def atomic_f(w: complex) -> complex:
            return 1.0 / sum(wt / (w - u) for u, wt in atoms)

        return atomic_f

    def generic_f(w: complex) -> complex:
        return complex(_reciprocal_array(m, np.asarray(w, dtype=complex)))

    return generic_f


def solve_Z(
    m: Measure,
    n: int,
    z: complex,
    tol: float | None = None,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    scaled: bool = False,
) -> SubordinationSolution:
    """Solve ``z = n Z - (n-1) F(Z)`` for the subordination value Z(z).

    Iterates ``w -> (z + (n-1) F(w)) / n`` from ``w = z``. Once the residual is below
    ``NEWTON_SWITCH`` each step first tries Newton on ``g(w) = n w - (n-1) F(w) - z`` and keeps
    it only if it stays above ``Im z / n`` and lowers the residual.

    Args:
        m: Measure being convolved.
        n: Number of free convolution factors (>= 1).
        z: Point in the upper half-plane.
        tol: Relative tolerance; the residual is held below ``tol * max(1, |z|)``.
        max_iter: Iteration budget.
        scaled: Mark ``z`` as ``sqrt(n) * zeta`` so ``Sn = Z / sqrt(n)`` is filled in.

    Raises:
        LowerHalfPlane: If ``Im z <= 0``.
        NoConvergence: If the budget runs out, typically next to the support edge.
    """
    z = complex(z)
    if z.imag <= 0:
        raise LowerHalfPlane(f"solve_Z needs Im z > 0, got {z!r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    threshold = float(_threshold(z, tol))
    root_n = math.sqrt(n)
    if n == 1:
        return SubordinationSolution(
            z=z, n=1, Z=z, Sn=z / root_n if scaled else None, iterations=0, residual=0.0, tol=threshold
        )

    f = _scalar_reciprocal(m)
    floor = z.imag / n
    w = z
    fw = f(w)
    residual = abs(z - n * w + (n - 1) * fw)
    iterations = 0
    while residual > threshold:
        if iterations >= max_iter:
            get_logger().warning(
                "subordination_no_convergence",
                extra={"event_name": "subordination_no_convergence", "n": n, "z": repr(z), "residual": residual},
            )
            raise NoConvergence(
                f"No convergence after {max_iter} iterations at z={z!r} (residual {residual:.3e})",
                max_iter=max_iter,
                residual=residual,
            )
        iterations += 1
        if residual < NEWTON_SWITCH:
            g = n * w - (n - 1) * fw - z
            dg = n - (n - 1) * complex(reciprocal_cauchy_derivative(m, w))
            candidate = w - g / dg if dg != 0 else w
            if candidate.imag >= floor and math.isfinite(abs(candidate)):
                fc = f(candidate)
                rc = abs(z - n * candidate + (n - 1) * fc)
                if rc < residual:
                    w, fw, residual = candidate, fc, rc
                    continue
        w = (z + (n - 1) * fw) / n
        fw = f(w)
        residual = abs(z - n * w + (n - 1) * fw)

    return SubordinationSolution(
        z=z,
        n=n,
        Z=w,
        Sn=w / root_n if scaled else None,
        iterations=iterations,
        residual=residual,
        tol=threshold,
    )


def _refine(
    m: Measure,
    n: int,
    z: np.ndarray,
    w: np.ndarray,
    threshold: np.ndarray,
    iterations: np.ndarray,
    max_iter: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Guarded Newton with a Picard fallback, vectorized over points."""
    floor = z.imag / n
    fw = _reciprocal_array(m, w)
    residual = np.abs(z - n * w + (n - 1) * fw)
    active = residual > threshold
    while np.any(active):
        idx = np.nonzero(active)[0]
        if np.any(iterations[idx] >= max_iter):
            worst = float(np.max(residual[idx]))
            raise NoConvergence(
                f"No convergence after {max_iter} iterations on {idx.size} points (worst residual {worst:.3e})",
                max_iter=max_iter,
                residual=worst,
            )
        za, wa, fa, ra, fl = z[idx], w[idx], fw[idx], residual[idx], floor[idx]
        g = n * wa - (n - 1) * fa - za
        with np.errstate(divide="ignore", invalid="ignore"):
            step = g / (n - (n - 1) * reciprocal_cauchy_derivative(m, wa))

        new_w = (za + (n - 1) * fa) / n
        new_f = np.full_like(wa, np.nan)
        new_r = np.full(wa.shape, np.inf)
        accepted = np.zeros(wa.shape, dtype=bool)
        for damping in (1.0, 0.5):
            cand = wa - damping * step
            ok = ~accepted & np.isfinite(cand) & (cand.imag >= fl)
            if not np.any(ok):
                continue
            fc = _reciprocal_array(m, cand[ok])
            rc = np.abs(za[ok] - n * cand[ok] + (n - 1) * fc)
            better = rc < ra[ok]
            take = np.nonzero(ok)[0][better]
            new_w[take] = cand[take]
            new_f[take] = fc[better]
            new_r[take] = rc[better]
            accepted[take] = True

        picard = ~accepted
        if np.any(picard):
            fp = _reciprocal_array(m, new_w[picard])
            new_f[picard] = fp
            new_r[picard] = np.abs(za[picard] - n * new_w[picard] + (n - 1) * fp)

        w[idx] = new_w
        fw[idx] = new_f
        residual[idx] = new_r
        iterations[idx] += 1
        active = residual > threshold
    return w, residual


def subordinate_grid(
    m: Measure,
    n: int,
    zs,
    tol: float | None = None,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
) -> GridSubordination:
    """Solve the subordination equation at many points by continuation in Im z.

    Every point starts far above the real axis, where ``Z ~ z``, and descends to its own
    height through levels halving the distance; each level is warm-started from the previous
    one and refined by guarded Newton steps with a Picard fallback. The same residual
    contract as ``solve_Z`` holds at the final level.

    Raises:
        LowerHalfPlane: If any ``Im z <= 0``.
        NoConvergence: If a point exhausts ``max_iter`` steps.
    """
    shape = np.shape(zs)
    z = np.asarray(zs, dtype=complex).reshape(-1)
    if np.any(z.imag <= 0):
        raise LowerHalfPlane("subordinate_grid needs Im z > 0 at every point")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    iterations = np.zeros(z.shape, dtype=int)
    if n == 1 or z.size == 0:
        return GridSubordination(z=z, Z=z.copy().reshape(shape), iterations=iterations, residual=np.zeros(z.shape))

    _, variance = mean_and_variance(m)
    top = max(ORACLE_START * n * max(1.0, variance), 10.0 * float(np.max(z.imag)))
    targets = z.imag
    height = np.full(z.shape, top)
    w = z.real + 1j * height
    final_threshold = _threshold(z, tol)
    while True:
        level = z.real + 1j * height
        w, residual = _refine(m, n, level, w, _threshold(level, tol), iterations, max_iter)
        if np.all(height <= targets):
            break
        height = np.maximum(targets, height * _LEVEL_RATIO)

    if np.any(residual > final_threshold):
        raise NoConvergence("Continuation finished above tolerance", max_iter=max_iter, residual=float(residual.max()))
    return GridSubordination(z=z, Z=w.reshape(shape), iterations=iterations, residual=residual)


def _solve_scaled(m: Measure, n: int, z, tol: float | None, max_iter: int) -> tuple[np.ndarray, bool]:
    scalar = np.ndim(z) == 0
    arr = np.asarray(z, dtype=complex)
    if np.any(arr.imag <= 0):
        raise LowerHalfPlane("Transforms of mu_n need Im z > 0")
    solved = subordinate_grid(m, n, math.sqrt(n) * arr, tol, max_iter=max_iter)
    return solved.Z, scalar


def cauchy_mu_n(m: Measure, n: int, z, tol: float | None = None, *, max_iter: int = DEFAULT_MAX_ITER):
    """Cauchy transform of mu_n, the law of the normalized sum of n free copies of ``m``.

    ``G_{mu_n}(z) = sqrt(n) G_m(Z(sqrt(n) z))``, equivalently ``1 / F_{mu_n}(z)`` with
    ``F_{mu_n}(z) = F_m(sqrt(n) S_n(z)) / sqrt(n)``.
    """
    big_z, scalar = _solve_scaled(m, n, z, tol, max_iter)
    g = math.sqrt(n) * _cauchy_array(m, big_z)
    return complex(g) if scalar else g


def reciprocal_mu_n(m: Measure, n: int, z, tol: float | None = None, *, max_iter: int = DEFAULT_MAX_ITER):
    big_z, scalar = _solve_scaled(m, n, z, tol, max_iter)
    f = _reciprocal_array(m, big_z) / math.sqrt(n)
    return complex(f) if scalar else f


def _oracle_coefficients(m: AtomicMeasure, n: int) -> tuple[np.ndarray, np.ndarray]:
    u = m.positions
    w = m.weights
    denominator = np.poly(u)
    numerator = np.zeros(len(u), dtype=float)
    for j in range(len(u)):
        numerator = numerator + w[j] * np.poly(np.delete(u, j))
    return numerator, denominator


def polynomial_oracle(m: AtomicMeasure, n: int, z: complex) -> complex:
    """Independent solution of the subordination equation for atomic measures.

    With ``G = P / Q`` the equation becomes ``n Z P(Z) - z P(Z) - (n-1) Q(Z) = 0``. All roots
    are computed along the segment from ``i * 1e3`` (where ``Z ~ z``) to ``z``, following the
    root nearest to the tracked one with adaptive steps, then polished by Newton steps.

    Raises:
        PathAmbiguity: If the tracked root cannot be told apart from another one.
    """
    if not isinstance(m, AtomicMeasure):
        raise InvalidMeasure("polynomial_oracle needs an atomic measure")
    z = complex(z)
    if z.imag <= 0:
        raise LowerHalfPlane(f"polynomial_oracle needs Im z > 0, got {z!r}")
    if n == 1:
        return z

    numerator, denominator = _oracle_coefficients(m, n)

    def coeffs(point: complex) -> np.ndarray:
        return np.polysub(np.polymul(np.array([n, -point]), numerator), (n - 1) * denominator)

    start = 1j * max(ORACLE_START, 10.0 * abs(z))
    roots = np.roots(coeffs(start))
    current = roots[np.argmin(np.abs(roots - start))]
    t, dt = 0.0, 0.05
    while t < 1.0:
        t_next = min(1.0, t + dt)
        point = start + t_next * (z - start)
        roots = np.roots(coeffs(point))
        dist = np.abs(roots - current)
        order = np.argsort(dist)
        nearest = roots[order[0]]
        runner_up = dist[order[1]] if roots.size > 1 else np.inf
        if roots.size > 1:
            separation = float(np.min(np.abs(np.delete(roots, order[0]) - nearest)))
            if separation < AMBIGUITY_DISTANCE:
                raise PathAmbiguity(f"Two roots within {separation:.1e} of each other at z={point!r}")
        if dist[order[0]] > 0.25 * runner_up:
            dt *= 0.5
            if dt < 1e-12:
                raise PathAmbiguity(f"Root tracking stalled at z={point!r}")
            continue
        current = nearest
        t = t_next
        dt = min(0.25, dt * 1.5)

    c = coeffs(z)
    dc = np.polyder(c)
    for _ in range(3):
        slope = np.polyval(dc, current)
        if slope == 0:
            break
        update = current - np.polyval(c, current) / slope
        if not np.isfinite(update):
            break
        current = update
    return complex(current)


def _check_standardized(m: Measure) -> None:
    mean, variance = mean_and_variance(m)
    if abs(mean) > 1e-9 or abs(variance - 1.0) > 1e-9:
        raise InvalidMeasure(f"Expected a standardized measure, got mean {mean!r} and variance {variance!r}")


def meixner_closeness(
    m: AtomicMeasure,
    n: int,
    grid,
    eps: float = 1e-7,
    *,
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> float:
    """Scaled distance between ``S_n`` and the free Meixner reciprocal transform ``M_n``.

    ``max_x |S_n(x + i eps) - M_n(x + i eps)| * sqrt|4 - (e_n (x - a_n))^2| * n^(3/2)``,
    which stays bounded in n for compactly supported standardized measures.
    """
    _check_standardized(m)
    c = coefficients(moment(m, 3), moment(m, 4), n)
    xs = np.asarray(grid, dtype=float).reshape(-1)
    scaled_offset = c.e_n * (xs - c.a_n)
    if np.any(np.abs(scaled_offset) >= 2.0):
        raise ValueError("Grid points must lie inside the interior window of mu_n")
    zeta = xs + 1j * eps
    s_n = subordinate_grid(m, n, math.sqrt(n) * zeta, tol, max_iter=max_iter).Z / math.sqrt(n)
    m_n = meixner_reciprocal(c.a_n, c.b_n, c.d_n, zeta)
    weight = np.sqrt(np.abs(4.0 - scaled_offset**2))
    return float(np.max(np.abs(s_n - m_n) * weight) * n**1.5)


def second_order_closeness(
    m: AtomicMeasure,
    n: int,
    grid,
    eps: float = 1e-7,
    *,
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> float:
    """``max |G_{mu_n}(z) - (1/S_n + 1/(n S_n^3))| * n^(3/2)`` over ``z = x + i eps``."""
    _check_standardized(m)
    zeta = np.asarray(grid, dtype=float).reshape(-1) + 1j * eps
    big_z = subordinate_grid(m, n, math.sqrt(n) * zeta, tol, max_iter=max_iter).Z
    s_n = big_z / math.sqrt(n)
    g_n = math.sqrt(n) * _cauchy_array(m, big_z)
    approx = 1.0 / s_n + 1.0 / (n * s_n**3)
    return float(np.max(np.abs(g_n - approx)) * n**1.5)


def modulus_lower_bound(m: Measure, n: int, zs, *, tol: float | None = None) -> tuple[float, float]:
    """Smallest ``|Z(z)|`` over the points together with the bound ``sqrt((n-1)/8)``.

    For standardized compactly supported measures and n >= 1000 the minimum stays above the
    bound.
    """
    solved = subordinate_grid(m, n, zs, tol)
    return float(np.min(np.abs(solved.Z))), math.sqrt((n - 1) / 8.0)
