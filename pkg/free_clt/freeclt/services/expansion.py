from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Final, Literal

import numpy as np
from pydantic import ValidationError

from freeclt.errors import EmptyWindow, MomentInconsistency
from freeclt.models.schemas import CLTCoefficients, DensityProfile, FreeMeixnerMeasure, GridSpec, trapezoid_mass
from freeclt.services.measures import density_at
from freeclt.services.transforms import meixner_reciprocal

ExpansionVariant = Literal["v_n", "th7"]

MOMENT_SLACK: Final[float] = 1e-12
SYMMETRIC_THRESHOLD: Final[float] = 1e-12
_BOUNDARY_LIFT: Final[float] = 1e-13


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of ``value ~ constant * n^(-exponent)`` on a log-log scale."""

    exponent: float
    constant: float


def coefficients(m3: float, m4: float, n: int) -> CLTCoefficients:
    """Free Meixner parameters matching the first four moments of mu_n.

    ``a_n = m3/sqrt(n)``, ``b_n = (m4 - m3^2 - 1)/n``, ``d_n = (m4 - m3^2)/n`` and
    ``e_n = (1 - b_n)/sqrt(1 - d_n)``.

    Raises:
        MomentInconsistency: If ``m4 < 1 + m3^2`` or n is too small for ``b_n, d_n < 1``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if m4 < 1.0 + m3 * m3 - MOMENT_SLACK:
        raise MomentInconsistency(f"m4 = {m4!r} is below 1 + m3^2 = {1.0 + m3 * m3!r}")
    a_n = m3 / math.sqrt(n)
    b_n = (m4 - m3 * m3 - 1.0) / n
    d_n = (m4 - m3 * m3) / n
    if b_n >= 1.0 or d_n >= 1.0:
        raise MomentInconsistency(f"n = {n} is too small for m3 = {m3!r}, m4 = {m4!r} (needs b_n, d_n < 1)")
    e_n = (1.0 - b_n) / math.sqrt(1.0 - d_n)
    try:
        return CLTCoefficients(n=n, m3=m3, m4=m4, a_n=a_n, b_n=b_n, d_n=d_n, e_n=e_n)
    except ValidationError as e:
        raise MomentInconsistency(str(e)) from e


def semicircle_density(x):
    xs = np.asarray(x, dtype=float)
    out = np.sqrt(np.clip(4.0 - xs * xs, 0.0, None)) / (2.0 * math.pi)
    return float(out) if np.ndim(out) == 0 else out


def _expansion(c: CLTCoefficients, x, quadratic: float):
    xs = np.asarray(x, dtype=float)
    a, d = c.a_n, c.d_n
    prefactor = 1.0 + 0.5 * d - a * a - 1.0 / c.n - a * xs - quadratic * xs * xs
    out = prefactor * semicircle_density(c.e_n * xs)
    return float(out) if np.ndim(out) == 0 else out


def v_n_density(c: CLTCoefficients, x):
    """Edgeworth-type approximation to the density of mu_n, shifted by ``a_n``.

    ``(1 + d/2 - a^2 - 1/n - a x - (b - a^2 - 1/n) x^2) p_w(e x)``; compare it with
    ``p_n(x + a_n)``.
    """
    return _expansion(c, x, c.b_n - c.a_n**2 - 1.0 / c.n)


def th7_density(c: CLTCoefficients, x):
    """Variant of ``v_n_density`` with ``b - 1/n`` as the quadratic coefficient."""
    return _expansion(c, x, c.b_n - 1.0 / c.n)


def l1_leading_term(m3: float, m4: float, n: int) -> float:
    """Leading behaviour of ``||mu_n - w||_1``.

    ``2|m3|/(pi sqrt(n))`` when the third moment is nonzero, else ``2|m4 - 2|/(pi n)``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if abs(m3) > SYMMETRIC_THRESHOLD:
        return 2.0 * abs(m3) / (math.pi * math.sqrt(n))
    return 2.0 * abs(m4 - 2.0) / (math.pi * n)


def meixner_law(c: CLTCoefficients) -> FreeMeixnerMeasure:
    return FreeMeixnerMeasure(a=c.a_n, b=c.b_n, d=c.d_n)


def meixner_density_n(c: CLTCoefficients, x):
    """Density of the free Meixner law with parameters ``(a_n, b_n, d_n)``."""
    return density_at(meixner_law(c), x)


def meixner_correction(c: CLTCoefficients, x):
    """``q_n(x) = -Im(M_n(x + i0)^(-3)) / pi``, the next-order density correction.

    Tends to ``(x^2 - 1) p_w(x)`` as n grows.
    """
    xs = np.asarray(x, dtype=float)
    z = xs + 1j * _BOUNDARY_LIFT * np.maximum(1.0, np.abs(xs))
    m_n = meixner_reciprocal(c.a_n, c.b_n, c.d_n, z)
    out = -np.imag(1.0 / m_n**3) / math.pi
    return float(out) if np.ndim(out) == 0 else out


def correction_limit(c: CLTCoefficients, x):
    """``((x - a_n)^2 - 1) p_w(x)``, the closed form ``meixner_correction`` approaches."""
    xs = np.asarray(x, dtype=float)
    out = ((xs - c.a_n) ** 2 - 1.0) * semicircle_density(xs)
    return float(out) if np.ndim(out) == 0 else out


def _variant(variant: ExpansionVariant):
    if variant == "v_n":
        return v_n_density
    if variant == "th7":
        return th7_density
    raise ValueError(f"Unknown expansion variant {variant!r}")


def expansion_profile(c: CLTCoefficients, grid: GridSpec, *, variant: ExpansionVariant = "v_n") -> DensityProfile:
    """Tabulate the expansion at ``x - a_n`` on a grid, so it lines up with ``p_n(x)``.

    Negative values near the edges are clipped and accounted for in the tolerance.
    """
    density = _variant(variant)
    x = grid.nodes()
    raw = np.asarray(density(c, x - c.a_n), dtype=float)
    clipped = trapezoid_mass(np.clip(-raw, 0.0, None), grid.dx)
    values = np.clip(raw, 0.0, None)
    support = (max(grid.lo, c.a_n - c.edge_radius), min(grid.hi, c.a_n + c.edge_radius))
    return DensityProfile(
        x0=grid.lo,
        dx=grid.dx,
        values=tuple(values.tolist()),
        support=support,
        tolerance=abs(1.0 - trapezoid_mass(values, grid.dx)) + clipped + 1e-12,
    )


def expansion_residual(
    profile: DensityProfile,
    c: CLTCoefficients,
    *,
    variant: ExpansionVariant = "th7",
    margin: float | None = None,
    window_constant: float = 1.0,
) -> float:
    """Weighted interior residual of the expansion against an inverted density.

    ``max |p_n(x) - approx(x - a_n)| * sqrt(4 - (e_n (x - a_n))^2)`` over grid nodes of the
    window ``support_window(c, margin)``.

    Raises:
        EmptyWindow: If no grid node falls inside the window.
    """
    from freeclt.services.density import support_window

    lo, hi = support_window(c, margin, window_constant=window_constant)
    x = profile.grid
    inside = (x >= lo) & (x <= hi)
    if not np.any(inside):
        raise EmptyWindow(f"No grid node falls in the window [{lo}, {hi}]")
    shifted = x[inside] - c.a_n
    approx = np.asarray(_variant(variant)(c, shifted), dtype=float)
    weight = np.sqrt(np.clip(4.0 - (c.e_n * shifted) ** 2, 0.0, None))
    return float(np.max(np.abs(profile.density[inside] - approx) * weight))


def fit_rate(ns, values) -> RateFit:
    """Fit ``value ~ C n^(-alpha)`` by least squares on ``log value`` against ``log n``.

    Raises:
        ValueError: With fewer than two points or non-positive values.
    """
    n_arr = np.asarray(ns, dtype=float)
    v_arr = np.asarray(values, dtype=float)
    if n_arr.size < 2 or n_arr.size != v_arr.size:
        raise ValueError("fit_rate needs at least two (n, value) pairs")
    if np.any(v_arr <= 0) or np.any(n_arr <= 0):
        raise ValueError("fit_rate needs positive n and positive values")
    slope, intercept = np.polyfit(np.log(n_arr), np.log(v_arr), 1)
    return RateFit(exponent=float(-slope), constant=float(math.exp(intercept)))


def expected_chi_deficit(m3: float, n: int) -> float:
    """Leading term ``m3^2 / (6 n)`` of ``chi(w) - chi(mu_n)``."""
    return m3 * m3 / (6.0 * n)


def expected_fisher_excess(m3: float, n: int) -> float:
    """Leading term ``m3^2 / n`` of ``Phi(mu_n) - 1``."""
    return m3 * m3 / n
