from __future__ import annotations

import math
from typing import Iterable, overload

import numpy as np
from pydantic import ValidationError

from freeclt.errors import (
    AtomicDensity,
    DegenerateMeasure,
    InvalidMeasure,
    NonIntegrable,
    UnsupportedMoment,
)
from freeclt.models.schemas import (
    ATOM_MERGE_DISTANCE,
    MASS_TOLERANCE,
    ArcsineMeasure,
    AtomicMeasure,
    DensityProfile,
    FreeMeixnerMeasure,
    GridDensityMeasure,
    Measure,
    SemicircleMeasure,
    trapezoid_mass,
)
from freeclt.services.quadrature import EDGE_QUADRATURE_ORDER, gauss_legendre, edge_integral

DEFAULT_MOMENT_CAP = 16
MEIXNER_MASS_TOLERANCE = 1e-8


def atomic(pairs: Iterable[tuple[float, float]], *, normalize: bool = False) -> AtomicMeasure:
    """Build an atomic measure from (position, weight) pairs in any order.

    Atoms closer than ``ATOM_MERGE_DISTANCE`` are merged with summed weights; zero-weight
    atoms are dropped.

    Args:
        pairs: Iterable of ``(position, weight)``.
        normalize: Rescale weights to total mass 1 instead of rejecting other totals.

    Returns:
        A validated ``AtomicMeasure``.

    Raises:
        InvalidMeasure: On negative weights, empty input or a mass different from 1.
    """
    items = sorted((float(u), float(w)) for u, w in pairs)
    if any(w < 0 for _, w in items):
        raise InvalidMeasure("Atom weights must be >= 0")
    merged: list[list[float]] = []
    for u, w in items:
        if w == 0:
            continue
        if merged and u - merged[-1][0] < ATOM_MERGE_DISTANCE:
            merged[-1][1] += w
        else:
            merged.append([u, w])
    if not merged:
        raise InvalidMeasure("An atomic measure needs at least one atom with positive weight")
    total = math.fsum(w for _, w in merged)
    if normalize:
        merged = [[u, w / total] for u, w in merged]
    elif abs(total - 1.0) > MASS_TOLERANCE:
        raise InvalidMeasure(f"Atom weights sum to {total!r}, expected 1")
    try:
        return AtomicMeasure(atoms=tuple((u, w) for u, w in merged))
    except ValidationError as e:
        raise InvalidMeasure(str(e)) from e


def free_meixner(a: float, b: float, d: float) -> FreeMeixnerMeasure:
    """Build a free Meixner law, rejecting parameters outside the absolutely continuous regime."""
    try:
        m = FreeMeixnerMeasure(a=a, b=b, d=d)
    except ValidationError as e:
        raise InvalidMeasure(f"meixner({a}, {b}, {d}) is not admissible: {e.errors()[0]['msg']}") from e
    mass = edge_integral(lambda x: density_at(m, x), m.a, m.halfwidth)
    if abs(mass - 1.0) > MEIXNER_MASS_TOLERANCE:
        raise InvalidMeasure(f"meixner({a}, {b}, {d}) carries atoms: absolutely continuous mass {mass!r}")
    return m


def support_of(m: Measure) -> tuple[float, float]:
    if isinstance(m, AtomicMeasure):
        return float(m.atoms[0][0]), float(m.atoms[-1][0])
    if isinstance(m, SemicircleMeasure):
        return -2.0, 2.0
    if isinstance(m, FreeMeixnerMeasure):
        return m.support
    if isinstance(m, ArcsineMeasure):
        return m.center - m.halfwidth, m.center + m.halfwidth
    return m.profile.support


def _profile_moment(profile: DensityProfile, k: int) -> float:
    p = profile.density
    x = profile.grid
    lo, hi = profile.support
    outside = (x < lo - 1e-9 * profile.dx) | (x > hi + 1e-9 * profile.dx)
    if np.any(outside):
        leaked = trapezoid_mass(np.where(outside, p, 0.0), profile.dx)
        if leaked > profile.tolerance:
            raise NonIntegrable(f"Profile carries mass {leaked!r} outside its declared support {profile.support}")
    # Piecewise-linear integrand times u**k is a polynomial of degree k + 1 on each cell.
    t, w = gauss_legendre(k // 2 + 2)
    half = 0.5 * profile.dx
    mids = x[:-1] + half
    nodes = mids[:, None] + half * t[None, :]
    lam = 0.5 * (1.0 + t)
    vals = p[:-1, None] * (1.0 - lam)[None, :] + p[1:, None] * lam[None, :]
    total = float(np.sum(w[None, :] * nodes**k * vals) * half)
    if not math.isfinite(total):
        raise NonIntegrable(f"Moment {k} of the profile is not finite")
    return total


def moment(m: Measure, k: int, *, cap: int = DEFAULT_MOMENT_CAP) -> float:
    """Return the k-th moment ``int u**k m(du)``.

    Raises:
        UnsupportedMoment: If ``k`` is negative or exceeds ``cap``.
        NonIntegrable: If a grid density has mass it cannot account for.
    """
    if k < 0 or k > cap:
        raise UnsupportedMoment(f"Moment order {k} outside the supported range 0..{cap}")
    if k == 0:
        return 1.0
    if isinstance(m, AtomicMeasure):
        return math.fsum(w * u**k for u, w in m.atoms)
    if isinstance(m, SemicircleMeasure):
        if k % 2:
            return 0.0
        half = k // 2
        return float(math.comb(k, half) // (half + 1))
    if isinstance(m, FreeMeixnerMeasure):
        return edge_integral(lambda x: x**k * density_at(m, x), m.a, m.halfwidth)
    if isinstance(m, ArcsineMeasure):
        # 1/(pi sqrt(h^2 - (x-c)^2)) dx becomes d(theta)/pi under x = c + h sin(theta).
        t, w = gauss_legendre(EDGE_QUADRATURE_ORDER)
        x = m.center + m.halfwidth * np.sin(0.5 * math.pi * t)
        return float(np.dot(w, x**k) / 2.0)
    return _profile_moment(m.profile, k)


def mean_and_variance(m: Measure) -> tuple[float, float]:
    m1 = moment(m, 1)
    if isinstance(m, AtomicMeasure):
        var = math.fsum(w * (u - m1) ** 2 for u, w in m.atoms)
    else:
        var = moment(m, 2) - m1 * m1
    return m1, var


def standardize(m: AtomicMeasure) -> AtomicMeasure:
    """Affine image of ``m`` with mean 0 and variance 1; weights are unchanged.

    Raises:
        DegenerateMeasure: If ``m`` is a Dirac mass.
    """
    if not isinstance(m, AtomicMeasure):
        raise InvalidMeasure(f"standardize expects an atomic measure, got {m.kind}")
    mean, var = mean_and_variance(m)
    if not var > 0:
        raise DegenerateMeasure("Cannot standardize a measure with zero variance")
    scale = math.sqrt(var)
    return AtomicMeasure(atoms=tuple(((u - mean) / scale, w) for u, w in m.atoms))


@overload
def density_at(m: Measure, x: float) -> float: ...


@overload
def density_at(m: Measure, x: np.ndarray) -> np.ndarray: ...


def density_at(m: Measure, x):
    """Evaluate the density of a non-atomic measure; accepts scalars or arrays.

    Raises:
        AtomicDensity: For atomic measures.
    """
    if isinstance(m, AtomicMeasure):
        raise AtomicDensity("Atomic measures have no density")
    xs = np.asarray(x, dtype=float)
    if isinstance(m, SemicircleMeasure):
        out = np.sqrt(np.clip(4.0 - xs * xs, 0.0, None)) / (2.0 * math.pi)
    elif isinstance(m, FreeMeixnerMeasure):
        y = xs - m.a
        radicand = np.clip(4.0 * (1.0 - m.d) - (1.0 - m.b) ** 2 * y * y, 0.0, None)
        f = m.b * xs * xs + m.a * (1.0 - m.b) * xs + 1.0 - m.d
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(radicand > 0, np.sqrt(radicand) / (2.0 * math.pi * f), 0.0)
    elif isinstance(m, ArcsineMeasure):
        gap = m.halfwidth**2 - (xs - m.center) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(gap > 0, 1.0 / (math.pi * np.sqrt(np.where(gap > 0, gap, 1.0))), 0.0)
    else:
        profile = m.profile
        out = np.interp(xs, profile.grid, profile.density, left=0.0, right=0.0)
    return float(out) if np.ndim(out) == 0 else out


def tabulate(m: Measure, lo: float, hi: float, points: int, *, tolerance: float = 1e-2) -> DensityProfile:
    """Sample a non-atomic density on ``points`` uniform nodes of ``[lo, hi]``.

    The stored tolerance is widened to the observed trapezoid mass deficit, which is
    visible for densities with inverse square-root edges.
    """
    if points < 2 or not lo < hi:
        raise InvalidMeasure(f"Invalid grid {lo}:{hi}:{points}")
    dx = (hi - lo) / (points - 1)
    x = lo + dx * np.arange(points, dtype=float)
    values = np.asarray(density_at(m, x), dtype=float)
    if not np.all(np.isfinite(values)):
        # Integrable poles at grid nodes (arcsine edges) carry no mass of their own.
        values = np.where(np.isfinite(values), values, 0.0)
    s_lo, s_hi = support_of(m)
    support = (max(lo, s_lo), min(hi, s_hi))
    if support[0] > support[1]:
        raise InvalidMeasure(f"Grid {lo}:{hi} misses the support {s_lo}:{s_hi}")
    deficit = abs(1.0 - trapezoid_mass(values, dx))
    return DensityProfile(
        x0=lo,
        dx=dx,
        values=tuple(values.tolist()),
        support=support,
        tolerance=max(tolerance, deficit + 1e-12),
    )


def dilate(profile: DensityProfile, lam: float) -> DensityProfile:
    """Push a profile forward under ``x -> lam * x`` (``lam > 0``)."""
    if not lam > 0:
        raise InvalidMeasure(f"Dilation factor must be > 0, got {lam}")
    return DensityProfile(
        x0=profile.x0 * lam,
        dx=profile.dx * lam,
        values=tuple((profile.density / lam).tolist()),
        support=(profile.support[0] * lam, profile.support[1] * lam),
        tolerance=profile.tolerance,
    )


def profile_moment(profile: DensityProfile, k: int, *, cap: int = DEFAULT_MOMENT_CAP) -> float:
    return moment(GridDensityMeasure(profile=profile), k, cap=cap)
