from __future__ import annotations

import math
from typing import Final

import numpy as np
from pydantic import ValidationError
from scipy.optimize import brentq

from freeclt.errors import (
    DegenerateMeasure,
    EmptyTau,
    InvalidMeasure,
    LowerHalfPlane,
    PrecisionLoss,
    TauReconstructionError,
    UnsupportedMoment,
)
from freeclt.logging_setup import get_logger
from freeclt.models.schemas import (
    ArcsineMeasure,
    AtomicMeasure,
    DensityProfile,
    FreeMeixnerMeasure,
    Measure,
    SemicircleMeasure,
    TauRepresentation,
)
from freeclt.services.measures import DEFAULT_MOMENT_CAP, atomic, moment

DEFAULT_CAUCHY_HEIGHT: Final[float] = 1e4
MIN_CAUCHY_HEIGHT: Final[float] = 1e3
RECONSTRUCTION_TOL: Final[float] = 1e-10
_SIGNAL_ULPS: Final[float] = 1e6
_GRID_CHUNK: Final[int] = 256
_SERIES_RADIUS: Final[float] = 0.25
_SERIES_TERMS: Final[int] = 30

_LOG1P_COEFFS = np.array([0.0] + [(-1.0) ** (k + 1) / k for k in range(1, _SERIES_TERMS + 1)])
_CELL_COEFFS = np.array([0.0] + [(-1.0) ** (k + 1) / (k * (k + 1)) for k in range(1, _SERIES_TERMS + 1)])


def _as_upper(z, eps_min: float | None) -> tuple[np.ndarray, bool]:
    scalar = np.ndim(z) == 0
    arr = np.asarray(z, dtype=complex)
    bad = arr.imag <= 0 if eps_min is None else arr.imag < eps_min
    if np.any(bad):
        raise LowerHalfPlane(f"Transforms need Im z > 0, got {arr[bad].flat[0]!r}")
    return arr, scalar


def _out(value: np.ndarray, scalar: bool):
    return complex(value) if scalar else value


def _anchored_root(u: np.ndarray, c: float) -> np.ndarray:
    """sqrt(u**2 - c) on the branch asymptotic to u, continuous on the upper half-plane."""
    with np.errstate(divide="ignore", invalid="ignore"):
        root = u * np.sqrt(1.0 - c / (u * u))
    # Limit from above at u = 0.
    return np.where(u == 0, 1j * math.sqrt(c), root)


def semicircle_reciprocal(z: np.ndarray) -> np.ndarray:
    return 0.5 * (z + _anchored_root(z, 4.0))


def _meixner_params(a: float, b: float, d: float) -> FreeMeixnerMeasure:
    try:
        return FreeMeixnerMeasure(a=a, b=b, d=d)
    except ValidationError as e:
        raise InvalidMeasure(f"meixner({a}, {b}, {d}) is outside the admissible region") from e


def _meixner_eval(m: FreeMeixnerMeasure, z: np.ndarray) -> np.ndarray:
    u = (1.0 - m.b) * (z - m.a)
    return m.a + 0.5 * ((1.0 + m.b) * (z - m.a) + _anchored_root(u, 4.0 * (1.0 - m.d)))


def meixner_reciprocal(a: float, b: float, d: float, z):
    """Reciprocal Cauchy transform of the free Meixner law with parameters (a, b, d).

    ``a + ((1+b)(z-a) + sqrt((1-b)^2 (z-a)^2 - 4(1-d))) / 2`` with the square root taken on
    the branch that behaves like ``(1-b)(z-a)`` at infinity, so the result maps the upper
    half-plane into itself and ``M(z) / z -> 1``.
    """
    m = _meixner_params(a, b, d)
    arr, scalar = _as_upper(z, None)
    return _out(_meixner_eval(m, arr), scalar)


def _arcsine_reciprocal(m: ArcsineMeasure, z: np.ndarray) -> np.ndarray:
    return _anchored_root(z - m.center, m.halfwidth**2)


def _atomic_cauchy(m: AtomicMeasure, z: np.ndarray) -> np.ndarray:
    u = m.positions
    w = m.weights
    return np.sum(w / (z[..., None] - u), axis=-1)


def _grid_cauchy(profile: DensityProfile, z: np.ndarray) -> np.ndarray:
    """Exact Cauchy transform of the piecewise-linear profile.

    Per cell ``[a, b]`` with ``p = p_a + s (u - a)`` the integral is
    ``p_a L + s h phi(w)`` where ``w = h / (z - b)``, ``L = log(1 + w)`` and
    ``phi(w) = (1 + w) L / w - 1``. Far cells use the power series of ``L`` and ``phi``
    to avoid cancellation.
    """
    x = profile.grid
    p = profile.density
    h = profile.dx
    occupied = (p[:-1] > 0) | (p[1:] > 0)
    a = x[:-1][occupied]
    b = x[1:][occupied]
    pa = p[:-1][occupied]
    slope = (p[1:][occupied] - pa) / h

    flat = z.reshape(-1)
    out = np.empty(flat.shape, dtype=complex)
    for start in range(0, flat.size, _GRID_CHUNK):
        zc = flat[start : start + _GRID_CHUNK, None]
        w = h / (zc - b)
        far = np.abs(w) < _SERIES_RADIUS
        w_far = np.where(far, w, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            near_log = np.log(zc - a) - np.log(zc - b)
            near_phi = (1.0 + w) * near_log / w - 1.0
        log_ratio = np.where(far, np.polynomial.polynomial.polyval(w_far, _LOG1P_COEFFS), near_log)
        phi = np.where(far, np.polynomial.polynomial.polyval(w_far, _CELL_COEFFS), near_phi)
        out[start : start + _GRID_CHUNK] = np.sum(pa * log_ratio + slope * h * phi, axis=1)
    return out.reshape(z.shape)


def _cauchy_array(m: Measure, z: np.ndarray) -> np.ndarray:
    if isinstance(m, AtomicMeasure):
        return _atomic_cauchy(m, z)
    if isinstance(m, SemicircleMeasure):
        return 1.0 / semicircle_reciprocal(z)
    if isinstance(m, FreeMeixnerMeasure):
        return 1.0 / _meixner_eval(m, z)
    if isinstance(m, ArcsineMeasure):
        return 1.0 / _arcsine_reciprocal(m, z)
    return _grid_cauchy(m.profile, z)


def _reciprocal_array(m: Measure, z: np.ndarray) -> np.ndarray:
    if isinstance(m, SemicircleMeasure):
        return semicircle_reciprocal(z)
    if isinstance(m, FreeMeixnerMeasure):
        return _meixner_eval(m, z)
    if isinstance(m, ArcsineMeasure):
        return _arcsine_reciprocal(m, z)
    return 1.0 / _cauchy_array(m, z)


def cauchy(m: Measure, z, *, eps_min: float | None = None):
    """Cauchy transform ``G(z) = int m(du) / (z - u)``.

    Args:
        m: Any measure variant.
        z: Complex scalar or array in the upper half-plane.
        eps_min: When given, points with ``Im z >= eps_min`` are accepted (inversion use);
            otherwise ``Im z > 0`` is required.

    Returns:
        ``G(z)`` with the shape of ``z``; ``Im G < 0``.

    Raises:
        LowerHalfPlane: If a point lies below the accepted region.
    """
    arr, scalar = _as_upper(z, eps_min)
    return _out(_cauchy_array(m, arr), scalar)


def reciprocal_cauchy(m: Measure, z, *, eps_min: float | None = None):
    arr, scalar = _as_upper(z, eps_min)
    return _out(_reciprocal_array(m, arr), scalar)


def reciprocal_cauchy_derivative(m: Measure, z, *, eps_min: float | None = None):
    """``F'(z)`` in closed form where available, else by a central difference along Re z."""
    arr, scalar = _as_upper(z, eps_min)
    if isinstance(m, AtomicMeasure):
        diff = arr[..., None] - m.positions
        g = np.sum(m.weights / diff, axis=-1)
        g_prime = -np.sum(m.weights / (diff * diff), axis=-1)
        out = -g_prime / (g * g)
    elif isinstance(m, SemicircleMeasure):
        out = 0.5 * (1.0 + arr / _anchored_root(arr, 4.0))
    elif isinstance(m, FreeMeixnerMeasure):
        u = (1.0 - m.b) * (arr - m.a)
        out = 0.5 * ((1.0 + m.b) + (1.0 - m.b) * u / _anchored_root(u, 4.0 * (1.0 - m.d)))
    elif isinstance(m, ArcsineMeasure):
        out = (arr - m.center) / _arcsine_reciprocal(m, arr)
    else:
        step = 1e-6 * np.maximum(1.0, np.abs(arr))
        out = (_reciprocal_array(m, arr + step) - _reciprocal_array(m, arr - step)) / (2.0 * step)
    return _out(out, scalar)


def _reconstruction_points(scale: float) -> np.ndarray:
    xs = np.linspace(-2.0, 2.0, 5) * scale
    ys = np.array([0.25, 0.5, 1.0, 2.0]) * scale
    return (xs[None, :] + 1j * ys[:, None]).reshape(-1)


def tau_from_atomic(m: AtomicMeasure) -> TauRepresentation:
    """Atoms of tau in ``F(z) = z + int tau(du) / (u - z)`` for a centered atomic measure.

    The tau atoms are the zeros of the numerator of ``G`` (one per gap between consecutive
    atoms, bracketed and found by Brent's method); their weights are the residues of
    ``z - F(z)``, equal to ``1 / sum_j w_j / (t - u_j)^2``.

    Raises:
        DegenerateMeasure: For a single atom.
        InvalidMeasure: If ``m`` is not centered.
        TauReconstructionError: If the rebuilt ``F`` misses the direct one at the check points.
    """
    if not isinstance(m, AtomicMeasure):
        raise InvalidMeasure(f"tau_from_atomic expects an atomic measure, got {m.kind}")
    if len(m.atoms) < 2:
        raise DegenerateMeasure("A single atom has no tau representation (F(z) = z - u)")
    u = m.positions
    w = m.weights
    scale = max(1.0, float(np.max(np.abs(u))))
    mean = moment(m, 1)
    if abs(mean) > 1e-10 * scale:
        raise InvalidMeasure(f"tau_from_atomic expects a centered measure, got mean {mean!r}")

    def g_real(x: float) -> float:
        return float(np.sum(w / (x - u)))

    roots: list[float] = []
    for lo, hi in zip(u[:-1], u[1:]):
        gap = hi - lo
        xtol = 1e-14 * max(1.0, abs(lo), abs(hi))
        roots.append(brentq(g_real, lo + 1e-10 * gap, hi - 1e-10 * gap, xtol=xtol, rtol=4 * np.finfo(float).eps))
    t = np.array(roots)
    weights = 1.0 / np.sum(w / (t[:, None] - u) ** 2, axis=1)

    zs = _reconstruction_points(scale)
    rebuilt = zs + np.sum(weights / (t - zs[:, None]), axis=1)
    direct = _reciprocal_array(m, zs)
    err = float(np.max(np.abs(rebuilt - direct) / np.maximum(1.0, np.abs(direct))))
    if err > RECONSTRUCTION_TOL:
        raise TauReconstructionError(f"Rebuilt F misses the direct transform by {err:.3e}")

    return TauRepresentation(
        atoms=tuple(zip(t.tolist(), weights.tolist())),
        source_moments=tuple(moment(m, k) for k in range(2, 9)),
        source_atoms=m.atoms,
    )


def moments_from_tau(t: TauRepresentation, k: int) -> float:
    """m_k of the measure whose F is ``z + int tau(du) / (u - z)``.

    Sum over l = 1..k//2 of the coefficient of x^(k-2l) in ``(sum_s m_s(tau) x^s)^l``,
    i.e. over compositions s_1 + ... + s_l = k - 2l.
    """
    if k < 2 or k > DEFAULT_MOMENT_CAP:
        raise UnsupportedMoment(f"moments_from_tau supports 2 <= k <= {DEFAULT_MOMENT_CAP}, got {k}")
    series = np.array([t.moment(s) for s in range(k - 1)])
    power = np.array([1.0])
    total = 0.0
    for l in range(1, k // 2 + 1):
        power = np.convolve(power, series)[: k - 1]
        j = k - 2 * l
        if j < power.size:
            total += float(power[j])
    return total


def moments_from_cauchy(
    m: Measure,
    k: int,
    y: float = DEFAULT_CAUCHY_HEIGHT,
    *,
    known: list[float] | None = None,
) -> float:
    """Recover m_k from the Cauchy transform on the imaginary axis.

    ``Re[(iy)^(k+1) (G(iy) - sum_{j<k} m_j (iy)^(-j-1))]`` tends to m_k as y grows, but the
    subtraction cancels about ``y^k`` ulps of G. The height is lowered to the largest value
    that keeps the remainder at least 1e6 ulps above rounding.

    Args:
        m: Measure whose transform is sampled.
        k: Moment order.
        y: Requested height (>= 1e3).
        known: Moments ``m_0 .. m_{k-1}``; computed with ``moment`` when omitted.

    Raises:
        PrecisionLoss: If no height keeps both the cancellation and the truncation error small.
    """
    if y < MIN_CAUCHY_HEIGHT:
        raise ValueError(f"Height must be >= {MIN_CAUCHY_HEIGHT:g}, got {y!r}")
    if k < 0 or k > DEFAULT_MOMENT_CAP:
        raise UnsupportedMoment(f"Moment order {k} outside the supported range 0..{DEFAULT_MOMENT_CAP}")
    if known is None:
        known = [moment(m, j) for j in range(k)]
    if len(known) < k:
        raise ValueError(f"Need {k} known moments, got {len(known)}")

    scale = max(1.0, math.sqrt(abs(known[2]))) if k > 2 else 1.0
    height = y
    if k > 0:
        cap = scale * (1.0 / (np.finfo(float).eps * _SIGNAL_ULPS)) ** (1.0 / k)
        if cap < 10.0 * scale:
            raise PrecisionLoss(f"Moment {k} cannot be recovered from G in double precision")
        if cap < y:
            height = cap
            get_logger().debug(
                "cauchy_height_reduced",
                extra={"event_name": "cauchy_height_reduced", "k": k, "requested": y, "used": height},
            )

    z = 1j * height
    partial = sum(known[j] * z ** (-j - 1) for j in range(k))
    return float((z ** (k + 1) * (cauchy(m, z) - partial)).real)


def tau_mass_from_transform(m: Measure) -> float:
    """``Im F(i) - 1``: the mass of the Nevanlinna measure in the ``(1 + uz)/(u - z)`` form.

    For the tau of ``tau_from_atomic`` it equals ``sum tau_j / (1 + t_j^2)``.
    """
    return float(reciprocal_cauchy(m, 1j).imag) - 1.0


def _measure_from_tau(t: TauRepresentation) -> AtomicMeasure:
    u = t.positions
    tw = t.weights
    total = float(tw.sum())

    def f_real(x: float) -> float:
        return x + float(np.sum(tw / (u - x)))

    left = u[0] - (abs(u[0]) + total + 1.0)
    right = u[-1] + (abs(u[-1]) + total + 1.0)
    edges = [left, *u.tolist(), right]
    roots: list[float] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        gap = hi - lo
        a = lo if lo == left else lo + 1e-10 * gap
        b = hi if hi == right else hi - 1e-10 * gap
        roots.append(brentq(f_real, a, b, xtol=1e-14 * max(1.0, abs(lo), abs(hi)), rtol=4 * np.finfo(float).eps))
    r = np.array(roots)
    masses = 1.0 / (1.0 + np.sum(tw / (u - r[:, None]) ** 2, axis=1))
    return atomic(zip(r.tolist(), masses.tolist()), normalize=True)


def truncate_tau(t: TauRepresentation, n: int) -> tuple[TauRepresentation, AtomicMeasure]:
    """Drop tau atoms beyond ``sqrt(n-1)/pi`` and rebuild the measure mu*.

    Returns:
        The truncated tau and the atomic measure with ``F(z) = z + int_kept tau(du)/(u - z)``.
        When nothing is removed and ``t`` remembers its source atoms, that measure is
        returned unchanged.

    Raises:
        EmptyTau: If every atom lies beyond the cutoff.
    """
    if n < 2:
        raise ValueError(f"truncate_tau needs n >= 2, got {n}")
    cutoff = math.sqrt(n - 1) / math.pi
    kept = tuple((u, w) for u, w in t.atoms if abs(u) <= cutoff)
    if not kept:
        raise EmptyTau(f"No tau atom lies within the cutoff {cutoff:.6g}")
    if len(kept) == len(t.atoms):
        if t.source_atoms is not None:
            return t, AtomicMeasure(atoms=t.source_atoms)
        return t, _measure_from_tau(t)
    truncated = TauRepresentation(atoms=kept)
    return truncated, _measure_from_tau(truncated)
