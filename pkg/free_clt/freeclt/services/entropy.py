from __future__ import annotations

import concurrent.futures
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Final, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.signal import fftconvolve

from freeclt.errors import NonIntegrableCube, NonphysicalProfile, OutsideSupport, UnboundedSupport
from freeclt.logging_setup import get_logger
from freeclt.models.schemas import ENTROPY_OFFSET, DensityProfile, EntropyReport, EpsPolicy, GridSpec, Measure, trapezoid_mass
from freeclt.services.density import invert_density
from freeclt.services.expansion import RateFit, expected_chi_deficit, expected_fisher_excess, fit_rate
from freeclt.services.measures import moment
from freeclt.services.quadrature import gauss_legendre, integrate_log_polynomial
from freeclt.services.subordination import DEFAULT_MAX_ITER

FISHER_FACTOR: Final[float] = 4.0 * math.pi**2 / 3.0
NONPHYSICAL_CHI: Final[float] = -10.0
MASS_SLACK: Final[float] = 0.01
EDGE_BAND: Final[float] = 0.05
EDGE_MIN_CELLS: Final[int] = 10
_EXACT_KERNEL_RANGE: Final[int] = 4
_KERNEL_GL_ORDER: Final[int] = 16
_SUPPORT_THRESHOLD: Final[float] = 1e-9
_CELL_GL_ORDER: Final[int] = 8
_LOG2: Final[float] = math.log(2.0)

# Overlap weights of the hat functions l0(s) = 1 - s, l1(s) = s on the unit cell:
# w_ab(r) = int l_a(s) l_b(s + r) ds over s, s + r in [0, 1], for 0 <= r <= 1.
_L = Polynomial([1.0, -1.0])
_R = Polynomial([0.0, 1.0])
_OVERLAP: Final[dict[tuple[int, int], Polynomial]] = {
    (0, 0): _L**2 / 2 - _L**3 / 6,
    (0, 1): _L**2 / 2 + _R * _L - _L**3 / 3 - _R * _L**2 / 2,
    (1, 0): _L**3 / 6,
    (1, 1): _L**3 / 3 + _R * _L**2 / 2,
}


@dataclass(frozen=True)
class RateReport:
    """Per-n entropy reports with the fitted decay of the deficits.

    ``chi_fit`` and ``fisher_fit`` are None when some deficit is not positive (e.g. for
    semicircle input, where both vanish up to quadrature noise).
    """

    reports: tuple[EntropyReport, ...]
    m3: float
    chi_fit: RateFit | None
    fisher_fit: RateFit | None

    @property
    def expected_chi_constant(self) -> float:
        return self.m3 * self.m3 / 6.0

    @property
    def expected_fisher_constant(self) -> float:
        return self.m3 * self.m3

    @property
    def scaled_chi_deficit(self) -> float:
        last = self.reports[-1]
        return last.n * last.chi_deficit

    @property
    def scaled_fisher_excess(self) -> float:
        last = self.reports[-1]
        return last.n * last.fisher_excess


def _compose(poly: Polynomial, shift: float, sign: float) -> np.ndarray:
    """Coefficients of ``poly(shift + sign * v)`` in ascending powers of v."""
    inner = Polynomial([shift, sign])
    out = Polynomial([0.0])
    for c in poly.coef[::-1]:
        out = out * inner + c
    return out.coef


def _exact_kernel(a: int, b: int, m: int) -> float:
    forward = _compose(_OVERLAP[(a, b)], -float(m), 1.0)
    backward = _compose(_OVERLAP[(b, a)], float(m), -1.0)
    return float(
        integrate_log_polynomial(forward, np.float64(m), np.float64(m + 1))
        + integrate_log_polynomial(backward, np.float64(m - 1), np.float64(m))
    )


@lru_cache(maxsize=16)
def _cell_kernels(cells: int) -> dict[tuple[int, int], np.ndarray]:
    """``J_ab(m) = int int log|m + t - s| l_a(s) l_b(t) ds dt`` for ``|m| < cells``.

    Entry ``m + cells - 1`` of each array holds offset m. Offsets close to the diagonal use the
    closed-form log-polynomial antiderivative; the rest use Gauss-Legendre in ``r = t - s``.
    """
    offsets = np.arange(-(cells - 1), cells, dtype=float)
    t, w = gauss_legendre(_KERNEL_GL_ORDER)
    r = 0.5 * (t + 1.0)
    w = 0.5 * w
    log_plus = np.log(np.abs(offsets[:, None] + r[None, :]))
    log_minus = np.log(np.abs(offsets[:, None] - r[None, :]))
    kernels: dict[tuple[int, int], np.ndarray] = {}
    for a, b in _OVERLAP:
        forward = _OVERLAP[(a, b)](r)
        backward = _OVERLAP[(b, a)](r)
        with np.errstate(divide="ignore", invalid="ignore"):
            values = log_plus @ (w * forward) + log_minus @ (w * backward)
        for m in range(-min(_EXACT_KERNEL_RANGE, cells - 1), min(_EXACT_KERNEL_RANGE, cells - 1) + 1):
            values[m + cells - 1] = _exact_kernel(a, b, m)
        values.setflags(write=False)
        kernels[(a, b)] = values
    return kernels


@dataclass(frozen=True)
class _EdgeFit:
    alpha: float
    constant: float
    edge: float


def _fit_edge(x: np.ndarray, p: np.ndarray, edge_index: int, direction: int, dx: float, band: float) -> _EdgeFit | None:
    """Fit ``p ~ C * dist^alpha`` near one edge; the edge is searched within a cell."""
    best: tuple[float, _EdgeFit] | None = None
    positive = p > 0
    for theta in np.linspace(0.0, 1.0, 21):
        edge = x[edge_index] + direction * theta * dx
        dist = direction * (edge - x)
        sel = positive & (dist >= EDGE_MIN_CELLS * dx) & (dist <= band)
        if np.count_nonzero(sel) < 4:
            continue
        coef, residuals, *_ = np.polyfit(np.log(dist[sel]), np.log(p[sel]), 1, full=True)
        score = float(residuals[0]) if residuals.size else 0.0
        fit = _EdgeFit(alpha=float(coef[0]), constant=float(math.exp(coef[1])), edge=float(edge))
        if best is None or score < best[0]:
            best = (score, fit)
    return None if best is None else best[1]


def _edge_fits(profile: DensityProfile) -> tuple[_EdgeFit | None, _EdgeFit | None]:
    x = profile.grid
    p = profile.density
    idx = np.nonzero(p > _SUPPORT_THRESHOLD * p.max())[0]
    first, last = int(idx[0]), int(idx[-1])
    band = EDGE_BAND * (x[last] - x[first])
    lower = _fit_edge(x, p, first, -1, profile.dx, band)
    upper = _fit_edge(x, p, last, 1, profile.dx, band)
    return lower, upper


def edge_exponents(profile: DensityProfile) -> tuple[float, float]:
    """Exponents alpha in ``p ~ C dist^alpha`` at the lower and upper support ends.

    Fitted by least squares on ``log p`` against ``log dist`` over the outer 5% of the
    support, skipping the cells nearest to the edge. NaN when too few nodes are available.
    """
    lower, upper = _edge_fits(profile)
    return (
        math.nan if lower is None else lower.alpha,
        math.nan if upper is None else upper.alpha,
    )


def _is_sqrt_edge(fit: _EdgeFit | None) -> bool:
    return fit is not None and 0.25 < fit.alpha < 0.75


def _edge_cell_correction(fit: _EdgeFit, node: float, value: float, dx: float) -> float:
    """Exact power-law integral of ``p^3`` between the last positive node and the edge,
    minus the trapezoid contribution of that half cell."""
    gap = max(abs(fit.edge - node), 0.0)
    power = 3.0 * fit.alpha + 1.0
    exact = fit.constant**3 * gap**power / power
    return exact - 0.5 * dx * value**3


# Int of phi and of t^2 phi over [-1, 1], phi = sqrt(1 - t^2) (kind 1) or 1 / sqrt(1 - t^2) (kind -1).
_JACOBI_MOMENTS: Final[dict[int, tuple[float, float]]] = {1: (math.pi / 2, math.pi / 8), -1: (math.pi, math.pi / 2)}


def _jacobi_potentials(kind: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``P_k(xi) = int t^k phi(t) log|xi - t| dt`` over ``[-1, 1]`` for k = 0, 1, 2.

    Inside ``[-1, 1]`` the terms in ``w`` and ``arc`` vanish and the potentials are polynomials.
    """
    a = np.abs(xi)
    sign = np.sign(xi)
    w = np.sqrt(np.maximum(a * a - 1.0, 0.0))
    arc = np.arccosh(np.maximum(a, 1.0))
    pi = math.pi
    if kind == 1:
        p0 = 0.5 * pi * (a * a - a * w + arc - 0.5 - _LOG2)
        p1 = sign * pi * (a**3 / 3.0 - 0.5 * a - w**3 / 3.0)
        p2 = pi * (a**4 - a * a) / 4.0 - pi / 8.0 * a * (2.0 * a * a - 1.0) * w + pi / 8.0 * arc + pi / 32.0 - pi / 8.0 * _LOG2
    else:
        p0 = pi * (arc - _LOG2)
        p1 = pi * (sign * w - xi)
        p2 = -0.5 * pi * a * a + 0.5 * pi * (a * w + arc) + pi / 4.0 - 0.5 * pi * _LOG2
    return p0, p1, p2


@dataclass(frozen=True)
class _EdgeModel:
    """``s(u) = (a + b t) phi(t)`` on ``[lo, hi]`` with ``t = (u - center) / radius``.

    ``kind`` 1 gives square-root edges, ``kind`` -1 inverse square-root edges. Its potentials,
    energy and cube integral are closed-form, so only the smooth remainder ``p - s`` goes
    through the piecewise-linear quadrature.
    """

    kind: int
    lo: float
    hi: float
    a: float = 1.0
    b: float = 0.0

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def radius(self) -> float:
        return 0.5 * (self.hi - self.lo)

    @property
    def mass(self) -> float:
        return self.radius * self.a * _JACOBI_MOMENTS[self.kind][0]

    def density(self, x: np.ndarray) -> np.ndarray:
        t = (np.asarray(x, dtype=float) - self.center) / self.radius
        inside = np.abs(t) < 1.0
        t = np.where(inside, t, 0.0)
        return np.where(inside, (self.a + self.b * t) * np.sqrt(1.0 - t * t) ** self.kind, 0.0)

    def potential(self, x: np.ndarray, *, weighted: bool = False) -> np.ndarray:
        m0, m2 = _JACOBI_MOMENTS[self.kind]
        r, c = self.radius, self.center
        log_r = math.log(r)
        p0, p1, p2 = _jacobi_potentials(self.kind, (np.asarray(x, dtype=float) - c) / r)
        plain = r * (self.a * m0 * log_r + self.a * p0 + self.b * p1)
        if not weighted:
            return plain
        return c * plain + r * r * (self.b * m2 * log_r + self.a * p1 + self.b * p2)

    def energy(self) -> float:
        r, a, b = self.radius, self.a, self.b
        pi2 = math.pi**2
        if self.kind == 1:
            inner = a * a * pi2 * (math.log(r) / 4.0 - 1.0 / 16.0 - _LOG2 / 4.0) - b * b * pi2 / 24.0
        else:
            inner = pi2 * (a * a * (math.log(r) - _LOG2) - 0.5 * b * b)
        return r * r * inner

    def cube_integral(self) -> float:
        if self.kind != 1:
            raise NonIntegrableCube("p^3 is not integrable at inverse square-root edges")
        a, b = self.a, self.b
        return self.radius * (3.0 * math.pi / 8.0 * a**3 + 3.0 * math.pi / 16.0 * a * b * b)


def _edge_kind(fit: _EdgeFit | None) -> int | None:
    if fit is None:
        return None
    if 0.25 < fit.alpha < 0.75:
        return 1
    if -0.75 < fit.alpha < -0.25:
        return -1
    return None


def _edge_root(x: np.ndarray, p: np.ndarray, outer: int, inward: int, kind: int, dx: float) -> float | None:
    """Edge location from ``p^(2 kind)``, which is smooth across Jacobi-type edges.

    A quadratic through the nodes two to four cells inside is continued outward; the two
    outermost nodes are skipped because inversion smears them.
    """
    idx = outer + inward * np.arange(2, 5)
    base = x[outer]
    q = p[idx] ** (2.0 * kind)
    roots = np.roots(np.polyfit(x[idx] - base, q, 2))
    lo, hi = sorted((-1.5 * inward * dx, float(x[idx[0]] - base)))
    found = [float(r.real) for r in roots if abs(r.imag) <= 1e-6 * dx and lo <= r.real <= hi]
    if not found:
        return None
    return base + min(found, key=abs)


def _edge_weight(x: np.ndarray, p: np.ndarray, outer: int, inward: int, edge: float, shape: _EdgeModel) -> float:
    """``p / phi`` continued to the edge by a quadratic least-squares fit."""
    idx = outer + inward * np.arange(3, 9)
    phi = shape.density(x[idx])
    if np.any(phi <= 0):
        return math.nan
    return float(np.polyfit(x[idx] - edge, p[idx] / phi, 2)[-1])


def _edge_model(profile: DensityProfile) -> _EdgeModel | None:
    """Jacobi-type model of the edges, or None unless both edges are square-root or both
    inverse square-root and the support is one interval inside the grid."""
    x = profile.grid
    p = profile.density
    support = np.nonzero(p > _SUPPORT_THRESHOLD * p.max())[0]
    first, last = int(support[0]), int(support[-1])
    if support.size != last - first + 1 or support.size < 4 * EDGE_MIN_CELLS:
        return None
    if first == 0 or last == p.size - 1:
        return None
    lower, upper = _edge_fits(profile)
    kind = _edge_kind(lower)
    if kind is None or kind != _edge_kind(upper):
        return None
    lo = _edge_root(x, p, first, 1, kind, profile.dx)
    hi = _edge_root(x, p, last, -1, kind, profile.dx)
    if lo is None or hi is None or not lo < hi:
        return None
    shape = _EdgeModel(kind=kind, lo=lo, hi=hi)
    g_lo = _edge_weight(x, p, first, 1, lo, shape)
    g_hi = _edge_weight(x, p, last, -1, hi, shape)
    if not (g_lo > 0 and g_hi > 0):
        return None
    return _EdgeModel(kind=kind, lo=lo, hi=hi, a=0.5 * (g_lo + g_hi), b=0.5 * (g_hi - g_lo))


def _split(profile: DensityProfile) -> tuple[_EdgeModel | None, np.ndarray]:
    """Edge model and the node values of the remainder ``p - s``.

    The remainder vanishes at the edges, so nodes within one cell of an edge carry none.
    """
    p = profile.density
    model = _edge_model(profile)
    if model is None:
        return None, p
    x = profile.grid
    near = (np.abs(x - model.lo) < profile.dx) | (np.abs(x - model.hi) < profile.dx)
    return model, np.where(near, 0.0, p - model.density(x))


def _decomposed(profile: DensityProfile) -> tuple[_EdgeModel | None, np.ndarray, float]:
    """``_split`` plus the edge-corrected mass, checked against 1.

    Raises:
        UnboundedSupport: If the support is not bounded or the corrected mass is off by more
            than ``MASS_SLACK``.
    """
    lo, hi = profile.support
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise UnboundedSupport(f"Profile support {profile.support} is not bounded")
    model, remainder = _split(profile)
    mass = trapezoid_mass(remainder, profile.dx) + (0.0 if model is None else model.mass)
    if abs(mass - 1.0) > MASS_SLACK:
        p = profile.density
        if max(p[0], p[-1]) > _SUPPORT_THRESHOLD * p.max():
            raise UnboundedSupport(
                f"Profile density is {p[0]:.3g} and {p[-1]:.3g} at the grid ends; mass {mass:.4g} extends beyond the grid"
            )
        raise UnboundedSupport(f"Profile mass {mass!r} is not within {MASS_SLACK} of 1")
    return model, remainder, mass


def _hat_energy(values: np.ndarray, h: float) -> float:
    """``int int log|x - y| v(x) v(y)`` for the piecewise-linear interpolant of signed node values."""
    idx = np.nonzero(values)[0]
    if idx.size == 0:
        return 0.0
    values = values[max(int(idx[0]) - 1, 0) : min(int(idx[-1]) + 1, values.size - 1) + 1]
    cells = values.size - 1
    kernels = _cell_kernels(cells)
    total = 0.0
    for (a, b), kernel in kernels.items():
        left = values[a : a + cells]
        right = values[b : b + cells]
        # T[c] = sum_d J_ab(d - c) right[d]
        transfer = fftconvolve(right, kernel[::-1])[cells - 1 : 2 * cells - 1]
        total += float(np.dot(left, transfer))
    mass = trapezoid_mass(values, h)
    return h * h * total + math.log(h) * mass * mass


def _cell_quadrature(remainder: np.ndarray, x: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes, weights and interpolated remainder on every cell it touches."""
    cells = np.nonzero((remainder[:-1] != 0) | (remainder[1:] != 0))[0]
    t, w = gauss_legendre(_CELL_GL_ORDER)
    frac = 0.5 * (t + 1.0)
    u = x[cells, None] + h * frac
    r = remainder[cells, None] * (1.0 - frac) + remainder[cells + 1, None] * frac
    return u, np.broadcast_to(0.5 * h * w, u.shape), r


def log_energy(profile: DensityProfile) -> float:
    """``int int log|x - y| p(x) p(y) dx dy`` for the profile renormalized to unit mass.

    Square-root or inverse square-root edges are split off as a closed-form model ``s``;
    the remainder ``r = p - s`` is expanded in hat functions. Every pair of cells contributes
    ``h^2 * sum_ab v_a v_b J_ab(offset) + log(h) * mass_c * mass_d``, with ``J_ab`` depending
    only on the cell offset, so the double sum is a convolution. The cross term integrates
    ``r`` against the exact potential of ``s``.

    Raises:
        UnboundedSupport: If the support is not bounded or mass is missing from the grid.
    """
    model, remainder, mass = _decomposed(profile)
    energy = _hat_energy(remainder, profile.dx)
    if model is not None:
        u, w, r = _cell_quadrature(remainder, profile.grid, profile.dx)
        energy += model.energy() + 2.0 * float(np.sum(w * r * model.potential(u)))
    return energy / (mass * mass)


def free_entropy(profile: DensityProfile) -> float:
    """``chi = log_energy + 3/4 + log(2 pi) / 2``.

    Warns with ``NonphysicalProfile`` when the value drops below -10, which only happens for
    collapsed or spiky profiles.
    """
    chi = log_energy(profile) + ENTROPY_OFFSET
    if chi < NONPHYSICAL_CHI:
        get_logger().warning("nonphysical_profile", extra={"event_name": "nonphysical_profile", "chi": chi})
        warnings.warn(f"Free entropy {chi:.4g} is below {NONPHYSICAL_CHI:g}", NonphysicalProfile, stacklevel=2)
    return chi


def fisher_information(profile: DensityProfile) -> float:
    """``Phi = (4 pi^2 / 3) int p^3`` for a piecewise-linear density profile.

    With a square-root edge model ``s``, ``int s^3`` is closed-form and the rest of
    ``(s + r)^3`` is integrated cell by cell. Without one, square-root edges (fitted exponent
    near 1/2) have their outermost cell integrated with the fitted power law and the bulk
    uses the trapezoid rule.

    Raises:
        NonIntegrableCube: If an edge exponent satisfies ``3 alpha <= -1``, or both edges
            follow an inverse square root.
        UnboundedSupport: As for ``log_energy``.
    """
    lower, upper = _edge_fits(profile)
    for side, fit in (("lower", lower), ("upper", upper)):
        if fit is not None and 3.0 * fit.alpha <= -1.0:
            raise NonIntegrableCube(f"p^3 is not integrable at the {side} edge (fitted exponent {fit.alpha:.3f})")
    model, remainder, _ = _decomposed(profile)
    if model is not None:
        u, w, r = _cell_quadrature(remainder, profile.grid, profile.dx)
        s = model.density(u)
        return FISHER_FACTOR * (model.cube_integral() + float(np.sum(w * ((s + r) ** 3 - s**3))))
    x = profile.grid
    p = profile.density
    integral = trapezoid_mass(p**3, profile.dx)
    idx = np.nonzero(p > _SUPPORT_THRESHOLD * p.max())[0]
    first, last = int(idx[0]), int(idx[-1])
    if _is_sqrt_edge(lower) and first > 0:
        integral += _edge_cell_correction(lower, x[first], p[first], profile.dx)
    if _is_sqrt_edge(upper) and last < p.size - 1:
        integral += _edge_cell_correction(upper, x[last], p[last], profile.dx)
    return FISHER_FACTOR * integral


def log_potential(profile: DensityProfile, x, *, weighted: bool = False):
    """``int p(u) log|x - u| du`` (or ``int u p(u) log|x - u| du``), exact for the profile.

    The edge model contributes its closed-form potential. On each cell the remainder is
    ``c0 + s (u - x)`` with ``v = u - x``, so its integrand is a polynomial times ``log|v|``
    and the closed-form antiderivative applies.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    model, remainder = _split(profile)
    grid = profile.grid
    occupied = (remainder[:-1] != 0) | (remainder[1:] != 0)
    a = grid[:-1][occupied]
    b = grid[1:][occupied]
    pa = remainder[:-1][occupied]
    slope = (remainder[1:][occupied] - pa) / profile.dx

    col = xs[:, None]
    c0 = pa + slope * (col - a)
    if weighted:
        coeffs = [col * c0, c0 + slope * col, np.broadcast_to(slope, c0.shape)]
    else:
        coeffs = [c0, np.broadcast_to(slope, c0.shape)]
    out = integrate_log_polynomial(coeffs, a - col, b - col).sum(axis=1)
    if model is not None:
        out = out + model.potential(xs, weighted=weighted)
    return float(out[0]) if np.ndim(x) == 0 else out


def _check_inside(x, name: str) -> np.ndarray:
    xs = np.asarray(x, dtype=float)
    if np.any(np.abs(xs) > 2.0 + 1e-12):
        raise OutsideSupport(f"{name} is defined on [-2, 2]")
    return xs


def semicircle_log_potential(x):
    """``int p_w(u) log|x - u| du = x^2 / 4 - 1/2`` on ``[-2, 2]``."""
    xs = _check_inside(x, "semicircle_log_potential")
    out = xs * xs / 4.0 - 0.5
    return float(out) if np.ndim(out) == 0 else out


def odd_log_potential(x):
    """``int u p_w(u) log|x - u| du = -x + x^3 / 6`` on ``[-2, 2]``."""
    xs = _check_inside(x, "odd_log_potential")
    out = -xs + xs**3 / 6.0
    return float(out) if np.ndim(out) == 0 else out


def entropy_report(profile: DensityProfile, n: int) -> EntropyReport:
    """Entropy and Fisher values of one profile; Fisher is infinite when ``p^3`` is not integrable."""
    energy = log_energy(profile)
    try:
        fisher = fisher_information(profile)
    except NonIntegrableCube as exc:
        get_logger().info("fisher_infinite", extra={"event_name": "fisher_infinite", "n": n, "reason": str(exc)})
        fisher = math.inf
    return EntropyReport.from_values(n=n, log_energy=energy, fisher=fisher)


def _check_geometric(ns: Sequence[int]) -> None:
    if len(ns) < 3:
        raise ValueError(f"rate_report needs at least 3 values of n, got {len(ns)}")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n_list must be strictly increasing")
    ratios = [b / a for a, b in zip(ns, ns[1:])]
    if max(ratios) - min(ratios) > 1e-9 * max(ratios):
        raise ValueError(f"n_list must be geometric, got ratios {ratios}")


def _fit_or_none(ns: Sequence[int], values: Sequence[float]) -> RateFit | None:
    if len(values) < 2 or any(not 0 < v < math.inf for v in values):
        return None
    return fit_rate(ns, values)


def deficit_fits(reports: Sequence[EntropyReport]) -> tuple[RateFit | None, RateFit | None]:
    """Log-log fits of ``chi_deficit`` and ``fisher_excess`` against n.

    Either fit is None when some value is not positive and finite, or fewer than two
    reports are given.
    """
    ns = [r.n for r in reports]
    return (
        _fit_or_none(ns, [r.chi_deficit for r in reports]),
        _fit_or_none(ns, [r.fisher_excess for r in reports]),
    )


def rate_report(
    m: Measure,
    n_list: Sequence[int],
    grid: GridSpec | None = None,
    *,
    eps: EpsPolicy | float | None = None,
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    threads: int = 1,
) -> RateReport:
    """Entropy and Fisher reports across n with log-log fits of their deficits.

    ``n * chi_deficit`` is expected to approach ``m3^2 / 6`` and ``n * fisher_excess`` to
    approach ``m3^2``; both constants are available on the result for comparison.
    """
    ns = [int(n) for n in n_list]
    _check_geometric(ns)
    spec = grid or GridSpec()

    def run(n: int) -> EntropyReport:
        return entropy_report(invert_density(m, n, spec, eps, tol=tol, max_iter=max_iter), n)

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
            reports = tuple(executor.map(run, ns))
    else:
        reports = tuple(run(n) for n in ns)

    m3 = moment(m, 3)
    chi_fit, fisher_fit = deficit_fits(reports)
    get_logger().info(
        "rate_fit",
        extra={
            "event_name": "rate_fit",
            "n_list": ns,
            "chi_exponent": None if chi_fit is None else chi_fit.exponent,
            "fisher_exponent": None if fisher_fit is None else fisher_fit.exponent,
            "expected_chi": expected_chi_deficit(m3, ns[-1]),
            "expected_fisher": expected_fisher_excess(m3, ns[-1]),
        },
    )
    return RateReport(reports=reports, m3=m3, chi_fit=chi_fit, fisher_fit=fisher_fit)
