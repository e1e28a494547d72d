from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Final

import numpy as np

from freeclt.errors import DisjointGrids, EmptyWindow, GridTooCoarse
from freeclt.logging_setup import get_logger
from freeclt.models.schemas import CLTCoefficients, DensityProfile, EpsPolicy, GridSpec, Measure, trapezoid_mass
from freeclt.services.measures import mean_and_variance
from freeclt.services.subordination import DEFAULT_MAX_ITER, cauchy_mu_n

MAX_CELL_JUMP: Final[float] = 0.5
DENSITY_BOUND: Final[float] = 51.0
SUPPORT_THRESHOLD: Final[float] = 1e-9
CSV_HEADER: Final[tuple[str, str]] = ("x", "p")


def _as_grid(grid) -> GridSpec:
    if isinstance(grid, GridSpec):
        return grid
    lo, hi, points = grid
    return GridSpec(lo=float(lo), hi=float(hi), points=int(points))


def _as_policy(eps) -> EpsPolicy:
    if eps is None:
        return EpsPolicy()
    if isinstance(eps, EpsPolicy):
        return eps
    return EpsPolicy(kind="fixed", eps=float(eps))


def _support_from_values(x: np.ndarray, p: np.ndarray) -> tuple[float, float]:
    peak = float(p.max())
    idx = np.nonzero(p > SUPPORT_THRESHOLD * peak)[0]
    first = max(int(idx[0]) - 1, 0)
    last = min(int(idx[-1]) + 1, x.size - 1)
    return float(x[first]), float(x[last])


def invert_density(
    m: Measure,
    n: int,
    grid: GridSpec | tuple[float, float, int],
    eps: EpsPolicy | float | None = None,
    *,
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> DensityProfile:
    """Density of mu_n on a uniform grid by Stieltjes inversion ``p = -Im G(x + i eps) / pi``.

    With the ``richardson`` policy the values at ``eps`` and ``eps / 2`` are extrapolated
    linearly (``2 p(eps/2) - p(eps)``), removing the first-order smoothing bias. Negative
    values are clipped to 0 and the clipped mass goes into the profile tolerance together
    with the mass deficit.

    Args:
        m: Measure being convolved.
        n: Number of free convolution factors.
        grid: ``GridSpec`` or ``(lo, hi, points)``.
        eps: Policy, a bare float meaning ``fixed(eps)``, or None for the default.

    Raises:
        NoConvergence: From the subordination solver.
        GridTooCoarse: If adjacent values jump by more than 0.5 in cell mass, or the grid
            carries no mass at all.
    """
    spec = _as_grid(grid)
    policy = _as_policy(eps)
    x = spec.nodes()
    if policy.kind == "richardson":
        z = np.concatenate([x + 1j * policy.eps, x + 1j * (0.5 * policy.eps)])
        g = cauchy_mu_n(m, n, z, tol, max_iter=max_iter)
        coarse, fine = -g[: x.size].imag / math.pi, -g[x.size :].imag / math.pi
        raw = 2.0 * fine - coarse
    else:
        raw = -cauchy_mu_n(m, n, x + 1j * policy.eps, tol, max_iter=max_iter).imag / math.pi

    clipped = trapezoid_mass(np.clip(-raw, 0.0, None), spec.dx)
    p = np.clip(raw, 0.0, None)
    if not np.any(p > 0):
        raise GridTooCoarse(f"Grid {spec.lo}:{spec.hi} carries no mass of mu_{n}")
    jump = float(np.max(np.abs(np.diff(p)))) * spec.dx
    if jump > MAX_CELL_JUMP:
        raise GridTooCoarse(f"Adjacent cells differ by mass {jump:.3g}; refine the grid or raise eps")

    mass = trapezoid_mass(p, spec.dx)
    log = get_logger()
    peak = float(p.max())
    mean, variance = mean_and_variance(m)
    if peak > DENSITY_BOUND and abs(mean) < 1e-9 and abs(variance - 1.0) < 1e-9:
        log.warning(
            "density_bound_exceeded",
            extra={"event_name": "density_bound_exceeded", "n": n, "peak": peak},
        )
    if clipped > 0:
        log.debug("density_clipped", extra={"event_name": "density_clipped", "n": n, "clipped": clipped})
    log.info(
        "density_inverted",
        extra={"event_name": "density_inverted", "n": n, "mass": mass, "eps_policy": policy.kind},
    )
    return DensityProfile(
        x0=spec.lo,
        dx=spec.dx,
        values=tuple(p.tolist()),
        support=_support_from_values(x, p),
        tolerance=abs(1.0 - mass) + clipped + 1e-12,
    )


def _resample(profile: DensityProfile, x: np.ndarray) -> np.ndarray:
    return np.interp(x, profile.grid, profile.density, left=0.0, right=0.0)


def l1_distance(p: DensityProfile, q: DensityProfile) -> float:
    """``int |p - q|`` by the trapezoid rule after resampling both onto the finer spacing.

    The union grid spans both profiles; each profile is 0 outside its own grid.

    Raises:
        DisjointGrids: If the supports do not overlap.
    """
    if p.support[1] < q.support[0] or q.support[1] < p.support[0]:
        raise DisjointGrids(f"Supports {p.support} and {q.support} do not overlap")
    dx = min(p.dx, q.dx)
    lo = min(p.x0, q.x0)
    hi = max(p.x_hi, q.x_hi)
    points = int(math.ceil((hi - lo) / dx - 1e-9)) + 1
    x = np.linspace(lo, hi, points)
    step = (hi - lo) / (points - 1)
    return trapezoid_mass(np.abs(_resample(p, x) - _resample(q, x)), step)


def support_window(
    c: CLTCoefficients,
    margin: float | None = None,
    *,
    window_constant: float = 1.0,
) -> tuple[float, float]:
    """Interior window ``[a_n - 2/e_n + margin, a_n + 2/e_n - margin]``.

    ``margin`` defaults to ``window_constant * n^(-6/5)``.

    Raises:
        EmptyWindow: If ``margin >= 2 / e_n``.
    """
    if margin is None:
        margin = window_constant * c.n ** (-1.2)
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    radius = c.edge_radius
    if margin >= radius:
        raise EmptyWindow(f"Margin {margin!r} swallows the window of radius {radius!r}")
    return c.a_n - radius + margin, c.a_n + radius - margin


def _segment_mass(profile: DensityProfile, lo: float, hi: float) -> float:
    lo = max(lo, profile.x0)
    hi = min(hi, profile.x_hi)
    if hi <= lo:
        return 0.0
    x = profile.grid
    inner = x[(x > lo) & (x < hi)]
    nodes = np.concatenate([[lo], inner, [hi]])
    values = _resample(profile, nodes)
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(nodes)))


def tail_mass(profile: DensityProfile, window: tuple[float, float]) -> float:
    """Mass of the piecewise-linear profile outside ``window``."""
    lo, hi = window
    return max(profile.mass - _segment_mass(profile, lo, hi), 0.0)


def symmetry_defect(profile: DensityProfile) -> float:
    """``max |p(x) - p(-x)|`` over the nodes of a grid symmetric about 0."""
    if abs(profile.x0 + profile.x_hi) > 1e-9 * max(1.0, profile.dx):
        raise ValueError(f"Grid [{profile.x0}, {profile.x_hi}] is not symmetric about 0")
    values = profile.density
    return float(np.max(np.abs(values - values[::-1])))


def profile_to_csv(profile: DensityProfile) -> str:
    """``x,p`` table with 17 significant digits and LF line endings."""
    lines = [",".join(CSV_HEADER)]
    lines.extend(f"{x:.17g},{p:.17g}" for x, p in zip(profile.grid.tolist(), profile.values))
    return "\n".join(lines) + "\n"


def write_profile_csv(profile: DensityProfile, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(profile_to_csv(profile))
    return path


def read_profile_csv(source: Path | str) -> DensityProfile:
    """Parse an ``x,p`` table back into a profile; accepts a path or the CSV text itself.

    The spacing is taken from the first and last node; the support from the positive values.
    """
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    else:
        text = source
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"Expected header {','.join(CSV_HEADER)}")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]], dtype=float)
    if data.shape[0] < 2:
        raise ValueError("A profile needs at least two rows")
    x, p = data[:, 0], data[:, 1]
    dx = (x[-1] - x[0]) / (x.size - 1)
    return DensityProfile(
        x0=float(x[0]),
        dx=float(dx),
        values=tuple(p.tolist()),
        support=_support_from_values(x, p) if np.any(p > 0) else (float(x[0]), float(x[-1])),
        tolerance=abs(1.0 - trapezoid_mass(p, dx)) + 1e-12,
    )
