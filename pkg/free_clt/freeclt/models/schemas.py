from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Final, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic.alias_generators import to_camel

MeasureKind = Literal["atomic", "semicircle", "meixner", "arcsine", "grid"]
EpsPolicyName = Literal["richardson", "fixed"]
OutputFormat = Literal["csv", "json"]

MASS_TOLERANCE: Final[float] = 1e-12
ATOM_MERGE_DISTANCE: Final[float] = 1e-12
ENTROPY_OFFSET: Final[float] = 0.75 + 0.5 * math.log(2.0 * math.pi)
CHI_SEMICIRCLE: Final[float] = 0.5 * math.log(2.0 * math.pi * math.e)


class _FrozenModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def trapezoid_mass(values: np.ndarray, dx: float) -> float:
    if values.size < 2:
        return 0.0
    return float(dx * (values.sum() - 0.5 * (values[0] + values[-1])))


class DensityProfile(_FrozenModel):
    """A density sampled on a uniform grid and read as a piecewise-linear function.

    ``tolerance`` records how far the trapezoid mass may sit from 1 (inversion noise,
    clipped negative values, truncated edges).
    """

    x0: float
    dx: float = Field(gt=0)
    values: tuple[float, ...] = Field(min_length=2)
    support: tuple[float, float]
    tolerance: float = Field(default=1e-2, ge=0)

    @field_validator("values")
    @classmethod
    def _values_must_be_nonnegative(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        arr = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("Density values must be finite")
        if np.any(arr < 0):
            raise ValueError("Density values must be >= 0")
        return value

    @model_validator(mode="after")
    def _check_support_and_mass(self) -> DensityProfile:
        lo, hi = self.support
        slack = 1e-9 * self.dx
        if lo > hi:
            raise ValueError(f"Support is reversed: {self.support}")
        if lo < self.x0 - slack or hi > self.x_hi + slack:
            raise ValueError(f"Support {self.support} exceeds grid [{self.x0}, {self.x_hi}]")
        mass = self.mass
        if abs(mass - 1.0) > self.tolerance:
            raise ValueError(f"Trapezoid mass {mass!r} is outside tolerance {self.tolerance!r} of 1")
        return self

    @property
    def points(self) -> int:
        return len(self.values)

    @property
    def x_hi(self) -> float:
        return self.x0 + self.dx * (len(self.values) - 1)

    @property
    def grid(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(len(self.values), dtype=float)

    @property
    def density(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @property
    def mass(self) -> float:
        return trapezoid_mass(self.density, self.dx)


class AtomicMeasure(_FrozenModel):
    kind: Literal["atomic"] = "atomic"
    atoms: tuple[tuple[float, float], ...] = Field(min_length=1)

    @field_validator("atoms")
    @classmethod
    def _atoms_must_be_ordered_probabilities(
        cls, value: tuple[tuple[float, float], ...]
    ) -> tuple[tuple[float, float], ...]:
        positions = [u for u, _ in value]
        weights = [w for _, w in value]
        if not all(math.isfinite(u) for u in positions):
            raise ValueError("Atom positions must be finite")
        if any(not (w > 0) for w in weights):
            raise ValueError("Atom weights must be > 0")
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("Atom positions must be strictly increasing")
        if abs(math.fsum(weights) - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"Atom weights sum to {math.fsum(weights)!r}, expected 1")
        return value

    @property
    def positions(self) -> np.ndarray:
        return np.array([u for u, _ in self.atoms], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=float)


class SemicircleMeasure(_FrozenModel):
    kind: Literal["semicircle"] = "semicircle"


class FreeMeixnerMeasure(_FrozenModel):
    """Absolutely continuous free Meixner law with parameters (a, b, d)."""

    kind: Literal["meixner"] = "meixner"
    a: float = 0.0
    b: float = Field(default=0.0, lt=1)
    d: float = Field(default=0.0, lt=1)

    @model_validator(mode="after")
    def _denominator_must_stay_positive(self) -> FreeMeixnerMeasure:
        lo, hi = self.support
        candidates = [lo, hi]
        if self.b > 0:
            vertex = -self.a * (1.0 - self.b) / (2.0 * self.b)
            if lo < vertex < hi:
                candidates.append(vertex)
        if min(self.denominator(x) for x in candidates) <= 0:
            raise ValueError(
                f"meixner({self.a}, {self.b}, {self.d}) has an atomic part: "
                "f(x) = bx^2 + a(1-b)x + 1-d must be > 0 on the support"
            )
        return self

    @property
    def halfwidth(self) -> float:
        return 2.0 * math.sqrt(1.0 - self.d) / (1.0 - self.b)

    @property
    def support(self) -> tuple[float, float]:
        return (self.a - self.halfwidth, self.a + self.halfwidth)

    def denominator(self, x: float) -> float:
        return self.b * x * x + self.a * (1.0 - self.b) * x + 1.0 - self.d


class ArcsineMeasure(_FrozenModel):
    kind: Literal["arcsine"] = "arcsine"
    center: float = 0.0
    halfwidth: float = Field(gt=0)


class GridDensityMeasure(_FrozenModel):
    kind: Literal["grid"] = "grid"
    profile: DensityProfile


Measure = Annotated[
    Union[AtomicMeasure, SemicircleMeasure, FreeMeixnerMeasure, ArcsineMeasure, GridDensityMeasure],
    Field(discriminator="kind"),
]


class TauRepresentation(_FrozenModel):
    """Atoms of the Nevanlinna measure tau in F(z) = z + int tau(du) / (u - z)."""

    atoms: tuple[tuple[float, float], ...] = Field(min_length=1)
    source_moments: tuple[float, ...] | None = Field(default=None, min_length=7, max_length=7)
    source_atoms: tuple[tuple[float, float], ...] | None = None

    @model_validator(mode="after")
    def _check_atoms(self) -> TauRepresentation:
        positions = [u for u, _ in self.atoms]
        weights = [w for _, w in self.atoms]
        if any(not (w > 0) for w in weights):
            raise ValueError("Tau weights must be > 0")
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("Tau positions must be strictly increasing")
        if self.source_moments is not None:
            m2 = self.source_moments[0]
            if abs(math.fsum(weights) - m2) > 1e-10 * max(1.0, abs(m2)):
                raise ValueError(f"Tau mass {math.fsum(weights)!r} differs from m2 = {m2!r}")
        if self.source_atoms is not None:
            src = [u for u, _ in self.source_atoms]
            if len(src) != len(positions) + 1:
                raise ValueError("A tau built from k atoms must have k-1 atoms")
            if any(not (src[i] < positions[i] < src[i + 1]) for i in range(len(positions))):
                raise ValueError("Tau positions must strictly interlace the source atoms")
        return self

    @property
    def positions(self) -> np.ndarray:
        return np.array([u for u, _ in self.atoms], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=float)

    @property
    def total_mass(self) -> float:
        return math.fsum(w for _, w in self.atoms)

    def moment(self, k: int) -> float:
        return float(np.dot(self.weights, self.positions**k))


@dataclass(frozen=True)
class SubordinationSolution:
    """Solution Z(z) of z = n Z - (n-1) F(Z).

    Attributes:
        z: Point the equation was solved at.
        n: Number of convolution factors.
        Z: The subordination value, analytic in z on the upper half-plane.
        Sn: ``Z / sqrt(n)`` when ``z`` was a scaled point ``sqrt(n) * zeta``, else None.
        iterations: Fixed-point plus Newton steps taken.
        residual: ``|z - n Z + (n-1) F(Z)|`` at the returned value.
        tol: Residual tolerance the solve was held to.
    """

    z: complex
    n: int
    Z: complex
    Sn: complex | None
    iterations: int
    residual: float
    tol: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.residual > self.tol:
            raise ValueError(f"Residual {self.residual!r} exceeds tolerance {self.tol!r}")
        if self.Z.imag < self.z.imag / self.n - 1e-15:
            raise ValueError("Im Z must be >= Im z / n")


class CLTCoefficients(_FrozenModel):
    n: int = Field(ge=1)
    m3: float
    m4: float
    a_n: float
    b_n: float = Field(lt=1)
    d_n: float = Field(lt=1)
    e_n: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_formulas(self) -> CLTCoefficients:
        n = self.n
        expected = {
            "a_n": self.m3 / math.sqrt(n),
            "b_n": (self.m4 - self.m3**2 - 1.0) / n,
            "d_n": (self.m4 - self.m3**2) / n,
        }
        expected["e_n"] = (1.0 - expected["b_n"]) / math.sqrt(1.0 - expected["d_n"])
        for name, value in expected.items():
            got = getattr(self, name)
            if abs(got - value) > 1e-12 * max(1.0, abs(value)):
                raise ValueError(f"{name} = {got!r} does not match {value!r}")
        return self

    @property
    def edge_radius(self) -> float:
        return 2.0 / self.e_n


class EntropyReport(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, alias_generator=to_camel, populate_by_name=True)

    n: int = Field(ge=1)
    chi: float
    fisher: float
    log_energy: float
    chi_deficit: float
    fisher_excess: float

    @model_validator(mode="after")
    def _check_definitions(self) -> EntropyReport:
        if abs(self.chi - (self.log_energy + ENTROPY_OFFSET)) > 1e-12:
            raise ValueError("chi must equal log_energy + 3/4 + log(2 pi)/2")
        if abs(self.chi_deficit - (CHI_SEMICIRCLE - self.chi)) > 1e-12:
            raise ValueError("chi_deficit must equal chi(semicircle) - chi")
        if math.isinf(self.fisher):
            if self.fisher_excess != self.fisher:
                raise ValueError("fisher_excess must be infinite with fisher")
        elif abs(self.fisher_excess - (self.fisher - 1.0)) > 1e-12:
            raise ValueError("fisher_excess must equal fisher - 1")
        return self

    @classmethod
    def from_values(cls, *, n: int, log_energy: float, fisher: float) -> EntropyReport:
        chi = log_energy + ENTROPY_OFFSET
        return cls(
            n=n,
            chi=chi,
            fisher=fisher,
            log_energy=log_energy,
            chi_deficit=CHI_SEMICIRCLE - chi,
            fisher_excess=fisher - 1.0,
        )


class GridSpec(_FrozenModel):
    lo: float = -4.0
    hi: float = 4.0
    points: int = Field(default=2001, ge=201)

    @model_validator(mode="after")
    def _lo_below_hi(self) -> GridSpec:
        if not self.lo < self.hi:
            raise ValueError(f"Grid requires lo < hi, got {self.lo} and {self.hi}")
        return self

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / (self.points - 1)

    def nodes(self) -> np.ndarray:
        return self.lo + self.dx * np.arange(self.points, dtype=float)


class EpsPolicy(_FrozenModel):
    kind: EpsPolicyName = "richardson"
    eps: float = Field(default=1e-5, gt=0)


class RunConfig(_FrozenModel):
    measure: str = Field(min_length=1)
    n: int | None = Field(default=None, ge=1)
    n_list: tuple[int, ...] = (16, 32, 64, 128, 256)
    grid: GridSpec = Field(default_factory=GridSpec)
    eps: EpsPolicy = Field(default_factory=EpsPolicy)
    tol: float = Field(default=1e-12, gt=0)
    max_iter: int = Field(default=10_000, ge=1)
    output_format: OutputFormat = "csv"
    out: Path | None = None
    z: tuple[float, float] | None = None
    k_max: int = Field(default=8, ge=0, le=16)
    threads: int = Field(default=1, ge=1)
    window_constant: float = Field(default=1.0, ge=0)
    cauchy_height: float = Field(default=1e4, ge=1e3)

    @field_validator("n_list")
    @classmethod
    def _n_list_must_be_positive(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if not value:
            raise ValueError("n_list must not be empty")
        if any(n < 1 for n in value):
            raise ValueError("Every n in n_list must be >= 1")
        return value

    @property
    def ns(self) -> tuple[int, ...]:
        return (self.n,) if self.n is not None else tuple(sorted(set(self.n_list)))
