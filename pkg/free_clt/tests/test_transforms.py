from __future__ import annotations

import math

import numpy as np
import pytest

from freeclt.errors import (
    DegenerateMeasure,
    EmptyTau,
    InvalidMeasure,
    LowerHalfPlane,
    PrecisionLoss,
    UnsupportedMoment,
)
from freeclt.models.schemas import ArcsineMeasure, AtomicMeasure, GridDensityMeasure, TauRepresentation
from freeclt.services.measures import free_meixner, moment, tabulate
from freeclt.services.quadrature import semicircle_gauss_rule
from freeclt.services.transforms import (
    cauchy,
    meixner_reciprocal,
    moments_from_cauchy,
    moments_from_tau,
    reciprocal_cauchy,
    reciprocal_cauchy_derivative,
    tau_from_atomic,
    tau_mass_from_transform,
    truncate_tau,
)

SQRT5 = math.sqrt(5.0)


def _measures(semicircle, skewed):
    return [
        skewed,
        semicircle,
        free_meixner(0.1, 0.02, 0.05),
        ArcsineMeasure(center=0.5, halfwidth=1.5),
        GridDensityMeasure(profile=tabulate(semicircle, -2.5, 2.5, 8001)),
    ]


def test_closed_form_values(bernoulli, semicircle) -> None:
    assert cauchy(bernoulli, 2j) == pytest.approx(-0.4j, abs=1e-14)
    assert reciprocal_cauchy(bernoulli, 2j) == pytest.approx(2.5j, abs=1e-14)
    assert cauchy(semicircle, 1j) == pytest.approx(0.5j * (1.0 - SQRT5), abs=1e-14)
    assert reciprocal_cauchy(semicircle, 1j) == pytest.approx(0.5j * (1.0 + SQRT5), abs=1e-14)
    assert meixner_reciprocal(0.0, 0.0, 0.0, 1j) == pytest.approx(0.5 * (1j + 1j * SQRT5), abs=1e-14)


def test_total_mass_limit(semicircle, skewed) -> None:
    y = 1e6
    for m in _measures(semicircle, skewed):
        g = cauchy(m, 1j * y)
        assert (-1j * y * g).real == pytest.approx(1.0, abs=1e-5)
        assert g.imag < 0


def test_normalization_improves_monotonically_up_the_imaginary_axis(semicircle, skewed) -> None:
    for m in _measures(semicircle, skewed):
        # A tabulated profile tends to its own trapezoid mass.
        mass = m.profile.mass if isinstance(m, GridDensityMeasure) else 1.0
        gaps = [abs(1j * y * cauchy(m, 1j * y) - mass) for y in (1e3, 1e4, 1e5)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 1e-5


@pytest.mark.parametrize("params", [(0.0, 0.0, 0.0), (0.1, 0.02, 0.05), (-0.2, -0.1, 0.3)])
def test_meixner_reciprocal_has_no_branch_flip_on_vertical_segments(params) -> None:
    a, b, d = params
    radius = 2.0 * math.sqrt(1.0 - d) / (1.0 - b)
    heights = np.logspace(0.0, -12.0, 400)
    for x in a + radius * np.linspace(-0.9, 0.9, 7):
        values = meixner_reciprocal(a, b, d, x + 1j * heights)
        steps = np.abs(np.diff(values))
        assert np.all(steps <= 10.0 * np.abs(np.diff(heights)) + 1e-12)
        assert np.all(values.imag >= heights - 1e-12)
        # Boundary value from above: a + ((1+b)(x-a) + i sqrt(4(1-d) - (1-b)^2 (x-a)^2)) / 2.
        edge = a + 0.5 * ((1.0 + b) * (x - a) + 1j * math.sqrt(4.0 * (1.0 - d) - ((1.0 - b) * (x - a)) ** 2))
        assert values[-1] == pytest.approx(edge, abs=1e-9)


def test_reciprocal_transforms_stay_in_class(semicircle, skewed) -> None:
    rng = np.random.default_rng(7)
    z = rng.uniform(-4.0, 4.0, 100) + 1j * rng.uniform(0.01, 3.0, 100)
    for m in _measures(semicircle, skewed):
        f = reciprocal_cauchy(m, z)
        assert f.shape == z.shape
        assert np.all(f.imag >= z.imag - 1e-12)
        far = reciprocal_cauchy(m, 1e6j)
        assert abs(far / 1e6j - 1.0) < 1e-5


def test_meixner_reciprocal_normalization_and_boundary_branch() -> None:
    y = 1e6
    assert meixner_reciprocal(0.1, 0.02, 0.05, 1j * y) / (1j * y) == pytest.approx(1.0, abs=1e-5)
    # Approaching the real axis at the centre of the support: 0.05 + sqrt(-4) / 2.
    assert meixner_reciprocal(0.05, 0.0, 0.0, 0.05 + 1e-12j) == pytest.approx(0.05 + 1j, abs=1e-9)
    with pytest.raises(InvalidMeasure):
        meixner_reciprocal(0.0, 1.5, 0.0, 1j)


def test_lower_half_plane_is_rejected(bernoulli) -> None:
    with pytest.raises(LowerHalfPlane):
        cauchy(bernoulli, 1.0 + 0j)
    with pytest.raises(LowerHalfPlane):
        reciprocal_cauchy(bernoulli, np.array([1j, -1j]))
    assert cauchy(bernoulli, 0.5 + 1e-6j, eps_min=1e-6).imag < 0
    with pytest.raises(LowerHalfPlane):
        cauchy(bernoulli, 0.5 + 1e-7j, eps_min=1e-6)


def test_derivative_matches_finite_differences(semicircle, skewed) -> None:
    z = 0.3 + 0.7j
    h = 1e-6
    for m in _measures(semicircle, skewed):
        numeric = (reciprocal_cauchy(m, z + h) - reciprocal_cauchy(m, z - h)) / (2 * h)
        assert reciprocal_cauchy_derivative(m, z) == pytest.approx(numeric, abs=1e-6)


def test_tau_of_bernoulli_is_a_unit_atom_at_zero(bernoulli) -> None:
    tau = tau_from_atomic(bernoulli)
    assert len(tau.atoms) == 1
    position, weight = tau.atoms[0]
    assert position == pytest.approx(0.0, abs=1e-14)
    assert weight == pytest.approx(1.0, abs=1e-14)
    assert tau_mass_from_transform(bernoulli) == pytest.approx(1.0, abs=1e-14)


def test_tau_of_skewed_measure(skewed) -> None:
    tau = tau_from_atomic(skewed)
    position, weight = tau.atoms[0]
    # F(z) = z + 1 / (t - z) forces m3 = t and m4 = t^2 + 1.
    assert position == pytest.approx(2.0 / math.sqrt(3.0), abs=1e-12)
    assert weight == pytest.approx(1.0, abs=1e-12)
    assert tau_mass_from_transform(skewed) == pytest.approx(weight / (1.0 + position**2), abs=1e-12)


def test_tau_requires_centered_measures_with_two_atoms() -> None:
    with pytest.raises(DegenerateMeasure):
        tau_from_atomic(AtomicMeasure(atoms=((0.0, 1.0),)))
    with pytest.raises(InvalidMeasure, match="centered"):
        tau_from_atomic(AtomicMeasure(atoms=((0.0, 0.5), (2.0, 0.5))))


def test_moments_from_tau_match_direct_moments(random_atoms) -> None:
    rng = np.random.default_rng(2024)
    for trial in range(20):
        m = random_atoms(rng, 2 + trial % 5)
        tau = tau_from_atomic(m)
        assert tau.total_mass == pytest.approx(1.0, abs=1e-10)
        for k in range(2, 9):
            expected = moment(m, k)
            assert moments_from_tau(tau, k) == pytest.approx(expected, abs=1e-9 * max(1.0, abs(expected)))


def test_moments_from_tau_small_cases(bernoulli) -> None:
    tau = TauRepresentation(atoms=((0.0, 1.0),))
    assert moments_from_tau(tau, 4) == pytest.approx(1.0)
    assert moments_from_tau(tau, 3) == 0.0
    weighted = TauRepresentation(atoms=((-0.5, 0.3), (1.0, 0.9)))
    assert moments_from_tau(weighted, 2) == pytest.approx(weighted.total_mass)
    with pytest.raises(UnsupportedMoment):
        moments_from_tau(tau, 1)


def test_semicircle_tau_gives_catalan_numbers() -> None:
    # F of the semicircle is z + G of the semicircle, so tau is the semicircle itself.
    nodes, weights = semicircle_gauss_rule(10)
    tau = TauRepresentation(atoms=tuple(zip(nodes.tolist(), weights.tolist())))
    catalan = {2: 1, 4: 2, 6: 5, 8: 14, 10: 42, 12: 132, 14: 429, 16: 1430}
    for k in range(2, 17):
        assert moments_from_tau(tau, k) == pytest.approx(catalan.get(k, 0.0), rel=1e-12, abs=1e-10)


def test_moments_from_cauchy(bernoulli, semicircle) -> None:
    assert moments_from_cauchy(semicircle, 2, 1e4) == pytest.approx(1.0, abs=1e-3)
    assert moments_from_cauchy(semicircle, 4, 1e4) == pytest.approx(2.0, abs=1e-2)
    assert moments_from_cauchy(bernoulli, 3, 1e4) == pytest.approx(0.0, abs=1e-3)
    with pytest.raises(ValueError, match="Height"):
        moments_from_cauchy(semicircle, 2, 10.0)
    with pytest.raises(PrecisionLoss):
        moments_from_cauchy(semicircle, 12)


def test_truncate_tau_keeps_compact_measures(bernoulli) -> None:
    tau = tau_from_atomic(bernoulli)
    kept, mu_star = truncate_tau(tau, 10)
    assert kept == tau
    assert mu_star == bernoulli


def test_truncate_tau_removes_far_atoms() -> None:
    positions = sorted(s * 2.0**j for j in range(5) for s in (-1.0, 1.0))
    tau = TauRepresentation(atoms=tuple((u, 0.1) for u in positions))
    kept, mu_star = truncate_tau(tau, 101)
    cutoff = 10.0 / math.pi
    removed = math.fsum(w for u, w in tau.atoms if abs(u) > cutoff)
    assert removed == pytest.approx(0.6)
    assert kept.total_mass == pytest.approx(tau.total_mass - removed, abs=1e-14)
    assert all(abs(u) <= cutoff for u, _ in kept.atoms)
    assert len(mu_star.atoms) == len(kept.atoms) + 1
    assert moment(mu_star, 1) == pytest.approx(0.0, abs=1e-12)
    assert moments_from_tau(tau, 2) - moment(mu_star, 2) == pytest.approx(removed, abs=1e-9)


def test_truncate_tau_errors() -> None:
    tau = TauRepresentation(atoms=((-5.0, 0.5), (5.0, 0.5)))
    with pytest.raises(EmptyTau):
        truncate_tau(tau, 2)
    with pytest.raises(ValueError, match="n >= 2"):
        truncate_tau(tau, 1)
