from __future__ import annotations

import math

import numpy as np
import pytest

from freeclt.errors import EmptyWindow, MomentInconsistency
from freeclt.models.schemas import DensityProfile, FreeMeixnerMeasure, GridSpec
from freeclt.services.density import invert_density
from freeclt.services.expansion import (
    coefficients,
    correction_limit,
    expansion_profile,
    expansion_residual,
    expected_chi_deficit,
    expected_fisher_excess,
    fit_rate,
    l1_leading_term,
    meixner_correction,
    meixner_density_n,
    meixner_law,
    semicircle_density,
    th7_density,
    v_n_density,
)
from freeclt.services.quadrature import edge_integral

SKEWED_M3 = 2.0 / math.sqrt(3.0)
SKEWED_M4 = 7.0 / 3.0


def test_coefficients_for_bernoulli_moments() -> None:
    c = coefficients(0.0, 1.0, 100)
    assert c.a_n == 0.0
    assert c.b_n == 0.0
    assert c.d_n == pytest.approx(0.01)
    assert c.e_n == pytest.approx(1.0 / math.sqrt(0.99), rel=1e-14)
    assert c.edge_radius == pytest.approx(2.0 * math.sqrt(0.99), rel=1e-14)


def test_coefficients_for_semicircle_moments() -> None:
    c = coefficients(0.0, 2.0, 64)
    assert c.b_n == pytest.approx(1.0 / 64)
    assert c.d_n == pytest.approx(2.0 / 64)
    assert c.e_n == pytest.approx((1.0 - 1.0 / 64) / math.sqrt(1.0 - 2.0 / 64), rel=1e-14)


def test_coefficients_reject_inconsistent_moments() -> None:
    with pytest.raises(MomentInconsistency, match="below"):
        coefficients(1.0, 1.5, 10)
    with pytest.raises(MomentInconsistency, match="too small"):
        coefficients(0.0, 5.0, 2)
    with pytest.raises(ValueError, match="n must be"):
        coefficients(0.0, 2.0, 0)


def test_semicircle_density() -> None:
    assert semicircle_density(0.0) == pytest.approx(1.0 / math.pi)
    assert semicircle_density(2.5) == 0.0
    assert semicircle_density(np.array([-1.0, 1.0])).shape == (2,)


def test_variants_coincide_for_symmetric_moments() -> None:
    c = coefficients(0.0, 3.0, 50)
    x = np.linspace(-2.0, 2.0, 41)
    np.testing.assert_array_equal(th7_density(c, x), v_n_density(c, x))
    np.testing.assert_allclose(v_n_density(c, x), v_n_density(c, -x), atol=1e-15)


def test_variants_differ_by_the_squared_shift() -> None:
    c = coefficients(SKEWED_M3, SKEWED_M4, 64)
    x = np.linspace(-1.9, 1.9, 39)
    gap = v_n_density(c, x) - th7_density(c, x)
    np.testing.assert_allclose(gap, c.a_n**2 * x**2 * semicircle_density(c.e_n * x), atol=1e-15)


def test_v_n_carries_unit_mass() -> None:
    c = coefficients(SKEWED_M3, SKEWED_M4, 256)
    mass = edge_integral(lambda x: v_n_density(c, x), 0.0, c.edge_radius)
    assert mass == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize(
    ("m3", "m4", "n", "expected"),
    [
        (0.0, 1.0, 50, 2.0 / (50 * math.pi)),
        (0.0, 2.0, 50, 0.0),
        (0.5, 3.0, 100, 1.0 / (10 * math.pi)),
        (-0.5, 3.0, 100, 1.0 / (10 * math.pi)),
    ],
)
def test_l1_leading_term(m3: float, m4: float, n: int, expected: float) -> None:
    assert l1_leading_term(m3, m4, n) == pytest.approx(expected, abs=1e-15)


def test_meixner_law_matches_coefficients() -> None:
    c = coefficients(SKEWED_M3, SKEWED_M4, 64)
    law = meixner_law(c)
    assert isinstance(law, FreeMeixnerMeasure)
    assert (law.a, law.b, law.d) == (c.a_n, c.b_n, c.d_n)
    near_semicircle = coefficients(0.0, 2.0, 10**6)
    assert meixner_density_n(near_semicircle, 0.0) == pytest.approx(1.0 / math.pi, rel=1e-5)


def test_meixner_correction_approaches_its_limit() -> None:
    x = np.linspace(-1.9, 1.9, 39)
    c = coefficients(0.0, 2.0, 10**6)
    np.testing.assert_allclose(meixner_correction(c, x), correction_limit(c, x), atol=1e-4)
    skewed = coefficients(0.5, 2.0, 10**6)
    np.testing.assert_allclose(meixner_correction(skewed, x), correction_limit(skewed, x), atol=5e-3)


def test_expansion_profile() -> None:
    c = coefficients(0.0, 1.0, 256)
    profile = expansion_profile(c, GridSpec(lo=-2.5, hi=2.5, points=2001))
    assert profile.mass == pytest.approx(1.0, abs=1e-3)
    assert profile.support == pytest.approx((-c.edge_radius, c.edge_radius))
    with pytest.raises(ValueError, match="variant"):
        expansion_profile(c, GridSpec(), variant="edgeworth")  # type: ignore[arg-type]


def test_expansion_residual_needs_grid_nodes_in_the_window() -> None:
    c = coefficients(0.0, 1.0, 100)
    far = DensityProfile(x0=5.0, dx=0.005, values=(1.0,) * 201, support=(5.0, 6.0), tolerance=1e-12)
    with pytest.raises(EmptyWindow):
        expansion_residual(far, c)


@pytest.mark.parametrize("pair", [(32, 128), (64, 256)])
def test_expansion_residual_decays(skewed, pair: tuple[int, int]) -> None:
    grid = GridSpec(lo=-3.0, hi=3.0, points=2001)
    residuals = []
    for n in pair:
        c = coefficients(SKEWED_M3, SKEWED_M4, n)
        residuals.append(expansion_residual(invert_density(skewed, n, grid), c, variant="th7"))
    assert residuals[1] <= 0.5 * residuals[0]


def test_fit_rate_recovers_a_power_law() -> None:
    ns = [16, 32, 64, 128]
    fit = fit_rate(ns, [3.0 * n**-1.5 for n in ns])
    assert fit.exponent == pytest.approx(1.5, rel=1e-10)
    assert fit.constant == pytest.approx(3.0, rel=1e-10)


@pytest.mark.parametrize(
    ("ns", "values"),
    [([16], [0.1]), ([16, 32], [0.1]), ([16, 32], [0.1, 0.0]), ([0, 32], [0.1, 0.2])],
)
def test_fit_rate_rejects_bad_input(ns: list[int], values: list[float]) -> None:
    with pytest.raises(ValueError, match="fit_rate"):
        fit_rate(ns, values)


def test_expected_leading_terms() -> None:
    assert expected_chi_deficit(SKEWED_M3, 1) == pytest.approx(2.0 / 9.0)
    assert expected_fisher_excess(SKEWED_M3, 4) == pytest.approx(1.0 / 3.0)
    assert expected_chi_deficit(0.0, 10) == 0.0
