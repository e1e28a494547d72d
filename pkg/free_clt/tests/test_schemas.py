from __future__ import annotations

import math

import pytest
from pydantic import TypeAdapter, ValidationError

from freeclt.models.schemas import (
    CHI_SEMICIRCLE,
    ENTROPY_OFFSET,
    AtomicMeasure,
    CLTCoefficients,
    DensityProfile,
    EntropyReport,
    FreeMeixnerMeasure,
    GridSpec,
    Measure,
    RunConfig,
    SubordinationSolution,
    TauRepresentation,
)


def test_atomic_measure_requires_increasing_positions() -> None:
    with pytest.raises(ValidationError):
        AtomicMeasure(atoms=((1.0, 0.5), (-1.0, 0.5)))


def test_atomic_measure_requires_unit_mass() -> None:
    with pytest.raises(ValidationError):
        AtomicMeasure(atoms=((-1.0, 0.5), (1.0, 0.4)))


def test_atomic_measure_forbids_extra_fields() -> None:
    with pytest.raises(ValidationError):
        AtomicMeasure.model_validate({"atoms": [[0.0, 1.0]], "unexpected": 1})


def test_measure_union_dispatches_on_kind() -> None:
    adapter = TypeAdapter(Measure)
    m = adapter.validate_python({"kind": "meixner", "a": 0.1, "b": 0.02, "d": 0.05})
    assert isinstance(m, FreeMeixnerMeasure)
    with pytest.raises(ValidationError):
        adapter.validate_python({"kind": "cauchy"})


def test_meixner_rejects_parameters_with_atoms() -> None:
    # b >= 1 leaves no compact support.
    with pytest.raises(ValidationError):
        FreeMeixnerMeasure(a=0.0, b=1.0, d=0.0)
    # f(x) = x^2/2 + 3x/2 + 1 vanishes at the lower edge x = -1.
    with pytest.raises(ValidationError):
        FreeMeixnerMeasure(a=3.0, b=0.5, d=0.0)


def test_density_profile_checks_mass_and_support() -> None:
    DensityProfile(x0=-1.0, dx=1.0, values=(0.5, 0.5, 0.5), support=(-1.0, 1.0), tolerance=1e-12)
    with pytest.raises(ValidationError):
        DensityProfile(x0=-1.0, dx=1.0, values=(0.5, 0.5, 0.5), support=(-2.0, 1.0))
    with pytest.raises(ValidationError):
        DensityProfile(x0=-1.0, dx=1.0, values=(1.0, 1.0, 1.0), support=(-1.0, 1.0), tolerance=1e-3)
    with pytest.raises(ValidationError):
        DensityProfile(x0=-1.0, dx=1.0, values=(0.5, -0.1, 0.5), support=(-1.0, 1.0), tolerance=1.0)


def test_tau_representation_checks_mass_and_interlacing() -> None:
    moments = (1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0)
    TauRepresentation(atoms=((0.0, 1.0),), source_moments=moments, source_atoms=((-1.0, 0.5), (1.0, 0.5)))
    with pytest.raises(ValidationError):
        TauRepresentation(atoms=((0.0, 0.9),), source_moments=moments)
    with pytest.raises(ValidationError):
        TauRepresentation(atoms=((2.0, 1.0),), source_atoms=((-1.0, 0.5), (1.0, 0.5)))


def test_tau_representation_moment() -> None:
    tau = TauRepresentation(atoms=((-1.0, 0.25), (2.0, 0.75)))
    assert tau.total_mass == pytest.approx(1.0)
    assert tau.moment(1) == pytest.approx(-0.25 + 1.5)
    assert tau.moment(2) == pytest.approx(0.25 + 3.0)


def test_subordination_solution_enforces_contract() -> None:
    SubordinationSolution(z=3j, n=2, Z=3.3j, Sn=None, iterations=4, residual=1e-14, tol=3e-12)
    with pytest.raises(ValueError, match="Residual"):
        SubordinationSolution(z=3j, n=2, Z=3.3j, Sn=None, iterations=4, residual=1e-6, tol=3e-12)
    with pytest.raises(ValueError, match="Im Z"):
        SubordinationSolution(z=3j, n=2, Z=1.0j, Sn=None, iterations=4, residual=0.0, tol=3e-12)


def test_clt_coefficients_validate_formulas() -> None:
    c = CLTCoefficients(n=100, m3=0.0, m4=1.0, a_n=0.0, b_n=0.0, d_n=0.01, e_n=1.0 / math.sqrt(0.99))
    assert c.d_n - c.b_n == pytest.approx(1.0 / 100)
    assert c.edge_radius == pytest.approx(2.0 * math.sqrt(0.99))
    with pytest.raises(ValidationError):
        CLTCoefficients(n=100, m3=0.0, m4=1.0, a_n=0.1, b_n=0.0, d_n=0.01, e_n=1.0 / math.sqrt(0.99))


def test_entropy_report_uses_camel_case_aliases() -> None:
    report = EntropyReport.from_values(n=4, log_energy=-0.25, fisher=1.0)
    assert report.chi == pytest.approx(CHI_SEMICIRCLE)
    assert report.chi - report.log_energy == pytest.approx(ENTROPY_OFFSET)
    dumped = report.model_dump(by_alias=True)
    assert set(dumped) == {"n", "chi", "fisher", "logEnergy", "chiDeficit", "fisherExcess"}
    with pytest.raises(ValidationError):
        EntropyReport(n=4, chi=1.0, fisher=1.0, log_energy=0.0, chi_deficit=0.0, fisher_excess=0.0)


def test_grid_spec_and_run_config_defaults() -> None:
    grid = GridSpec()
    assert grid.points == 2001
    assert grid.nodes()[0] == -4.0
    assert grid.nodes()[-1] == pytest.approx(4.0)
    with pytest.raises(ValidationError):
        GridSpec(lo=1.0, hi=-1.0)
    with pytest.raises(ValidationError):
        GridSpec(points=200)

    cfg = RunConfig(measure="semicircle")
    assert cfg.ns == (16, 32, 64, 128, 256)
    assert RunConfig(measure="semicircle", n=5).ns == (5,)
    with pytest.raises(ValidationError):
        RunConfig(measure="semicircle", n=0)
    with pytest.raises(ValidationError):
        RunConfig(measure="semicircle", n_list=())
