from __future__ import annotations

import math

import pytest

from freeclt.errors import ParseError
from freeclt.models.schemas import ArcsineMeasure, AtomicMeasure, FreeMeixnerMeasure, SemicircleMeasure
from freeclt.services.measure_spec import parse_measure


def test_parses_every_family() -> None:
    assert parse_measure("semicircle") == SemicircleMeasure()
    assert parse_measure(" arcsine( 0 , 1.5 ) ") == ArcsineMeasure(center=0.0, halfwidth=1.5)
    assert parse_measure("meixner(0,0,0)") == FreeMeixnerMeasure(a=0.0, b=0.0, d=0.0)
    bernoulli = parse_measure("atoms((-1,0.5),(1,0.5))")
    assert isinstance(bernoulli, AtomicMeasure)
    assert bernoulli.atoms == ((-1.0, 0.5), (1.0, 0.5))


def test_std_suffix_standardizes() -> None:
    m = parse_measure("atoms((0,0.75),(1,0.25)):std")
    assert isinstance(m, AtomicMeasure)
    (u0, w0), (u1, w1) = m.atoms
    assert u0 == pytest.approx(-1.0 / math.sqrt(3.0), abs=1e-14)
    assert u1 == pytest.approx(math.sqrt(3.0), abs=1e-14)
    assert (w0, w1) == (0.75, 0.25)


def test_atoms_may_come_unsorted() -> None:
    m = parse_measure("atoms((1,0.25),(0,0.75))")
    assert m.atoms == ((0.0, 0.75), (1.0, 0.25))


@pytest.mark.parametrize(
    ("spec", "offset", "expected"),
    [
        ("", 0, "a measure"),
        ("cauchy(1)", 0, "one of semicircle"),
        ("atoms((0,1)", 11, "')'"),
        ("atoms((0,1)):foo", 13, "'std'"),
        ("semicircle x", 11, "end of input"),
        ("atoms((0,1))#", 12, "a token"),
        ("meixner(0,0)", 11, "','"),
        ("atoms((0,0.5),(1,0.4))", 0, "admissible parameters"),
        ("meixner(0,1,0)", 0, "admissible parameters"),
        ("arcsine(0,-1)", 0, "a positive halfwidth"),
    ],
)
def test_errors_report_byte_offset_and_expectation(spec: str, offset: int, expected: str) -> None:
    with pytest.raises(ParseError) as info:
        parse_measure(spec)
    assert info.value.offset == offset
    assert expected in info.value.expected
    assert f"at byte {offset}" in str(info.value)
    assert info.value.qualified_name == "cli.ParseError"


def test_offsets_count_utf8_bytes() -> None:
    with pytest.raises(ParseError) as info:
        parse_measure("\u00a0semicircle x")
    assert info.value.offset == 13
