from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from freeclt.services.reports import ReportTable, build_csv, build_json, emit, render


def _table() -> ReportTable:
    return ReportTable(
        "demo",
        ("n", "value", "flag", "missing"),
        [
            {"n": 1, "value": 0.1, "flag": True, "missing": None},
            {"n": 2, "value": math.inf, "flag": False},
        ],
    )


def test_csv_layout() -> None:
    text = build_csv(_table())
    assert text == "n,value,flag,missing\n1,0.10000000000000001,true,\n2,,false,\n"


def test_json_layout() -> None:
    text = build_json(_table())
    assert text.endswith("}\n")
    assert '"value": 0.10000000000000001' in text
    payload = json.loads(text)
    assert payload["schema"] == 1
    assert payload["command"] == "demo"
    assert payload["rows"][0] == {"n": 1, "value": 0.1, "flag": True, "missing": None}
    assert payload["rows"][1] == {"n": 2, "value": None, "flag": False, "missing": None}


def test_json_writes_lists_at_full_precision() -> None:
    table = ReportTable("density", ("n", "x"), [{"n": 4, "x": [1.0 / 3.0, -2.5]}])
    text = build_json(table)
    assert "[0.33333333333333331, -2.5]" in text
    assert json.loads(text)["rows"][0]["x"] == [1.0 / 3.0, -2.5]


def test_render_dispatches_on_format() -> None:
    table = _table()
    assert render(table, "csv") == build_csv(table)
    assert render(table, "json") == build_json(table)


def test_unsupported_values_are_rejected() -> None:
    table = ReportTable("demo", ("n",), [{"n": object()}])
    with pytest.raises(TypeError, match="Cannot encode"):
        build_json(table)


def test_emit_to_file_and_stdout(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    target = tmp_path / "out" / "table.csv"
    emit("a,b\n1,2\n", target)
    assert target.read_bytes() == b"a,b\n1,2\n"

    emit("a,b\n", None)
    assert capsys.readouterr().out == "a,b\n"
