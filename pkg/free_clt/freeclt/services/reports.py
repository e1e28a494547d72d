from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from freeclt.models.schemas import OutputFormat

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ReportTable:
    command: str
    columns: Sequence[str]
    rows: Sequence[Mapping[str, Any]]


def build_csv(table: ReportTable) -> str:
    """Header row plus one line per row; floats with 17 significant digits, LF endings."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_format_cell(row.get(col)) for col in table.columns])
    return buffer.getvalue()


def build_json(table: ReportTable) -> str:
    """``{"schema": 1, "command": ..., "rows": [...]}`` with 17-digit floats."""
    payload = {
        "schema": SCHEMA_VERSION,
        "command": table.command,
        "rows": [{col: row.get(col) for col in table.columns} for row in table.rows],
    }
    return _encode(payload) + "\n"


def render(table: ReportTable, output_format: OutputFormat) -> str:
    return build_json(table) if output_format == "json" else build_csv(table)


def emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _format_float(value: float) -> str:
    return f"{value:.17g}"


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _format_float(value) if math.isfinite(value) else ""
    return str(value)


def _encode(value: Any) -> str:
    # json.dumps writes shortest round-trip floats; every float here is written at 17 digits.
    if value is None or isinstance(value, bool):
        return json.dumps(value)
    if isinstance(value, float):
        return _format_float(value) if math.isfinite(value) else "null"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, Mapping):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in value) + "]"
    raise TypeError(f"Cannot encode {type(value).__name__} as JSON")
