"""Byte-stable JSON / CSV / Markdown report writers."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

SIG_DIGITS = 12
FORMATS = ("json", "csv", "md")


@dataclass
class Report:
    """``kind`` names the schema; ``data`` holds scalars and nested values,
    ``rows`` the tabular part (one dict per row)."""

    kind: str
    data: dict[str, Any] = field(default_factory=dict)
    rows: list[dict[str, Any]] = field(default_factory=list)
    columns: list[str] | None = None

    @property
    def schema(self) -> str:
        return f"ddp.{self.kind}.v1"


def fmt_float(v: float) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    s = format(v, f".{SIG_DIGITS}g")
    return "0" if s == "-0" else s


def normalize(obj):
    """Plain JSON-able structure with floats rounded to 12 significant digits."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = obj.to_dict() if hasattr(obj, "to_dict") else dataclasses.asdict(obj)
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [normalize(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return fmt_float(v)
        return float(fmt_float(v))
    return obj


def _columns(report: Report) -> list[str]:
    if report.columns is not None:
        return list(report.columns)
    cols: list[str] = []
    for row in report.rows:
        for k in row:
            if k not in cols:
                cols.append(k)
    return cols


def _cell(v) -> str:
    v = normalize(v)
    if isinstance(v, float):
        return fmt_float(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True, separators=(",", ":"))
    return "" if v is None else str(v)


def render(report: Report, fmt: str) -> str:
    if fmt == "json":
        doc = {"schema": report.schema, **normalize(report.data), "rows": normalize(report.rows)}
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"
    cols = _columns(report)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in report.rows:
            w.writerow([_cell(row.get(c)) for c in cols])
        return buf.getvalue()
    if fmt == "md":
        lines = [f"# {report.kind}", "", f"schema: `{report.schema}`", ""]
        for k in sorted(report.data):
            lines.append(f"- **{k}**: {_cell(report.data[k])}")
        if cols:
            lines += ["", "| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
            for row in report.rows:
                lines.append("| " + " | ".join(_cell(row.get(c)) for c in cols) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def write_report(report: Report, fmt: str, path) -> None:
    text = render(report, fmt)
    path = os.fspath(path)
    if path == "-":
        print(text, end="")
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
