"""CSV ingestion and machine-readable reports."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, Mode
from .exceptions import ParseError, SchemaError


@dataclass(frozen=True)
class CsvSchema:
    y_col: str
    t_col: str
    z_col: str
    v_col: str
    delimiter: str = ","
    header: bool = True


def _parse_binary(raw: str, col: str, line: int) -> int:
    s = raw.strip()
    if s in ("0", "1"):
        return int(s)
    raise ParseError(f"column {col!r} must be 0 or 1, got {raw!r} at line {line}", line)


def load_csv(path, schema: CsvSchema, mode: Mode, v_support=None) -> Dataset:
    """Read a (Y, T, Z, V) dataset.

    V labels are kept verbatim; the support order is first appearance unless
    v_support pins it. Raises ParseError with the offending line number and
    SchemaError when declared columns are missing.
    """
    ys, ts, zs, vs = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        rows = iter(reader)
        if schema.header:
            try:
                header = next(rows)
            except StopIteration:
                raise SchemaError("file is empty") from None
            header = [h.strip() for h in header]
            try:
                idx = {c: header.index(c) for c in
                       (schema.y_col, schema.t_col, schema.z_col, schema.v_col)}
            except ValueError as exc:
                raise SchemaError(f"missing column: {exc}") from None
            start = 2
        else:
            idx = {schema.y_col: 0, schema.t_col: 1, schema.z_col: 2, schema.v_col: 3}
            start = 1
        for lineno, row in enumerate(rows, start=start):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                y = float(row[idx[schema.y_col]])
            except (ValueError, IndexError):
                raise ParseError(
                    f"column {schema.y_col!r} not numeric at line {lineno}", lineno
                ) from None
            if not np.isfinite(y):
                raise ParseError(f"non-finite outcome at line {lineno}", lineno)
            try:
                t = _parse_binary(row[idx[schema.t_col]], schema.t_col, lineno)
                z = _parse_binary(row[idx[schema.z_col]], schema.z_col, lineno)
                v = row[idx[schema.v_col]].strip()
            except IndexError:
                raise ParseError(f"short row at line {lineno}", lineno) from None
            ys.append(y)
            ts.append(t)
            zs.append(z)
            vs.append(v)
    if not ys:
        raise SchemaError("no data rows")
    return Dataset.from_arrays(
        y=np.array(ys), t=np.array(ts), z=np.array(zs),
        v_labels=np.array(vs, dtype=object), mode=mode,
        v_support=v_support,
    )


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def report_json(report: dict) -> str:
    """Serialise a report dict to stable, lossless JSON."""
    return json.dumps(_to_jsonable(report), indent=2, sort_keys=False)


def format_number(x) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return "."
    return f"{x:.3f}"


def report_text(report: dict) -> str:
    """Plain-text rendering with 3-decimal numbers; same numerical content
    as the JSON output."""
    lines = []

    def emit(prefix, obj):
        if isinstance(obj, dict):
            for k, v in obj.items():
                emit(f"{prefix}{k}." if prefix else f"{k}.", v)
        elif isinstance(obj, (list, tuple, np.ndarray)):
            vals = _to_jsonable(list(obj))
            if all(isinstance(v, (int, float, type(None))) for v in vals):
                lines.append(
                    f"{prefix[:-1]}: "
                    + " ".join(format_number(v) if isinstance(v, float) else str(v)
                               for v in vals)
                )
            else:
                for i, v in enumerate(vals):
                    emit(f"{prefix}{i}.", v)
        elif isinstance(obj, float):
            lines.append(f"{prefix[:-1]}: {format_number(obj)}")
        else:
            lines.append(f"{prefix[:-1]}: {obj}")

    emit("", _to_jsonable(report))
    return "\n".join(lines) + "\n"
