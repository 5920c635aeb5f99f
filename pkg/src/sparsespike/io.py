"""CSV and JSON output with fixed schemas, plus a validator for them."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import ParameterError

MANIFEST_SCHEMA_VERSION = 1

SCHEMAS: dict[str, tuple[str, ...]] = {
    "wigner_curve": ("gamma", "lambda", "rho", "rescaled_mi", "matrix_mmse_rescaled",
                     "argmin_q_over_rho", "near_degenerate"),
    "wishart_curve": ("gamma", "lambda", "q_u_star", "q_v_star", "mmse_vv_rescaled",
                      "mmse_uu_rescaled", "mmse_uv_rescaled"),
    "channel": ("snr", "mutual_information", "mmse", "quadrature_order", "est_abs_error"),
    "wigner_potential": ("q", "value"),
    "wishart_potential": ("q_u", "q_v", "value"),
    "ode_path": ("t", "R", "q"),
    "checks": ("check", "parameters", "statistic", "value", "std_err", "passed"),
}

_TEXT_COLUMNS = {"check", "parameters", "statistic"}
_BOOL_COLUMNS = {"near_degenerate", "passed"}
_INT_COLUMNS = {"quadrature_order"}


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(records, columns, stream) -> None:
    """Write dict records with the given column order; floats at 17 significant digits."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        writer.writerow([format_value(rec.get(c)) for c in columns])


def csv_text(records, columns) -> str:
    buf = io.StringIO()
    write_csv(records, columns, buf)
    return buf.getvalue()


def _parse_float(s):
    v = float(s)
    if s.strip().lower() not in ("nan", "inf", "-inf") and not math.isfinite(v):
        raise ValueError(s)
    return v


def read_csv(text: str, schema: str) -> list[dict]:
    """Parse and validate CSV text against a named schema.

    Raises ParameterError on a wrong header, a ragged row or a cell that
    does not parse as its column type.
    """
    if schema not in SCHEMAS:
        raise ParameterError(f"unknown schema {schema!r}")
    columns = SCHEMAS[schema]
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != columns:
        raise ParameterError(f"header {rows[0] if rows else None!r} does not match schema {schema!r}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(columns):
            raise ParameterError(f"line {lineno}: expected {len(columns)} fields, got {len(row)}")
        rec = {}
        for col, cell in zip(columns, row):
            try:
                if col in _TEXT_COLUMNS:
                    rec[col] = json.loads(cell) if col == "parameters" else cell
                elif col in _BOOL_COLUMNS:
                    if cell not in ("true", "false"):
                        raise ValueError(cell)
                    rec[col] = cell == "true"
                elif col in _INT_COLUMNS:
                    rec[col] = int(cell)
                else:
                    rec[col] = math.nan if cell == "" else _parse_float(cell)
            except ValueError as exc:
                raise ParameterError(f"line {lineno}, column {col!r}: cannot parse {cell!r}") from exc
        out.append(rec)
    return out


def validate_csv(path_or_text, schema: str) -> int:
    """Validate a CSV file (or its text); returns the number of data rows."""
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text()
    return len(read_csv(text, schema))


def dumps_json(obj) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip floats, NaN as null."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if hasattr(obj, "__float__"):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def manifest(config: dict, version: str, wall_time: float, extra: dict | None = None) -> dict:
    out = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "library_version": version,
        "config": config,
        "wall_time_s": wall_time,
    }
    if extra:
        out.update(extra)
    return out


def validate_manifest(obj: dict) -> None:
    for key, typ in (("schema_version", int), ("library_version", str),
                     ("config", dict), ("wall_time_s", (int, float))):
        if not isinstance(obj.get(key), typ):
            raise ParameterError(f"manifest field {key!r} missing or of the wrong type")
    if obj["schema_version"] != MANIFEST_SCHEMA_VERSION:
        raise ParameterError(f"unsupported manifest schema version {obj['schema_version']!r}")
