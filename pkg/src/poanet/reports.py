"""Deterministic report emission.

All numeric output is rounded to 12 significant digits; field order is fixed
by the caller-supplied structures; newlines are always ``\\n``. Re-emitting
the same data yields byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np

__all__ = ["round_floats", "render_json", "render_csv", "emit_report"]


def round_floats(obj):
    """Recursively round floats to 12 significant digits; arrays become lists."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(f"{float(obj):.12g}")
    if isinstance(obj, np.ndarray):
        return [round_floats(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def render_json(payload) -> str:
    return json.dumps(round_floats(payload), indent=2, ensure_ascii=True) + "\n"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def render_csv(columns, rows) -> str:
    lines = [",".join(str(c) for c in columns)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def emit_report(results, format: str, path) -> str:
    """Write a report and return the emitted text.

    ``format="json"`` takes any JSON-representable payload;
    ``format="csv"`` takes ``{"columns": [...], "rows": [[...], ...]}``.
    """
    if format == "json":
        text = render_json(results)
    elif format == "csv":
        text = render_csv(results["columns"], results["rows"])
    else:
        raise ValueError(f"unknown report format {format!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text
