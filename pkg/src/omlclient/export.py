"""CSV and SVG export of evaluation tables.

The heatmap bins two log-transformed hyperparameter columns on a 20x20 grid.
Bin edges are ``lo + (hi - lo) * k / 20``; a value falls in bin ``i`` when
``edge[i] <= v < edge[i + 1]``, the last bin being closed on the right. When
an axis has a single distinct value, everything falls in bin 0.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Sequence
from xml.sax.saxutils import escape

from .arff import format_number
from .protocol import EvaluationTable

GRID = 20
_CELL = 20
_MARGIN = 60


class ExportError(ValueError):
    pass


def _cell_text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format_number(value)
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True)
    return str(value)


def transform_logs(
    table: EvaluationTable, log10_cols: Sequence[str] = (), ln_cols: Sequence[str] = ()
) -> EvaluationTable:
    """Replace the listed columns by their base-10 or natural logarithms."""
    funcs = {c: math.log10 for c in log10_cols} | {c: math.log for c in ln_cols}
    for col in funcs:
        if col not in table.columns:
            raise ExportError(f"no such column: {col}")
    idx = {table.columns.index(c): f for c, f in funcs.items()}
    rows = []
    for n, row in enumerate(table.rows):
        out = list(row)
        for i, func in idx.items():
            try:
                value = float(row[i])
            except (TypeError, ValueError):
                raise ExportError(f"row {n}, column {table.columns[i]}: {row[i]!r} is not a real number") from None
            if not value > 0:
                raise ExportError(f"row {n}, column {table.columns[i]}: log of non-positive value {row[i]!r}")
            out[i] = func(value)
        rows.append(tuple(out))
    return EvaluationTable(table.columns, tuple(rows))


def to_csv(table: EvaluationTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_cell_text(v) for v in row])
    return buf.getvalue()


def bin_edges(values: Sequence[float]) -> list[float]:
    lo, hi = min(values), max(values)
    return [lo + (hi - lo) * k / GRID for k in range(GRID + 1)]


def bin_index(edges: Sequence[float], value: float) -> int:
    if edges[0] == edges[-1]:
        return 0
    return min(max(bisect.bisect_right(edges, value) - 1, 0), GRID - 1)


def heatmap_cells(xs: Sequence[float], ys: Sequence[float], zs: Sequence[float]) -> dict[tuple[int, int], tuple[float, int]]:
    """Mean of ``zs`` per occupied ``(x_bin, y_bin)`` cell, with the cell count."""
    ex, ey = bin_edges(xs), bin_edges(ys)
    groups: dict[tuple[int, int], list[float]] = {}
    for x, y, z in zip(xs, ys, zs):
        groups.setdefault((bin_index(ex, x), bin_index(ey, y)), []).append(z)
    return {cell: (math.fsum(v) / len(v), len(v)) for cell, v in sorted(groups.items())}


def _colour(t: float) -> str:
    # blue (low) -> white -> red (high)
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        s = t / 0.5
        r, g, b = 33 + (247 - 33) * s, 102 + (247 - 102) * s, 172 + (247 - 172) * s
    else:
        s = (t - 0.5) / 0.5
        r, g, b = 247 + (178 - 247) * s, 247 + (24 - 247) * s, 247 + (43 - 247) * s
    return f"#{round(r):02x}{round(g):02x}{round(b):02x}"


def heatmap_svg(xs: Sequence[float], ys: Sequence[float], zs: Sequence[float], x_label: str, y_label: str, title: str = "") -> str:
    cells = heatmap_cells(xs, ys, zs)
    means = [m for m, _ in cells.values()]
    lo, hi = min(means), max(means)
    size = GRID * _CELL
    width = height = size + 2 * _MARGIN
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{size}" height="{size}" fill="none" stroke="#000000"/>',
    ]
    for (i, j), (mean, count) in cells.items():
        t = 0.5 if hi == lo else (mean - lo) / (hi - lo)
        x = _MARGIN + i * _CELL
        y = _MARGIN + (GRID - 1 - j) * _CELL
        out.append(
            f'<rect class="cell" x="{x}" y="{y}" width="{_CELL}" height="{_CELL}" fill="{_colour(t)}">'
            f"<title>cell {i},{j} mean={format_number(mean)} n={count}</title></rect>"
        )
    out += [
        f'<text x="{_MARGIN + size / 2}" y="{height - 15}" text-anchor="middle">{escape(x_label)}</text>',
        f'<text x="15" y="{_MARGIN + size / 2}" text-anchor="middle" '
        f'transform="rotate(-90 15 {_MARGIN + size / 2})">{escape(y_label)}</text>',
        f'<text x="{width / 2}" y="30" text-anchor="middle">{escape(title)}</text>',
        "</svg>",
    ]
    return "\n".join(out) + "\n"


def export_evaluations(
    table: EvaluationTable,
    log_cols: Sequence[str],
    out: str | Path,
    ln_cols: Sequence[str] = (),
    value_column: str = "value",
) -> int:
    """Write the table as CSV with log-transformed columns; return rows written.

    With exactly two transformed columns a heatmap of mean ``value_column`` is
    written next to the CSV as ``<out>.svg``.
    """
    transformed = transform_logs(table, log_cols, ln_cols)
    out = Path(out)
    out.write_text(to_csv(transformed), encoding="utf-8", newline="")
    axes = list(log_cols) + list(ln_cols)
    if len(axes) == 2 and transformed.rows:
        xs = [float(v) for v in transformed.column(axes[0])]
        ys = [float(v) for v in transformed.column(axes[1])]
        zs = [float(v) for v in transformed.column(value_column)]
        scale = lambda c: "log10" if c in log_cols else "ln"  # noqa: E731
        svg = heatmap_svg(xs, ys, zs, f"{axes[0]} ({scale(axes[0])})", f"{axes[1]} ({scale(axes[1])})", "performance landscape")
        Path(f"{out}.svg").write_text(svg, encoding="utf-8", newline="")
    return len(transformed.rows)
