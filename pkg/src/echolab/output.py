"""CSV, JSON and SVG artifact writers."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class Table:
    """Column-ordered rows plus a unit for every column."""

    columns: list
    units: list
    rows: list = field(default_factory=list)

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    text = str(value)
    if any(c in text for c in ',"\n'):
        text = '"' + text.replace('"', '""') + '"'
    return text


def write_csv(path, table: Table, meta: dict) -> None:
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    lines.append("# units: " + ",".join(table.units))
    lines.append(",".join(table.columns))
    lines += [",".join(fmt(v) for v in row) for row in table.rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> tuple[dict, list, list]:
    """(metadata, columns, rows as lists of strings); for tests and tooling."""
    meta, rows, columns = {}, [], None
    import csv

    with open(path, encoding="utf-8") as fh:
        for row in csv.reader(line for line in fh if line.strip()):
            if row and row[0].startswith("#"):
                text = ",".join(row)[1:].strip()
                key, _, val = text.partition(":")
                meta[key.strip()] = val.strip()
            elif columns is None:
                columns = row
            else:
                rows.append(row)
    return meta, columns, rows


def _jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=False)
        fh.write("\n")


# -- SVG ---------------------------------------------------------------------

_W, _H, _PAD = 640, 420, 56
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _frame(title, xlabel, ylabel, xlim, ylim):
    x0, x1 = xlim
    y0, y1 = ylim
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle">{title}</text>',
        f'<rect x="{_PAD}" y="{_PAD / 2}" width="{_W - 1.5 * _PAD}" height="{_H - 1.5 * _PAD}" '
        'fill="none" stroke="black"/>',
        f'<text x="{_W / 2}" y="{_H - 8}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{_H / 2}" transform="rotate(-90 14 {_H / 2})" '
        f'text-anchor="middle">{ylabel}</text>',
        f'<text x="{_PAD}" y="{_H - _PAD + 16}" text-anchor="middle">{x0:.3g}</text>',
        f'<text x="{_W - _PAD / 2}" y="{_H - _PAD + 16}" text-anchor="middle">{x1:.3g}</text>',
        f'<text x="{_PAD - 4}" y="{_H - _PAD}" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{_PAD - 4}" y="{_PAD / 2 + 10}" text-anchor="end">{y1:.3g}</text>',
    ]


def _limits(values):
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def line_svg(title, xlabel, ylabel, series: dict) -> str:
    """``series``: label -> (xs, ys); labels starting with "_" get no legend entry."""
    allx = [float(x) for xs, _ in series.values() for x in xs]
    ally = [float(y) for _, ys in series.values() for y in ys]
    xlim, ylim = _limits(allx), _limits(ally)
    sx = _scale(*xlim, _PAD, _W - _PAD / 2)
    sy = _scale(*ylim, _H - _PAD, _PAD / 2)
    out = _frame(title, xlabel, ylabel, xlim, ylim)
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{sx(float(x)):.2f},{sy(float(y)):.2f}"
                       for x, y in zip(xs, ys) if math.isfinite(float(y)))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        if not label.startswith("_"):
            out.append(f'<text x="{_W - _PAD}" y="{_PAD / 2 + 16 * (i + 1)}" fill="{color}" '
                       f'text-anchor="end">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmap_svg(title, xlabel, ylabel, xs, ys, z) -> str:
    """``z[i, j]`` is the value at (xs[j], ys[i]); blue-to-red cells."""
    z = np.asarray(z, dtype=float)
    xlim, ylim = _limits(list(map(float, xs))), _limits(list(map(float, ys)))
    zlo, zhi = _limits(z.ravel().tolist())
    out = _frame(title, xlabel, ylabel, xlim, ylim)
    w = (_W - 1.5 * _PAD) / max(len(xs), 1)
    h = (_H - 1.5 * _PAD) / max(len(ys), 1)
    for i in range(len(ys)):
        for j in range(len(xs)):
            v = z[i, j]
            if not math.isfinite(v):
                continue
            f = (v - zlo) / (zhi - zlo)
            r, b = int(255 * f), int(255 * (1 - f))
            out.append(f'<rect x="{_PAD + j * w:.2f}" y="{_H - _PAD - (i + 1) * h:.2f}" '
                       f'width="{w + 0.3:.2f}" height="{h + 0.3:.2f}" fill="rgb({r},60,{b})"/>')
    out.append(f'<text x="{_W - _PAD}" y="{_PAD / 2 + 16}" text-anchor="end">'
               f"{zlo:.3g} .. {zhi:.3g}</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_text(path, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
