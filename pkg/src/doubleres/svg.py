"""Minimal deterministic SVG 1.1 output: line plots and heatmaps of CSV sheets."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .csvio import CsvSheet

__all__ = ["emit_svg", "colormap", "relative_luminance"]

_W, _H = 640, 440
_PAD_L, _PAD_R, _PAD_T, _PAD_B = 80, 90, 30, 60

# viridis samples at 0, 1/8, ..., 1
_ANCHORS = np.array([
    [68, 1, 84], [71, 44, 122], [59, 81, 139], [44, 113, 142], [33, 144, 141],
    [39, 173, 129], [92, 200, 99], [170, 220, 50], [253, 231, 37],
], dtype=float) / 255.0

_SERIES_COLORS = ["#1f77b4", "#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#66a61e"]


def colormap(t) -> np.ndarray:
    """RGB in [0, 1] for ``t`` in [0, 1] (piecewise-linear viridis)."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    pos = t * (len(_ANCHORS) - 1)
    i = np.minimum(pos.astype(int), len(_ANCHORS) - 2)
    f = (pos - i)[..., None]
    return _ANCHORS[i] * (1 - f) + _ANCHORS[i + 1] * f


def relative_luminance(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=float)
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    return lin @ np.array([0.2126, 0.7152, 0.0722])


def _hex(rgb) -> str:
    r, g, b = (int(round(255 * c)) for c in rgb)
    return f"#{r:02x}{g:02x}{b:02x}"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + k * step for k in range(n)]


def _num(v: float) -> str:
    return f"{v:.4g}"


def _label(name: str, unit: str) -> str:
    return f"{name} ({unit})" if unit else name


def _frame(parts: list[str], x_label: str, y_label: str, xr, yr, title: str | None):
    x0, y0 = _PAD_L, _PAD_T
    w, h = _W - _PAD_L - _PAD_R, _H - _PAD_T - _PAD_B
    parts.append(f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="black"/>')
    for v in _ticks(*xr):
        px = x0 + (v - xr[0]) / ((xr[1] - xr[0]) or 1.0) * w
        parts.append(f'<line x1="{_fmt(px)}" y1="{y0 + h}" x2="{_fmt(px)}" y2="{y0 + h + 5}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(px)}" y="{y0 + h + 18}" font-size="11" text-anchor="middle">{_num(v)}</text>')
    for v in _ticks(*yr):
        py = y0 + h - (v - yr[0]) / ((yr[1] - yr[0]) or 1.0) * h
        parts.append(f'<line x1="{x0 - 5}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 8}" y="{_fmt(py + 4)}" font-size="11" text-anchor="end">{_num(v)}</text>')
    parts.append(f'<text x="{x0 + w / 2:.2f}" y="{_H - 15}" font-size="13" text-anchor="middle">'
                 f'{escape(x_label)}</text>')
    parts.append(f'<text x="18" y="{y0 + h / 2:.2f}" font-size="13" text-anchor="middle" '
                 f'transform="rotate(-90 18 {y0 + h / 2:.2f})">{escape(y_label)}</text>')
    if title:
        parts.append(f'<text x="{x0 + w / 2:.2f}" y="18" font-size="14" text-anchor="middle">'
                     f'{escape(title)}</text>')
    return x0, y0, w, h


def _range(v: np.ndarray) -> tuple[float, float]:
    v = v[np.isfinite(v)]
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _line(sheet: CsvSheet, y_cols: list[int], title):
    x = sheet.data[:, 0]
    ys = [sheet.data[:, j] for j in y_cols]
    xr = _range(x)
    yr = _range(np.concatenate(ys))
    parts: list[str] = []
    xl = _label(*sheet.columns[0])
    yl = ", ".join(_label(*sheet.columns[j]) for j in y_cols)
    x0, y0, w, h = _frame(parts, xl, yl, xr, yr, title)
    for k, y in enumerate(ys):
        pts = []
        for xv, yv in zip(x, y):
            if not (math.isfinite(xv) and math.isfinite(yv)):
                continue
            px = x0 + (xv - xr[0]) / (xr[1] - xr[0]) * w
            py = y0 + h - (yv - yr[0]) / (yr[1] - yr[0]) * h
            pts.append(f"{_fmt(px)},{_fmt(py)}")
        color = _SERIES_COLORS[k % len(_SERIES_COLORS)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>')
    return parts


def _heatmap(sheet: CsvSheet, value_col: int, title):
    a1 = sheet.data[:, 0]
    a2 = sheet.data[:, 1]
    u1 = np.unique(a1)
    u2 = np.unique(a2)
    if u1.size * u2.size != a1.size:
        raise ValueError("heatmap needs a complete rectangular grid in the first two columns")
    grid = sheet.data[:, value_col].reshape(u1.size, u2.size)
    vr = _range(grid)
    parts: list[str] = []
    def edges(u):
        if u.size == 1:
            return np.array([u[0] - 0.5, u[0] + 0.5])
        mid = 0.5 * (u[1:] + u[:-1])
        return np.concatenate([[u[0] - (mid[0] - u[0])], mid, [u[-1] + (u[-1] - mid[-1])]])
    e1, e2 = edges(u1), edges(u2)
    xr, yr = (e1[0], e1[-1]), (e2[0], e2[-1])
    x0, y0, w, h = _frame(parts, _label(*sheet.columns[0]), _label(*sheet.columns[1]), xr, yr, title)
    colors = colormap((grid - vr[0]) / (vr[1] - vr[0]))
    for i in range(u1.size):
        px0 = x0 + (e1[i] - xr[0]) / (xr[1] - xr[0]) * w
        px1 = x0 + (e1[i + 1] - xr[0]) / (xr[1] - xr[0]) * w
        for j in range(u2.size):
            py1 = y0 + h - (e2[j] - yr[0]) / (yr[1] - yr[0]) * h
            py0 = y0 + h - (e2[j + 1] - yr[0]) / (yr[1] - yr[0]) * h
            parts.append(f'<rect x="{_fmt(px0)}" y="{_fmt(py0)}" width="{_fmt(px1 - px0)}" '
                         f'height="{_fmt(py1 - py0)}" fill="{_hex(colors[i, j])}"/>')
    # colour bar
    bx = x0 + w + 20
    for k in range(64):
        t = k / 63.0
        py = y0 + h - (k + 1) / 64.0 * h
        parts.append(f'<rect x="{bx}" y="{_fmt(py)}" width="14" height="{_fmt(h / 64.0 + 0.5)}" '
                     f'fill="{_hex(colormap(t))}"/>')
    parts.append(f'<text x="{bx + 18}" y="{y0 + h}" font-size="10">{_num(vr[0])}</text>')
    parts.append(f'<text x="{bx + 18}" y="{y0 + 10}" font-size="10">{_num(vr[1])}</text>')
    parts.append(f'<text x="{bx}" y="{y0 - 8}" font-size="10">{escape(_label(*sheet.columns[value_col]))}</text>')
    return parts


def emit_svg(sheet: CsvSheet, style: str = "line", value: str | None = None,
             title: str | None = None) -> str:
    """Render ``sheet`` as an SVG document.

    ``line``: first column is x, every other column (or just ``value``) a series.
    ``heatmap``: first two columns are the grid axes, ``value`` (default: the
    third column) gives the colour.
    """
    if style == "line":
        cols = [sheet.index(value)] if value else list(range(1, len(sheet.columns)))
        if not cols:
            raise ValueError("line plot needs at least one y column")
        body = _line(sheet, cols, title)
    elif style == "heatmap":
        if len(sheet.columns) < 3:
            raise ValueError("heatmap needs two axis columns and a value column")
        body = _heatmap(sheet, sheet.index(value) if value else 2, title)
    else:
        raise ValueError(f"unknown style {style!r}")
    head = (f'<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}">\n'
            f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>\n')
    return head + "\n".join(body) + "\n</svg>\n"
