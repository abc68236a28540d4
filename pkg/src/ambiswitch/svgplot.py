"""Minimal self-contained SVG line charts."""
from __future__ import annotations

import math
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")


def _nice_ticks(lo: float, hi: float, n: int = 6) -> list:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _label(v: float) -> str:
    if v != 0 and (abs(v) >= 1e5 or abs(v) < 1e-3):
        return f"{v:.3g}"
    return f"{v:.6g}"


def line_plot(x: Sequence[float], series: dict, *, logy: bool = False, title: str = "",
              xlabel: str = "", ylabel: str = "", width: int = 640, height: int = 420,
              metadata: Optional[str] = None) -> str:
    """SVG document with one polyline per entry of ``series``.

    Values that are missing (None or NaN), or non-positive under ``logy``,
    split a series into separate segments.
    """
    x = np.asarray(x, dtype=float)
    data = {}
    for name, ys in series.items():
        y = np.array([np.nan if v is None else float(v) for v in ys])
        if y.shape != x.shape:
            raise ValueError(f"series {name!r} has {y.size} points, x has {x.size}")
        if logy:
            with np.errstate(divide="ignore", invalid="ignore"):
                y = np.where(y > 0, np.log10(y), np.nan)
        data[name] = y
    finite = np.concatenate([y[np.isfinite(y)] for y in data.values()]) if data else np.array([])
    if finite.size == 0 or not np.isfinite(x).any():
        raise ValueError("nothing to plot: no finite values")
    x_lo, x_hi = float(np.nanmin(x)), float(np.nanmax(x))
    y_lo, y_hi = float(finite.min()), float(finite.max())
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.04 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    left, right, top, bottom = 80, 150, 40 if title else 20, 55
    pw, ph = width - left - right, height - top - bottom

    def sx(v):
        return left + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return top + (1.0 - (v - y_lo) / (y_hi - y_lo)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">']
    if metadata:
        out.append(f"<metadata>{escape(metadata)}</metadata>")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>')
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')

    for t in _nice_ticks(x_lo, x_hi):
        if x_lo <= t <= x_hi:
            px = sx(t)
            out.append(f'<line x1="{px:.2f}" y1="{top + ph}" x2="{px:.2f}" y2="{top + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{px:.2f}" y="{top + ph + 18}" text-anchor="middle">{_label(t)}</text>')
    if logy:
        yticks = [float(k) for k in range(math.ceil(y_lo), math.floor(y_hi) + 1)]
        if len(yticks) < 2:
            yticks = _nice_ticks(y_lo, y_hi)
        fmt = (lambda t: f"1e{int(t)}" if float(t).is_integer() else _label(10 ** t))
    else:
        yticks = _nice_ticks(y_lo, y_hi)
        fmt = _label
    for t in yticks:
        if y_lo <= t <= y_hi:
            py = sy(t)
            out.append(f'<line x1="{left}" y1="{py:.2f}" x2="{left + pw}" y2="{py:.2f}" stroke="#dddddd"/>')
            out.append(f'<text x="{left - 6}" y="{py + 4:.2f}" text-anchor="end">{fmt(t)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel or logy:
        text = (ylabel or "") + (" (log scale)" if logy else "")
        out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(text.strip())}</text>')

    for k, (name, y) in enumerate(data.items()):
        colour = PALETTE[k % len(PALETTE)]
        ok = np.isfinite(y) & np.isfinite(x)
        idx = np.flatnonzero(ok)
        runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1) if idx.size else []
        for run in runs:
            pts = " ".join(f"{sx(x[j]):.2f},{sy(y[j]):.2f}" for j in run)
            if run.size == 1:
                j = run[0]
                out.append(f'<circle cx="{sx(x[j]):.2f}" cy="{sy(y[j]):.2f}" r="2.5" fill="{colour}"/>')
            else:
                out.append(f'<polyline class="series" data-name="{escape(name)}" points="{pts}" '
                           f'fill="none" stroke="{colour}" stroke-width="1.8"/>')
        ly = top + 16 + 18 * k
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 36}" y2="{ly}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 42}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
