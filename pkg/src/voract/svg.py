"""Minimal deterministic SVG polyline charts.

Hand-rolled so run artifacts stay dependency-free and bit-reproducible:
no timestamps, fixed float formatting, series drawn in input order.
"""

from __future__ import annotations

import numpy as np

__all__ = ["polyline_chart"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def polyline_chart(path, x, series, title: str, width: int = 640, height: int = 360,
                   margin: int = 45) -> None:
    """Write a polyline chart to ``path``.

    ``series`` is a list of (label, y-array); all share the x-array.
    """
    x = np.asarray(x, dtype=float)
    ys = [(label, np.asarray(y, dtype=float)) for label, y in series]
    y_all = np.concatenate([y for _, y in ys]) if ys else np.zeros(1)
    x_lo, x_hi = float(np.min(x)), float(np.max(x))
    y_lo, y_hi = float(np.min(y_all)), float(np.max(y_all))
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    def sx(v):
        return margin + (v - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14" '
        f'font-family="sans-serif">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
    ]
    for tick in np.linspace(x_lo, x_hi, 5):
        px = sx(tick)
        lines.append(f'<text x="{_fmt(px)}" y="{height - margin + 18}" text-anchor="middle" '
                     f'font-size="10" font-family="sans-serif">{_fmt(tick)}</text>')
    for tick in np.linspace(y_lo, y_hi, 5):
        py = sy(tick)
        lines.append(f'<text x="{margin - 6}" y="{_fmt(py + 3)}" text-anchor="end" '
                     f'font-size="10" font-family="sans-serif">{_fmt(tick)}</text>')
    for i, (label, y) in enumerate(ys):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, y))
        lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        lines.append(f'<text x="{width - margin}" y="{margin + 14 * i}" text-anchor="end" '
                     f'font-size="11" font-family="sans-serif" fill="{color}">{label}</text>')
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
