"""Minimal deterministic SVG line charts (no plotting dependency)."""

from __future__ import annotations

import math

_W, _H, _PAD = 640, 400, 48.0


def _fmt(v: float) -> str:
    return format(v, ".6g")


def polyline_chart(xs, ys, title: str) -> str:
    """One polyline over a framed plot area; output is a pure function of
    the inputs, so reruns are byte-identical."""
    pts = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(y)]
    if not pts:
        pts = [(0.0, 0.0)]
    lo_x, hi_x = min(p[0] for p in pts), max(p[0] for p in pts)
    lo_y, hi_y = min(p[1] for p in pts), max(p[1] for p in pts)
    if hi_x == lo_x:
        hi_x = lo_x + 1.0
    if hi_y == lo_y:
        hi_y = lo_y + 1.0
    sx = (_W - 2 * _PAD) / (hi_x - lo_x)
    sy = (_H - 2 * _PAD) / (hi_y - lo_y)
    path = " ".join(
        f"{_fmt(_PAD + (x - lo_x) * sx)},{_fmt(_H - _PAD - (y - lo_y) * sy)}"
        for x, y in pts
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}">\n'
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>\n'
        f'<rect x="{_fmt(_PAD)}" y="{_fmt(_PAD)}" width="{_fmt(_W - 2 * _PAD)}" '
        f'height="{_fmt(_H - 2 * _PAD)}" fill="none" stroke="black"/>\n'
        f'<text x="{_fmt(_PAD)}" y="{_fmt(_PAD - 12.0)}" font-size="14">{title}</text>\n'
        f'<text x="{_fmt(_PAD)}" y="{_fmt(_H - 8.0)}" font-size="11">'
        f"x: {_fmt(lo_x)} .. {_fmt(hi_x)}   y: {_fmt(lo_y)} .. {_fmt(hi_y)}</text>\n"
        f'<polyline points="{path}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>\n'
        "</svg>\n"
    )
