"""Minimal SVG line charts with a logarithmic y axis."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
WIDTH, HEIGHT = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 80, 170, 40, 60
MAX_POINTS = 2000


def _thin(t: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if t.size <= MAX_POINTS:
        return t, y
    keep = np.unique(np.linspace(0, t.size - 1, MAX_POINTS).astype(int))
    return t[keep], y[keep]


def svg_lines(series: dict[str, tuple], title: str = "", xlabel: str = "iteration t",
              ylabel: str = "f(x(t)) - f*") -> str:
    """Render ``{label: (t, y)}`` as an SVG document; non-positive y values are dropped."""
    clean = {}
    for label, (t, y) in series.items():
        t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
        ok = np.isfinite(y) & (y > 0) & np.isfinite(t)
        if ok.any():
            clean[label] = _thin(t[ok], y[ok])
    if not clean:
        raise ValueError("nothing to plot: every series is empty or non-positive")
    t_lo = min(float(t.min()) for t, _ in clean.values())
    t_hi = max(float(t.max()) for t, _ in clean.values())
    y_lo = math.floor(math.log10(min(float(y.min()) for _, y in clean.values())))
    y_hi = math.ceil(math.log10(max(float(y.max()) for _, y in clean.values())))
    if t_hi == t_lo:
        t_hi = t_lo + 1
    if y_hi == y_lo:
        y_hi = y_lo + 1
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(t):
        return LEFT + (t - t_lo) / (t_hi - t_lo) * pw

    def py(y):
        return TOP + (y_hi - np.log10(y)) / (y_hi - y_lo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    step = max(1, math.ceil((y_hi - y_lo) / 8))
    for e in range(y_lo, y_hi + 1, step):
        yy = py(10.0**e)
        out.append(f'<line x1="{LEFT}" y1="{yy:.2f}" x2="{LEFT + pw}" y2="{yy:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{yy + 4:.2f}" text-anchor="end">1e{e}</text>')
    for k in range(6):
        tv = t_lo + k * (t_hi - t_lo) / 5
        xx = px(tv)
        out.append(f'<line x1="{xx:.2f}" y1="{TOP + ph}" x2="{xx:.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{xx:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{tv:.4g}</text>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for k, (label, (t, y)) in enumerate(clean.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px(t), py(y)))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = TOP + 16 + 18 * k
        out.append(f'<line x1="{LEFT + pw + 12}" y1="{ly - 4}" x2="{LEFT + pw + 36}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 42}" y="{ly}">{escape(label)}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(series: dict[str, tuple], path, **kw) -> None:
    with open(path, "w") as fh:
        fh.write(svg_lines(series, **kw))
