"""Load-versus-sinkage line charts written directly as SVG."""

from __future__ import annotations

import math
from html import escape

import numpy as np

WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=70, right=20, top=20, bottom=55)
COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f")


def nice_ticks(lo: float, hi: float, count: int = 6):
    """Round tick values covering ``[lo, hi]``."""
    if not hi > lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(count - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.floor(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 10))
        v += step
    if ticks[-1] < hi:
        ticks.append(round(v, 10))
    return ticks


def load_sinkage_svg(series, title: str | None = None) -> str:
    """SVG chart with load (N) on x and sinkage (mm, downward positive) on y.

    ``series`` is a list of ``(label, load_N, sinkage_m)``; sinkage is given in
    metres and drawn in millimetres. One polyline per series plus a legend.
    """
    pts = [(lab, np.abs(np.asarray(f, float)), 1e3 * np.asarray(z, float)) for lab, f, z in series]
    allf = np.concatenate([p[1] for p in pts]) if pts else np.zeros(0)
    allz = np.concatenate([p[2] for p in pts]) if pts else np.zeros(0)
    xt = nice_ticks(0.0, float(allf.max()) if allf.size else 1.0)
    yt = nice_ticks(min(0.0, float(allz.min())) if allz.size else 0.0,
                    float(allz.max()) if allz.size else 1.0)
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = MARGIN["top"], HEIGHT - MARGIN["bottom"]

    def sx(v):
        return x0 + (v - xt[0]) / (xt[-1] - xt[0]) * (x1 - x0)

    def sy(v):
        # sinkage grows downward, as in a pressure-sinkage plot
        return y0 + (v - yt[0]) / (yt[-1] - yt[0]) * (y1 - y0)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<title>{escape(title)}</title>')
    out.append('<g class="axes" stroke="#444" fill="none">')
    out.append(f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}"/>')
    out.append('</g><g class="ticks" fill="#222">')
    for v in xt:
        x = sx(v)
        out.append(f'<line x1="{x:.2f}" y1="{y1}" x2="{x:.2f}" y2="{y1 + 5}" stroke="#444"/>')
        out.append(f'<text x="{x:.2f}" y="{y1 + 18}" text-anchor="middle">{v:g}</text>')
    for v in yt:
        y = sy(v)
        out.append(f'<line x1="{x0 - 5}" y1="{y:.2f}" x2="{x0}" y2="{y:.2f}" stroke="#444"/>')
        out.append(f'<text x="{x0 - 8}" y="{y + 4:.2f}" text-anchor="end">{v:g}</text>')
    out.append('</g>')
    out.append(f'<text class="xlabel" x="{(x0 + x1) / 2}" y="{HEIGHT - 12}" '
               'text-anchor="middle">Load (N)</text>')
    out.append(f'<text class="ylabel" x="16" y="{(y0 + y1) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(y0 + y1) / 2})">Sinkage (mm)</text>')
    for k, (lab, f, z) in enumerate(pts):
        colour = COLOURS[k % len(COLOURS)]
        coords = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(f, z))
        out.append(f'<polyline class="series" fill="none" stroke="{colour}" stroke-width="1.5" '
                   f'points="{coords}"><title>{escape(lab)}</title></polyline>')
    out.append(f'<g class="legend" transform="translate({x0 + 12},{y1 - 14 - 18 * len(pts)})">')
    for k, (lab, _, _) in enumerate(pts):
        colour = COLOURS[k % len(COLOURS)]
        y = 18 * k
        out.append(f'<line x1="0" y1="{y + 8}" x2="24" y2="{y + 8}" stroke="{colour}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="30" y="{y + 12}">{escape(lab)}</text>')
    out.append('</g></svg>')
    return "\n".join(out) + "\n"
