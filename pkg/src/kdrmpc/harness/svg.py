"""Minimal SVG line charts (no plotting dependency)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e", "#8c564b"]


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


def line_chart(x, series: dict, hlines: dict | None = None, title: str = "", xlabel: str = "",
               ylabel: str = "", width: int = 640, height: int = 400) -> str:
    hlines = hlines or {}
    finite = [v for ys in series.values() for v in ys if v == v and abs(v) != float("inf")]
    finite += list(hlines.values())
    ylo, yhi = min(finite), max(finite)
    pad = 0.05 * (yhi - ylo or 1.0)
    ylo, yhi = ylo - pad, yhi + pad
    xlo, xhi = min(x), max(x)
    if xhi == xlo:
        xhi = xlo + 1
    L, R, T, B = 60, 170, 30, 45
    pw, ph = width - L - R, height - T - B

    def px(v):
        return L + (v - xlo) / (xhi - xlo) * pw

    def py(v):
        return T + (yhi - v) / (yhi - ylo) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
             f'<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(ylo, yhi):
        parts.append(f'<line x1="{L - 4}" y1="{py(t):.2f}" x2="{L}" y2="{py(t):.2f}" stroke="black"/>')
        parts.append(f'<text x="{L - 6}" y="{py(t) + 4:.2f}" text-anchor="end" font-size="10">{t:g}</text>')
    for t in _ticks(xlo, xhi):
        parts.append(f'<line x1="{px(t):.2f}" y1="{T + ph}" x2="{px(t):.2f}" y2="{T + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{px(t):.2f}" y="{T + ph + 16}" text-anchor="middle" font-size="10">{t:g}</text>')
    parts.append(f'<text x="{L + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">'
                 f'{escape(xlabel)}</text>')
    parts.append(f'<text x="14" y="{T + ph / 2:.1f}" text-anchor="middle" font-size="12" '
                 f'transform="rotate(-90 14 {T + ph / 2:.1f})">{escape(ylabel)}</text>')
    legend_y = T + 10
    for i, (name, v) in enumerate(hlines.items()):
        parts.append(f'<line x1="{L}" y1="{py(v):.2f}" x2="{L + pw}" y2="{py(v):.2f}" stroke="black" '
                     f'stroke-dasharray="6 4"/>')
        parts.append(f'<text x="{L + pw + 8}" y="{legend_y:.1f}" font-size="10">- - {escape(name)}</text>')
        legend_y += 16
    for i, (name, ys) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, ys) if b == b)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{L + pw + 8}" y="{legend_y:.1f}" font-size="10" fill="{color}">'
                     f'{escape(name)}</text>')
        legend_y += 16
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
