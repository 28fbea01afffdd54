"""Dependency-free SVG rendering of KL-vs-iteration summaries.

Output bytes depend only on the input rows, so identical summaries give
identical files.
"""

from __future__ import annotations

import math
import os
from typing import Sequence

from .experiment import METHODS, SummaryRow

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 110, 20, 50
COLORS = {"mcmc": "#1f4e9c", "opad": "#c0392b", "opad+": "#1e8449"}
FLOOR = 1e-16


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def emit_plot(summary: Sequence[SummaryRow], path: str | os.PathLike, title: str = "KL divergence") -> None:
    """Write mean KL per method on a log axis with shaded 95% bands."""
    if not summary:
        raise ValueError("cannot plot an empty summary")
    methods = [m for m in METHODS if any(r.method == m for r in summary)]
    methods += sorted({r.method for r in summary} - set(methods))
    iters = sorted({r.iteration for r in summary})
    values = [v for r in summary for v in (r.mean, r.lo, r.hi) if v is not None and v > FLOOR]
    lo_v = min(values) if values else FLOOR
    hi_v = max(values) if values else 1.0
    y_lo = math.floor(math.log10(max(lo_v, FLOOR)))
    y_hi = math.ceil(math.log10(max(hi_v, FLOOR)))
    if y_hi <= y_lo:
        y_hi = y_lo + 1
    x_lo, x_hi = iters[0], iters[-1]
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def sx(it: float) -> float:
        if x_hi == x_lo:
            return MARGIN_L + pw / 2
        return MARGIN_L + pw * (it - x_lo) / (x_hi - x_lo)

    def sy(v: float) -> float:
        lv = math.log10(min(max(v, 10.0 ** y_lo), 10.0 ** y_hi))
        return MARGIN_T + ph * (y_hi - lv) / (y_hi - y_lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<title>{title}</title>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for e in range(y_lo, y_hi + 1):
        y = _fmt(sy(10.0 ** e))
        out.append(f'<line x1="{MARGIN_L}" y1="{y}" x2="{MARGIN_L + pw}" y2="{y}" stroke="#ddd"/>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{y}" text-anchor="end" dominant-baseline="middle">1e{e}</text>')
    for it in (x_lo, x_hi) if x_hi != x_lo else (x_lo,):
        out.append(f'<text x="{_fmt(sx(it))}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle">{it}</text>')
    out.append(f'<text x="{MARGIN_L + pw / 2:.2f}" y="{HEIGHT - 10}" text-anchor="middle">iteration</text>')
    out.append(f'<text x="14" y="{MARGIN_T + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {MARGIN_T + ph / 2:.2f})">KL (log scale)</text>')

    for k, m in enumerate(methods):
        color = COLORS.get(m, "#555")
        rows = sorted((r for r in summary if r.method == m), key=lambda r: r.iteration)
        band = [r for r in rows if r.lo is not None and r.hi is not None]
        if len(band) > 1:
            upper = [f"{_fmt(sx(r.iteration))},{_fmt(sy(r.hi))}" for r in band]
            lower = [f"{_fmt(sx(r.iteration))},{_fmt(sy(r.lo))}" for r in reversed(band)]
            out.append(f'<polygon class="band" points="{" ".join(upper + lower)}" '
                       f'fill="{color}" fill-opacity="0.2" stroke="none"/>')
        pts = [f"{_fmt(sx(r.iteration))},{_fmt(sy(r.mean))}" for r in rows]
        if len(pts) > 1:
            out.append(f'<polyline class="mean" data-method="{m}" points="{" ".join(pts)}" '
                       f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        for p in pts if len(pts) <= 60 else (pts[0], pts[-1]):
            x, y = p.split(",")
            out.append(f'<circle class="marker" data-method="{m}" cx="{x}" cy="{y}" r="2.5" fill="{color}"/>')
        ly = MARGIN_T + 14 + 16 * k
        lx = WIDTH - MARGIN_R + 10
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}" dominant-baseline="middle">{m.upper()}</text>')
    out.append("</svg>\n")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(out))
    except OSError as exc:
        raise OSError(f"cannot write plot to {os.fspath(path)!r}: {exc.strerror}") from exc
