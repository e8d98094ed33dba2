"""Minimal hand-written SVG line and scatter plots.

Output depends only on the input numbers, so identical reports give
identical bytes.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 360
MARGIN = 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x):
    return f"{x:.2f}"


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _frame(title, xlabel, ylabel, xr, yr):
    x0, x1 = MARGIN, WIDTH - 20
    y0, y1 = HEIGHT - MARGIN, 30
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) // 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{(y0 + y1) // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {(y0 + y1) // 2})">{escape(ylabel)}</text>',
    ]
    for v, px in ((xr[0], x0), (xr[1], x1)):
        parts.append(f'<text x="{px}" y="{y0 + 15}" text-anchor="middle" font-size="10">{v:g}</text>')
    for v, py in ((yr[0], y0), (yr[1], y1)):
        parts.append(f'<text x="{x0 - 4}" y="{py + 4}" text-anchor="end" font-size="10">{v:g}</text>')
    return parts, _scale(xr[0], xr[1], x0, x1), _scale(yr[0], yr[1], y0, y1)


def _legend(parts, names):
    for i, name in enumerate(names):
        y = 40 + 14 * i
        color = PALETTE[i % len(PALETTE)]
        parts.append(f'<rect x="{WIDTH - 110}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{WIDTH - 96}" y="{y + 1}" font-size="11">{escape(name)}</text>')


def _range(values, pad=0.0):
    lo, hi = min(values), max(values)
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    return lo - pad, hi + pad


def line_plot(series, title, xlabel, ylabel, xrange=None, yrange=None):
    """``series`` maps a name to a list of (x, y) pairs."""
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if not xs:
        raise ValueError("nothing to plot")
    parts, fx, fy = _frame(title, xlabel, ylabel, xrange or _range(xs), yrange or _range(ys))
    for i, (name, pts) in enumerate(series.items()):
        path = " ".join(f"{_fmt(fx(x))},{_fmt(fy(y))}" for x, y in pts)
        parts.append(f'<polyline fill="none" stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="1.5" points="{path}"/>')
    _legend(parts, list(series))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter_plot(series, title, xlabel, ylabel):
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if not xs:
        raise ValueError("nothing to plot")
    parts, fx, fy = _frame(title, xlabel, ylabel, _range(xs, 10.0), _range(ys, 0.05))
    for i, (name, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        for x, y in pts:
            parts.append(f'<circle cx="{_fmt(fx(x))}" cy="{_fmt(fy(y))}" r="3" fill="{color}"/>')
    _legend(parts, list(series))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
