"""Minimal self-contained SVG line plots with log-log axes and decade gridlines.

Presentation-only plumbing: emission never feeds back into numeric outputs.
"""

from __future__ import annotations

import math

_WIDTH, _HEIGHT = 720, 480
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 40, 55
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _finite_positive(xs, ys):
    pts = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0 and math.isfinite(x) and math.isfinite(y)]
    return pts


def loglog_plot(path, series, title="", xlabel="iteration", ylabel="residual"):
    """Write a log-log SVG plot.

    ``series`` is a list of (label, xs, ys) triples; non-positive or
    non-finite points are dropped (log axes).
    """
    cleaned = [(label, _finite_positive(xs, ys)) for label, xs, ys in series]
    cleaned = [(label, pts) for label, pts in cleaned if pts]
    if not cleaned:
        cleaned = [("empty", [(1.0, 1.0)])]

    all_x = [p[0] for _, pts in cleaned for p in pts]
    all_y = [p[1] for _, pts in cleaned for p in pts]
    lx0, lx1 = math.floor(math.log10(min(all_x))), math.ceil(math.log10(max(all_x)))
    ly0, ly1 = math.floor(math.log10(min(all_y))), math.ceil(math.log10(max(all_y)))
    if lx1 == lx0:
        lx1 += 1
    if ly1 == ly0:
        ly1 += 1

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(v):
        return _MARGIN_L + (math.log10(v) - lx0) / (lx1 - lx0) * plot_w

    def sy(v):
        return _MARGIN_T + (ly1 - math.log10(v)) / (ly1 - ly0) * plot_h

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">'
    )
    out.append('<rect width="100%" height="100%" fill="white"/>')
    out.append(
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333" stroke-width="1"/>'
    )
    if title:
        out.append(
            f'<text x="{_WIDTH / 2:.1f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{title}</text>'
        )

    for e in range(lx0, lx1 + 1):
        x = sx(10.0 ** e)
        out.append(
            f'<line x1="{x:.2f}" y1="{_MARGIN_T}" x2="{x:.2f}" y2="{_MARGIN_T + plot_h}" '
            'stroke="#ccc" stroke-width="0.7"/>'
        )
        out.append(
            f'<text x="{x:.2f}" y="{_MARGIN_T + plot_h + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">1e{e}</text>'
        )
    for e in range(ly0, ly1 + 1):
        y = sy(10.0 ** e)
        out.append(
            f'<line x1="{_MARGIN_L}" y1="{y:.2f}" x2="{_MARGIN_L + plot_w}" y2="{y:.2f}" '
            'stroke="#ccc" stroke-width="0.7"/>'
        )
        out.append(
            f'<text x="{_MARGIN_L - 6}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">1e{e}</text>'
        )
    out.append(
        f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{_HEIGHT - 14}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{xlabel}</text>'
    )
    out.append(
        f'<text x="18" y="{_MARGIN_T + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {_MARGIN_T + plot_h / 2:.1f})">{ylabel}</text>'
    )

    for k, (label, pts) in enumerate(cleaned):
        color = _COLORS[k % len(_COLORS)]
        step = max(1, len(pts) // 2000)  # keep files small on long traces
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts[::step])
        out.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.6"/>'
        )
        ly = _MARGIN_T + 16 + 16 * k
        out.append(
            f'<line x1="{_MARGIN_L + plot_w - 150}" y1="{ly - 4}" '
            f'x2="{_MARGIN_L + plot_w - 120}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{_MARGIN_L + plot_w - 114}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{label}</text>'
        )
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
