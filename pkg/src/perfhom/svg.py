"""Minimal log-log line chart for the rate study, written as plain SVG."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def loglog_chart(series: dict, title: str = "", width: int = 560, height: int = 420,
                 reference_slope: float | None = 1.0) -> str:
    """``series`` maps a label to a list of (x, y) pairs with positive entries."""
    pts = [(x, y) for s in series.values() for x, y in s if x > 0 and y > 0]
    if not pts:
        raise ValueError("nothing to plot")
    lx = [math.log10(x) for x, _ in pts]
    ly = [math.log10(y) for _, y in pts]
    x0, x1 = min(lx) - 0.1, max(lx) + 0.1
    y0, y1 = min(ly) - 0.3, max(ly) + 0.3
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def px(v):
        return ml + (math.log10(v) - x0) / (x1 - x0) * pw

    def py(v):
        return mt + (y1 - math.log10(v)) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    if title:
        out.append(f'<text x="{ml + pw / 2:.1f}" y="22" text-anchor="middle">{escape(title)}</text>')
    for k in range(math.ceil(y0), math.floor(y1) + 1):
        yy = py(10.0 ** k)
        out.append(f'<line x1="{ml}" y1="{yy:.1f}" x2="{ml + pw}" y2="{yy:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{ml - 6}" y="{yy + 4:.1f}" text-anchor="end">1e{k}</text>')
    xs = sorted({x for s in series.values() for x, _ in s})
    for x in xs:
        xx = px(x)
        out.append(f'<text x="{xx:.1f}" y="{mt + ph + 18}" text-anchor="middle">{x:.4g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">epsilon</text>')

    legend_y = mt + 10
    for n, (label, s) in enumerate(series.items()):
        s = [(x, y) for x, y in s if x > 0 and y > 0]
        if not s:
            continue
        color = COLORS[n % len(COLORS)]
        path = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in sorted(s))
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in s:
            out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="{color}"/>')
        out.append(f'<line x1="{ml + pw + 10}" y1="{legend_y}" x2="{ml + pw + 30}" y2="{legend_y}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{legend_y + 4}">{escape(label)}</text>')
        legend_y += 18

    if reference_slope is not None:
        # anchored at the largest-epsilon point of the first series
        first = sorted(next(iter(series.values())), reverse=True)
        xr, yr = first[0]
        lo = min(xs)
        y_lo = yr * (lo / xr) ** reference_slope
        out.append(f'<polyline points="{px(xr):.1f},{py(yr):.1f} {px(lo):.1f},{py(y_lo):.1f}" '
                   f'fill="none" stroke="#888" stroke-dasharray="6,4"/>')
        out.append(f'<line x1="{ml + pw + 10}" y1="{legend_y}" x2="{ml + pw + 30}" y2="{legend_y}" '
                   f'stroke="#888" stroke-dasharray="6,4"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{legend_y + 4}">slope {reference_slope:g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
