"""Static SVG figures: metric choropleths and prediction-analysis bar charts.

Output is plain text built from fixed layouts and fixed number formats, so
identical inputs always produce byte-identical files.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping
from xml.sax.saxutils import escape, quoteattr

from ..errors import GeometryError
from ..evaluation import OUTCOMES, EvalCell
from ..facets import FacetSpec
from .geometry import GeometrySet, ring_area_centroid

FONT = "font-family=\"DejaVu Sans, Arial, sans-serif\""
OUTCOME_COLORS = {"tp": "#1b9e77", "fp": "#d95f02", "tn": "#7570b3", "fn": "#e7298a"}
NULL_FILL = "url(#null-hatch)"


def _c(v: float) -> str:
    # coordinates: 3 decimals, no negative zero
    s = f"{v:.3f}"
    return "0.000" if s == "-0.000" else s


def format_value(v: float | None) -> str:
    if v is None:
        return "n/a"
    if math.isinf(v):
        return "inf"
    return f"{v:.3f}"


def parse_hex(color: str) -> tuple[int, int, int]:
    m = re.fullmatch(r"#?([0-9a-fA-F]{6})", color.strip())
    if not m:
        raise ValueError(f"not a #rrggbb color: {color!r}")
    h = m.group(1)
    return int(h[0:2], 16), int(h[2:4], 16), int(h[4:6], 16)


def interpolate(start: str, end: str, t: float) -> tuple[float, float, float]:
    """Channel-wise linear blend in 0..255 space; ``t`` is clipped to [0, 1]."""
    t = min(max(t, 0.0), 1.0)
    a, b = parse_hex(start), parse_hex(end)
    return tuple(x + (y - x) * t for x, y in zip(a, b))


def svg_color(rgb: tuple[float, float, float]) -> str:
    return "rgb(" + ",".join(f"{c / 255 * 100:.4f}%" for c in rgb) + ")"


def parse_svg_color(text: str) -> tuple[float, float, float]:
    parts = re.fullmatch(r"rgb\(([^)]*)\)", text.strip()).group(1).split(",")
    return tuple(float(p.rstrip("%")) * 255 / 100 for p in parts)


@dataclass(frozen=True)
class ChoroplethStyle:
    title: str = ""
    ramp_start: str = "#f7fbff"
    ramp_end: str = "#08306b"
    value_range: tuple[float, float] | None = None


def color_position(v: float, lo: float, hi: float) -> float:
    """Interpolation parameter of ``v`` on the ramp (0 when the range is degenerate)."""
    if math.isinf(v):
        return 1.0 if v > 0 else 0.0
    if hi <= lo:
        return 0.0
    return min(max((v - lo) / (hi - lo), 0.0), 1.0)


def value_range(values: Mapping[str, float | None], style: ChoroplethStyle) -> tuple[float, float] | None:
    if style.value_range is not None:
        return tuple(style.value_range)
    finite = [v for v in values.values() if v is not None and math.isfinite(v)]
    if not finite:
        return None
    return min(finite), max(finite)


def render_choropleth(values: Mapping[str, float | None], geometry: GeometrySet, style: ChoroplethStyle) -> str:
    """One map: each group's region filled by its value on a two-color linear ramp.

    ``None`` values render with a hatch pattern and an "n/a" annotation.
    Regions present in the geometry but absent from ``values`` are drawn
    in neutral grey without annotation.
    """
    unmatched = [g for g in values if g not in geometry.regions]
    if unmatched:
        raise GeometryError(f"groups without geometry: {unmatched}; geometry regions are {geometry.names}")
    width, height = 720, 520
    mx0, my0, mw, mh = 20.0, 50.0, 520.0, 450.0
    minx, miny, maxx, maxy = geometry.bounds()
    scale = min(mw / max(maxx - minx, 1e-12), mh / max(maxy - miny, 1e-12))
    ox = mx0 + (mw - (maxx - minx) * scale) / 2
    oy = my0 + (mh - (maxy - miny) * scale) / 2

    def project(x, y):
        return ox + (x - minx) * scale, oy + (maxy - y) * scale

    rng = value_range(values, style)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        "<defs>",
        '<pattern id="null-hatch" width="8" height="8" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">'
        '<rect width="8" height="8" fill="#eeeeee"/><line x1="0" y1="0" x2="0" y2="8" stroke="#999999" stroke-width="2"/></pattern>',
        f'<linearGradient id="ramp" x1="0" y1="1" x2="0" y2="0">'
        f'<stop offset="0" stop-color="{svg_color(interpolate(style.ramp_start, style.ramp_end, 0.0))}"/>'
        f'<stop offset="1" stop-color="{svg_color(interpolate(style.ramp_start, style.ramp_end, 1.0))}"/></linearGradient>',
        "</defs>",
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2:.0f}" y="30" text-anchor="middle" font-size="18" {FONT}>{escape(style.title)}</text>',
    ]
    labels = []
    for name, polys in geometry.regions.items():
        if name not in values:
            fill, value = "#dddddd", None
        elif values[name] is None or rng is None:
            fill, value = NULL_FILL, values[name]
        else:
            value = values[name]
            fill = svg_color(interpolate(style.ramp_start, style.ramp_end, color_position(value, *rng)))
        d = []
        for poly in polys:
            for ring in poly:
                pts = [project(x, y) for x, y in ring[:-1]]
                d.append("M" + " L".join(f"{_c(px)},{_c(py)}" for px, py in pts) + " Z")
        out.append(
            f'<path d="{" ".join(d)}" fill="{fill}" fill-rule="evenodd" stroke="#333333" stroke-width="1" '
            f"data-group={quoteattr(name)} data-value=\"{format_value(value)}\"/>"
        )
        if name in values:
            outer = max((poly[0] for poly in polys), key=lambda r: abs(ring_area_centroid(r)[0]))
            _, cx, cy = ring_area_centroid(outer)
            px, py = project(cx, cy)
            labels.append(
                f'<text x="{_c(px)}" y="{_c(py)}" text-anchor="middle" font-size="12" {FONT}>'
                f'<tspan x="{_c(px)}" dy="-0.2em">{escape(name)}</tspan>'
                f'<tspan x="{_c(px)}" dy="1.2em" font-weight="bold">{format_value(values[name])}</tspan></text>'
            )
    out.extend(labels)

    bx, by, bw, bh = 580.0, 90.0, 24.0, 360.0
    out.append(f'<rect x="{_c(bx)}" y="{_c(by)}" width="{_c(bw)}" height="{_c(bh)}" fill="url(#ramp)" stroke="#333333"/>')
    if rng is not None:
        lo, hi = rng
        ticks = [(lo, by + bh)] if hi <= lo else [(lo, by + bh), (hi, by)]
        for v, ty in ticks:
            out.append(f'<line x1="{_c(bx + bw)}" y1="{_c(ty)}" x2="{_c(bx + bw + 6)}" y2="{_c(ty)}" stroke="#333333"/>')
            out.append(
                f'<text x="{_c(bx + bw + 9)}" y="{_c(ty + 4)}" font-size="12" {FONT} class="tick">{format_value(v)}</text>'
            )
    else:
        out.append(f'<text x="{_c(bx)}" y="{_c(by - 8)}" font-size="12" {FONT}>no values</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _facet_label(side: str, values) -> str:
    vals = sorted(values)
    shown = ", ".join(vals[:4]) + (", ..." if len(vals) > 4 else "")
    return f"facet {side}: {shown}"


# Plot box of the prediction-analysis chart; rates map linearly onto [PLOT_BOTTOM, PLOT_TOP].
PLOT_TOP, PLOT_BOTTOM, PLOT_LEFT, PLOT_RIGHT = 70.0, 370.0, 70.0, 590.0


def render_prediction_analysis(cell: EvalCell, facet: FacetSpec) -> str | None:
    """Grouped bars of normalized tp/fp/tn/fn for facets a and d.

    Returns ``None`` when the cell has no confusion data for the facet.
    """
    conf = cell.confusion.get(facet.attribute)
    if cell.is_null or conf is None or conf.is_null:
        return None
    width, height = 640, 440
    plot_h = PLOT_BOTTOM - PLOT_TOP
    bar_w, gap, cluster_gap = 48.0, 10.0, 70.0
    cluster_w = 4 * bar_w + 3 * gap
    x_start = PLOT_LEFT + (PLOT_RIGHT - PLOT_LEFT - 2 * cluster_w - cluster_gap) / 2
    title = f"{cell.test_group} predicted by model trained on {cell.train_group} ({facet.attribute})"
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2:.0f}" y="28" text-anchor="middle" font-size="16" {FONT}>{escape(title)}</text>',
        f'<text x="{width / 2:.0f}" y="48" text-anchor="middle" font-size="12" {FONT}>'
        f"accuracy {format_value(cell.accuracy)}, F1 {format_value(cell.f1)}, n {cell.n_test}</text>",
    ]
    for k in range(5):
        v = k / 4
        y = PLOT_BOTTOM - v * plot_h
        out.append(f'<line x1="{_c(PLOT_LEFT)}" y1="{_c(y)}" x2="{_c(PLOT_RIGHT)}" y2="{_c(y)}" stroke="#dddddd"/>')
        out.append(f'<text x="{_c(PLOT_LEFT - 8)}" y="{_c(y + 4)}" text-anchor="end" font-size="11" {FONT}>{v:.2f}</text>')
    out.append(f'<line x1="{_c(PLOT_LEFT)}" y1="{_c(PLOT_TOP)}" x2="{_c(PLOT_LEFT)}" y2="{_c(PLOT_BOTTOM)}" stroke="#333333"/>')
    out.append(f'<line x1="{_c(PLOT_LEFT)}" y1="{_c(PLOT_BOTTOM)}" x2="{_c(PLOT_RIGHT)}" y2="{_c(PLOT_BOTTOM)}" stroke="#333333"/>')
    out.append(
        f'<text x="20" y="{_c((PLOT_TOP + PLOT_BOTTOM) / 2)}" font-size="12" {FONT} text-anchor="middle" '
        f'transform="rotate(-90 20 {_c((PLOT_TOP + PLOT_BOTTOM) / 2)})">rate within facet</text>'
    )
    for c, (side_name, side, members) in enumerate(
        (("a", conf.a, facet.advantaged), ("d", conf.d, facet.disadvantaged))
    ):
        x0 = x_start + c * (cluster_w + cluster_gap)
        rates = side.rates
        for b, outcome in enumerate(OUTCOMES):
            rate = rates[outcome]
            x = x0 + b * (bar_w + gap)
            h = rate * plot_h
            out.append(
                f'<rect x="{_c(x)}" y="{_c(PLOT_BOTTOM - h)}" width="{_c(bar_w)}" height="{_c(h)}" '
                f'fill="{OUTCOME_COLORS[outcome]}" data-facet="{side_name}" data-outcome="{outcome}"/>'
            )
            out.append(
                f'<text x="{_c(x + bar_w / 2)}" y="{_c(PLOT_BOTTOM - h - 4)}" text-anchor="middle" font-size="11" '
                f'{FONT}>{format_value(rate)}</text>'
            )
            out.append(
                f'<text x="{_c(x + bar_w / 2)}" y="{_c(PLOT_BOTTOM + 14)}" text-anchor="middle" font-size="11" '
                f'{FONT}>{outcome.upper()}</text>'
            )
        out.append(
            f'<text x="{_c(x0 + cluster_w / 2)}" y="{_c(PLOT_BOTTOM + 34)}" text-anchor="middle" font-size="12" '
            f"{FONT}>{escape(_facet_label(side_name, members))} (n={side.n})</text>"
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def save_figure(text: str, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", name).strip("-") or "x"
