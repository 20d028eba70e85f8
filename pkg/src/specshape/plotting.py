"""SVG rendering of a continuum-removed spectrum with curvature overlays.

Layout follows the classification workbench convention: the continuum-removed
curve in black, a green curvature stem per band, significant concave stems in
red, and a magenta dot on each significant convex band.
"""

from __future__ import annotations

import numpy as np

from .features import FeatureSet
from .preprocess import Spectrum

CURVE_COLOR = "#000000"
STEM_COLOR = "#1A9E1A"
CONCAVE_COLOR = "#D62728"
CONVEX_COLOR = "#E377C2"


def render_feature_svg(cr: Spectrum, fs: FeatureSet, title: str = "",
                       width: int = 960, height: int = 480) -> str:
    n = len(cr)
    margin = 48
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin

    wl = cr.wavelengths
    values = np.nan_to_num(cr.values, nan=0.0)
    kappa = fs.curvature.kappa

    vmax = max(1.0, float(values.max())) * 1.05
    kmax = max(float(np.abs(kappa).max()), fs.threshold, 1e-12) * 1.1

    def px(i: int) -> float:
        return margin + (plot_w * i / max(n - 1, 1))

    def py_value(v: float) -> float:
        return margin + plot_h * (1.0 - v / vmax)

    zero_y = margin + plot_h * 0.5  # curvature axis midline

    def py_kappa(k: float) -> float:
        return zero_y - (k / kmax) * (plot_h * 0.45)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="{margin / 2:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>'
        )

    # axes and the curvature zero line
    parts.append(
        f'<line x1="{margin}" y1="{margin + plot_h}" x2="{margin + plot_w}" '
        f'y2="{margin + plot_h}" stroke="#444" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{margin + plot_h}" '
        f'stroke="#444" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{margin}" y1="{zero_y:.2f}" x2="{margin + plot_w}" y2="{zero_y:.2f}" '
        f'stroke="#BBBBBB" stroke-width="0.5" stroke-dasharray="4 4"/>'
    )
    for frac in (0.0, 0.5, 1.0):
        i = int(round(frac * (n - 1)))
        parts.append(
            f'<text x="{px(i):.1f}" y="{margin + plot_h + 18:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{wl[i]:.0f} nm</text>'
        )

    # curvature stems: green everywhere, red when significant and concave
    significant_bands = {p.band: p for p in fs.points if p.is_significant}
    stems: list[str] = []
    dots: list[str] = []
    for i in range(n):
        k = float(kappa[i])
        if k == 0.0:
            continue
        point = significant_bands.get(i)
        color = CONCAVE_COLOR if point is not None and point.direction == "concave" \
            else STEM_COLOR
        stems.append(
            f'<line x1="{px(i):.2f}" y1="{zero_y:.2f}" x2="{px(i):.2f}" '
            f'y2="{py_kappa(k):.2f}" stroke="{color}" stroke-width="1"/>'
        )
        if point is not None and point.direction == "convex":
            dots.append(
                f'<circle cx="{px(i):.2f}" cy="{py_kappa(k):.2f}" r="3.5" '
                f'fill="{CONVEX_COLOR}"/>'
            )
    parts.extend(stems)

    curve = " ".join(f"{px(i):.2f},{py_value(float(values[i])):.2f}" for i in range(n))
    parts.append(
        f'<polyline points="{curve}" fill="none" stroke="{CURVE_COLOR}" stroke-width="1.4"/>'
    )
    parts.extend(dots)

    legend_y = height - 12
    parts.append(
        f'<text x="{margin}" y="{legend_y}" font-family="sans-serif" font-size="11">'
        f'<tspan fill="{CURVE_COLOR}">continuum-removed</tspan>'
        f'<tspan dx="14" fill="{STEM_COLOR}">curvature</tspan>'
        f'<tspan dx="14" fill="{CONCAVE_COLOR}">concave |&#954;| &#8805; {fs.threshold:g}</tspan>'
        f'<tspan dx="14" fill="{CONVEX_COLOR}">convex |&#954;| &#8805; {fs.threshold:g}</tspan>'
        f'</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
