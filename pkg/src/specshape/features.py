"""Signed curvature and second-derivative feature points of a spectrum.

Curvature is computed on the graph (x_scale * band index, value).  With unit
x spacing the parametric curvature of such a graph reduces to

    kappa = y'' / (1 + y'^2)^(3/2)

and the sign of y'' is kept: positive kappa marks convex (dip-shaped) bands,
negative kappa concave (crest-shaped) bands.  Feature points sit where the
second derivative has a local extremum; they are significant when |kappa|
reaches the threshold (default 0.1).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .preprocess import Spectrum

DEFAULT_THRESHOLD = 0.1

CONVEX = "convex"
CONCAVE = "concave"


@dataclass(eq=False)
class CurvatureSeries:
    """Per-band signed curvature plus the first/second derivatives behind it."""

    kappa: np.ndarray
    first: np.ndarray
    second: np.ndarray
    x_scale: float = 1.0


@dataclass(frozen=True)
class FeaturePoint:
    band: int
    wavelength: float
    kappa: float
    direction: str           # convex <=> kappa > 0
    is_significant: bool


@dataclass(eq=False)
class FeatureSet:
    curvature: CurvatureSeries
    points: tuple[FeaturePoint, ...]
    threshold: float

    def significant(self) -> tuple[FeaturePoint, ...]:
        return tuple(p for p in self.points if p.is_significant)


def derivatives(s: Spectrum) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives in band-index coordinates.

    Central differences at interior bands, one-sided at the two endpoints;
    output lengths equal the input length.
    """
    v = s.values
    n = v.size
    if n < 3:
        raise ValueError("derivatives need at least 3 samples")

    first = np.empty(n)
    first[1:-1] = (v[2:] - v[:-2]) / 2.0
    first[0] = v[1] - v[0]
    first[-1] = v[-1] - v[-2]

    second = np.empty(n)
    second[1:-1] = (v[2:] - 2.0 * v[1:-1]) + v[:-2]
    second[0] = (v[2] - 2.0 * v[1]) + v[0]
    second[-1] = (v[-1] - 2.0 * v[-2]) + v[-3]
    return first, second


def curvature(s: Spectrum, x_scale: float = 1.0) -> CurvatureSeries:
    """Signed curvature of the spectrum graph at every band.

    ``x_scale`` is the band spacing in curvature coordinates; the builtin
    rules' +-0.1 thresholds assume the default of 1.0 (band-index axis).
    """
    if x_scale <= 0.0:
        raise ValueError("x_scale must be positive")
    first, second = derivatives(s)
    fd = first / x_scale
    sd = second / (x_scale * x_scale)
    kappa = sd / (1.0 + fd * fd) ** 1.5
    return CurvatureSeries(kappa=kappa, first=fd, second=sd, x_scale=x_scale)


def detect_feature_points(s: Spectrum, threshold: float = DEFAULT_THRESHOLD,
                          x_scale: float = 1.0) -> FeatureSet:
    """Locate local extrema of the second derivative and grade them by |kappa|.

    A plateau of equal second-derivative values counts once, at its leftmost
    band, and only when strictly above (or below) both neighbors of the run.
    Endpoint bands are never candidates; all candidates are returned, flagged
    significant when |kappa| >= threshold.
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    series = curvature(s, x_scale=x_scale)
    sd = series.second
    n = sd.size

    points: list[FeaturePoint] = []
    i = 1
    while i < n - 1:
        j = i
        while j + 1 < n and sd[j + 1] == sd[i]:
            j += 1
        if j < n - 1:  # plateau ending at the last band has no right neighbor
            left, right = sd[i - 1], sd[j + 1]
            if (sd[i] > left and sd[i] > right) or (sd[i] < left and sd[i] < right):
                k = float(series.kappa[i])
                points.append(FeaturePoint(
                    band=i,
                    wavelength=float(s.wavelengths[i]),
                    kappa=k,
                    direction=CONVEX if k > 0.0 else CONCAVE,
                    is_significant=abs(k) >= threshold,
                ))
        i = j + 1
    return FeatureSet(curvature=series, points=tuple(points), threshold=threshold)


def features_to_csv(fs: FeatureSet) -> str:
    """Feature dump for offline rule authoring: band,wavelength_nm,kappa,direction,significant."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["band", "wavelength_nm", "kappa", "direction", "significant"])
    for p in fs.points:
        writer.writerow([p.band, repr(p.wavelength), repr(p.kappa),
                         p.direction, str(p.is_significant).lower()])
    return buf.getvalue()


def write_feature_csv(fs: FeatureSet, path: str | Path) -> None:
    Path(path).write_text(features_to_csv(fs), encoding="utf-8")
