"""Per-spectrum smoothing and continuum removal.

These produce the curve on which curvature is computed: a spectrum is
smoothed with a local least-squares polynomial filter, then normalized
against its upper convex hull (the continuum).  All functions are pure and
operate on one spectrum; the cube pipeline applies the same math per pixel.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CONTINUUM_MODES = ("ratio", "difference")


@dataclass(eq=False)
class Spectrum:
    """One pixel's reflectance sequence on its wavelength axis.

    ``kind`` tracks the processing stage: raw, smoothed, or continuum_removed.
    Continuum-removed spectra also record which ``continuum_mode`` produced
    them, since rule thresholds are only meaningful under one convention.
    """

    wavelengths: np.ndarray
    values: np.ndarray
    kind: str = "raw"
    continuum_mode: str | None = None

    def __post_init__(self) -> None:
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.wavelengths.shape != self.values.shape or self.values.ndim != 1:
            raise ValueError("wavelengths and values must be 1-d and equal length")

    def __len__(self) -> int:
        return self.values.size


@dataclass(eq=False)
class Continuum:
    """Upper convex hull over a spectrum in (band index, value) coordinates.

    ``knot_bands`` are the hull vertices (strictly increasing, first and last
    are the spectrum endpoints); ``values`` is the hull sampled at every band.
    """

    knot_bands: np.ndarray
    values: np.ndarray

    @property
    def knots(self) -> list[tuple[int, float]]:
        return [(int(b), float(self.values[b])) for b in self.knot_bands]


# ---------------------------------------------------------------------------
# Savitzky-Golay smoothing


@functools.lru_cache(maxsize=32)
def savgol_design(n_bands: int, window: int, poly_order: int):
    """Per-band smoothing weights for a Savitzky-Golay filter of length ``n_bands``.

    Interior bands use the classic symmetric window; bands within half a
    window of either end use a window shrunk to the valid range (one-sided at
    the very ends), refit by least squares.  When a shrunken window has fewer
    than ``poly_order + 1`` points the fit order drops to window length - 1.

    Returns ``(coeffs, start, length)`` where row ``i`` of ``coeffs`` holds
    ``length[i]`` weights applied to samples ``start[i] ..``.
    """
    half = window // 2
    coeffs = np.zeros((n_bands, window))
    start = np.empty(n_bands, dtype=np.int64)
    length = np.empty(n_bands, dtype=np.int64)

    interior = _hat_row(np.arange(-half, half + 1), poly_order)
    for i in range(n_bands):
        lo = max(0, i - half)
        hi = min(n_bands - 1, i + half)
        start[i] = lo
        length[i] = hi - lo + 1
        if length[i] == window:
            coeffs[i, :window] = interior
        else:
            offsets = np.arange(lo, hi + 1) - i
            order = min(poly_order, int(length[i]) - 1)
            coeffs[i, : length[i]] = _hat_row(offsets, order)
    return coeffs, start, length


def _hat_row(offsets: np.ndarray, order: int) -> np.ndarray:
    # weights w with (A^T A) beta = A^T y and fitted value at offset 0 = beta[0]
    design = np.vander(offsets.astype(np.float64), order + 1, increasing=True)
    return np.linalg.solve(design.T @ design, design.T)[0]


def smooth(s: Spectrum, window: int = 7, poly_order: int = 2) -> Spectrum:
    """Savitzky-Golay smoothing; reproduces polynomials up to ``poly_order`` exactly."""
    n = len(s)
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    if not 3 <= window <= n:
        raise ValueError(f"window must be in [3, {n}], got {window}")
    if poly_order >= window:
        raise ValueError(f"poly_order {poly_order} must be < window {window}")

    coeffs, start, length = savgol_design(n, window, poly_order)
    out = np.empty(n)
    v = s.values
    for i in range(n):
        lo, m = start[i], length[i]
        # residual form: constant spectra pass through bit-exactly
        out[i] = v[i] + coeffs[i, :m] @ (v[lo: lo + m] - v[i])
    return Spectrum(s.wavelengths, out, kind="smoothed")


# ---------------------------------------------------------------------------
# Continuum removal


def upper_convex_hull(s: Spectrum) -> Continuum:
    """Upper convex hull of the points (band index, value) via monotone chain.

    Collinear interior points are dropped, so the knot list is minimal; the
    per-band hull is linear interpolation between knots and coincides with the
    spectrum exactly at each knot.
    """
    v = s.values
    n = v.size
    if n < 2:
        raise ValueError("hull needs at least 2 samples")

    stack = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        while m >= 2:
            x0, x1 = stack[m - 2], stack[m - 1]
            cross = (x1 - x0) * (v[i] - v[x0]) - (v[x1] - v[x0]) * (i - x0)
            if cross >= 0.0:
                m -= 1
            else:
                break
        stack[m] = i
        m += 1
    knots = stack[:m].copy()

    hull = np.empty(n)
    for k in range(m - 1):
        i0, i1 = knots[k], knots[k + 1]
        hull[i0] = v[i0]
        for b in range(i0 + 1, i1):
            t = (b - i0) / (i1 - i0)
            # never let interpolation rounding dip below the spectrum itself
            hull[b] = max(v[i0] + (v[i1] - v[i0]) * t, v[b])
    hull[knots[-1]] = v[knots[-1]]
    return Continuum(knot_bands=knots, values=hull)


def continuum_remove(s: Spectrum, mode: str = "ratio",
                     continuum: Continuum | None = None) -> Spectrum:
    """Normalize a spectrum against its continuum.

    ratio mode divides by the hull (1.0 exactly at every knot); difference
    mode subtracts the spectrum from the hull.  Bands where a ratio-mode hull
    is not positive come back NaN: the pixel is invalid, not an error.
    """
    if mode not in CONTINUUM_MODES:
        raise ValueError(f"mode must be one of {CONTINUUM_MODES}, got {mode!r}")
    hull = (continuum or upper_convex_hull(s)).values
    if mode == "ratio":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(hull > 0.0, s.values / hull, np.nan)
    else:
        out = hull - s.values
    return Spectrum(s.wavelengths, out, kind="continuum_removed", continuum_mode=mode)


# ---------------------------------------------------------------------------
# Spectral library CSV (header: wavelength_nm,<name>...; one row per band)


def write_spectral_library(path: str | Path, wavelengths: np.ndarray,
                           spectra: dict[str, np.ndarray]) -> None:
    wavelengths = np.asarray(wavelengths, dtype=np.float64)
    for name, vals in spectra.items():
        if np.asarray(vals).shape != wavelengths.shape:
            raise ValueError(f"spectrum {name!r} length differs from wavelength axis")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wavelength_nm", *spectra.keys()])
        for i, w in enumerate(wavelengths):
            writer.writerow([repr(float(w)), *(repr(float(spectra[n][i])) for n in spectra)])


def read_spectral_library(path: str | Path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "wavelength_nm":
            raise ValueError("spectral library must start with a 'wavelength_nm,...' header")
        names = header[1:]
        rows = [[float(cell) for cell in row] for row in reader if row]
    data = np.array(rows, dtype=np.float64)
    if data.size == 0:
        raise ValueError("spectral library has no data rows")
    wavelengths = data[:, 0]
    return wavelengths, {name: data[:, j + 1] for j, name in enumerate(names)}
