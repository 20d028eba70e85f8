"""ENVI cube and label-map I/O plus dark/white radiometric calibration."""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .preprocess import Spectrum

INTERLEAVES = ("bsq", "bil", "bip")

# ENVI numeric type codes we support (little-endian on disk).
ENVI_DTYPES = {4: np.dtype("<f4"), 12: np.dtype("<u2")}
_DTYPE_CODES = {np.dtype(np.float32): 4, np.dtype(np.uint16): 12}

_HEADER_KEYS = ("samples", "lines", "bands", "data type", "interleave", "wavelength")

DEGENERATE_EPS = 1e-6


class EnviFormatError(ValueError):
    """Malformed or contradictory ENVI header/raw pair."""


class LabelMapError(ValueError):
    """Label-map image or class-table violation."""


def axis_fingerprint(wavelengths: np.ndarray) -> str:
    """Stable hex digest of a wavelength axis, used to pin compiled rules to a cube."""
    return hashlib.sha1(np.asarray(wavelengths, dtype="<f8").tobytes()).hexdigest()[:16]


@dataclass(eq=False)
class SpectralCube:
    """Reflectance cube stored as a C-contiguous (rows, cols, bands) array.

    ``interleave`` remembers the source file layout; in memory every cube is
    pixel-major so per-pixel spectra are contiguous.  ``valid_mask`` is False
    for pixels ruined by calibration; downstream stages must emit label 0 there.
    """

    wavelengths: np.ndarray
    data: np.ndarray
    interleave: str = "bip"
    valid_mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.wavelengths = np.ascontiguousarray(self.wavelengths, dtype=np.float64)
        self.data = np.ascontiguousarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"cube data must be 3-d, got shape {self.data.shape}")
        if self.interleave not in INTERLEAVES:
            raise ValueError(f"unknown interleave {self.interleave!r}")
        if self.wavelengths.shape != (self.bands,):
            raise ValueError(
                f"wavelength count {self.wavelengths.size} != band count {self.bands}"
            )
        if self.bands >= 2 and not np.all(np.diff(self.wavelengths) > 0):
            raise ValueError("wavelengths must be strictly increasing")
        if self.valid_mask is None:
            self.valid_mask = np.ones((self.rows, self.cols), dtype=bool)
        else:
            self.valid_mask = np.ascontiguousarray(self.valid_mask, dtype=bool)
            if self.valid_mask.shape != (self.rows, self.cols):
                raise ValueError("valid_mask shape must be (rows, cols)")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def axis_fingerprint(self) -> str:
        return axis_fingerprint(self.wavelengths)

    def spectrum_at(self, x: int, y: int) -> Spectrum:
        """Spectrum of pixel at column ``x``, row ``y`` (raw kind, float64 copy)."""
        if not (0 <= x < self.cols and 0 <= y < self.rows):
            raise IndexError(f"pixel ({x}, {y}) outside {self.cols}x{self.rows} cube")
        return Spectrum(self.wavelengths, self.data[y, x].astype(np.float64), kind="raw")


@dataclass(eq=False)
class LabelMap:
    """Per-pixel class ids (0 = unclassified/background) plus the class table.

    ``class_table`` maps class id -> (name, "#RRGGBB").
    """

    labels: np.ndarray
    class_table: dict[int, tuple[str, str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.labels = np.ascontiguousarray(self.labels)
        if self.labels.ndim != 2 or not np.issubdtype(self.labels.dtype, np.integer):
            raise ValueError("labels must be a 2-d integer array")
        present = np.unique(self.labels)
        missing = [int(c) for c in present if c != 0 and int(c) not in self.class_table]
        if missing:
            raise LabelMapError(f"labels {missing} have no class_table entry")

    @property
    def rows(self) -> int:
        return self.labels.shape[0]

    @property
    def cols(self) -> int:
        return self.labels.shape[1]

    def class_counts(self) -> dict[int, int]:
        ids, counts = np.unique(self.labels, return_counts=True)
        return {int(i): int(n) for i, n in zip(ids, counts)}


# ---------------------------------------------------------------------------
# ENVI header + raw binary


def _parse_header(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    pending_key: str | None = None
    pending: list[str] = []
    for line in text.splitlines():
        stripped = line.strip()
        if pending_key is not None:
            pending.append(stripped)
            if "}" in stripped:
                entries[pending_key] = " ".join(pending)
                pending_key, pending = None, []
            continue
        if not stripped or stripped.upper() == "ENVI" or stripped.startswith(";"):
            continue
        if "=" not in stripped:
            continue
        key, value = stripped.split("=", 1)
        key = key.strip().lower()
        value = value.strip()
        if value.startswith("{") and "}" not in value:
            pending_key, pending = key, [value]
            continue
        entries[key] = value
    if pending_key is not None:
        raise EnviFormatError(f"unterminated '{{' list for header key {pending_key!r}")
    return entries


def _brace_list(value: str, key: str) -> list[str]:
    value = value.strip()
    if not (value.startswith("{") and value.endswith("}")):
        raise EnviFormatError(f"header key {key!r} must be a '{{ ... }}' list")
    return [tok.strip() for tok in value[1:-1].split(",") if tok.strip()]


def read_envi(header_path: str | Path) -> SpectralCube:
    """Read an ENVI header + raw binary pair into a cube.

    Supports data types 4 (float32) and 12 (uint16), little-endian, layouts
    BSQ/BIL/BIP.  The raw file is the header path minus ``.hdr``, or that stem
    plus one of ``.raw``/``.img``/``.dat``/``.bin``.
    """
    header_path = Path(header_path)
    if not header_path.exists():
        raise EnviFormatError(f"header file not found: {header_path}")
    entries = _parse_header(header_path.read_text(encoding="utf-8", errors="replace"))

    known = set(_HEADER_KEYS) | {
        "description", "header offset", "file type", "byte order",
        "wavelength units", "band names", "sensor type", "default bands",
    }
    unknown = sorted(k for k in entries if k not in known)
    if unknown:
        warnings.warn(f"ignoring unknown ENVI header keys: {', '.join(unknown)}")

    missing = [k for k in _HEADER_KEYS if k not in entries]
    if missing:
        raise EnviFormatError(f"header missing required keys: {', '.join(missing)}")

    try:
        cols = int(entries["samples"])
        rows = int(entries["lines"])
        bands = int(entries["bands"])
        dtype_code = int(entries["data type"])
        offset = int(entries.get("header offset", "0"))
    except ValueError as exc:
        raise EnviFormatError(f"non-integer header value: {exc}") from exc
    if min(rows, cols, bands) <= 0:
        raise EnviFormatError("samples/lines/bands must all be positive")

    interleave = entries["interleave"].strip().lower()
    if interleave not in INTERLEAVES:
        raise EnviFormatError(f"unsupported interleave {entries['interleave']!r}")
    if dtype_code not in ENVI_DTYPES:
        raise EnviFormatError(
            f"unsupported data type code {dtype_code} (supported: 4=float32, 12=uint16)"
        )
    if int(entries.get("byte order", "0")) != 0:
        raise EnviFormatError("only little-endian (byte order = 0) files are supported")

    try:
        wavelengths = np.array([float(w) for w in _brace_list(entries["wavelength"], "wavelength")])
    except ValueError as exc:
        raise EnviFormatError(f"bad wavelength value: {exc}") from exc
    if wavelengths.size != bands:
        raise EnviFormatError(
            f"header declares {bands} bands but {wavelengths.size} wavelengths"
        )
    if bands >= 2 and not np.all(np.diff(wavelengths) > 0):
        raise EnviFormatError("wavelengths are not strictly increasing")

    raw_path = _find_raw(header_path)
    dtype = ENVI_DTYPES[dtype_code]
    expected = offset + rows * cols * bands * dtype.itemsize
    actual = raw_path.stat().st_size
    if actual != expected:
        raise EnviFormatError(
            f"raw file {raw_path.name} is {actual} bytes, expected {expected} "
            f"({rows}x{cols}x{bands} of {dtype.name})"
        )

    flat = np.fromfile(raw_path, dtype=dtype, offset=offset)
    if interleave == "bsq":
        data = flat.reshape(bands, rows, cols).transpose(1, 2, 0)
    elif interleave == "bil":
        data = flat.reshape(rows, bands, cols).transpose(0, 2, 1)
    else:
        data = flat.reshape(rows, cols, bands)
    # native byte order in memory, source layout remembered on the tag
    data = np.ascontiguousarray(data).astype(dtype.newbyteorder("="), copy=False)
    return SpectralCube(wavelengths=wavelengths, data=data, interleave=interleave)


def _find_raw(header_path: Path) -> Path:
    stem = header_path.with_suffix("") if header_path.suffix == ".hdr" else header_path
    # append, don't substitute: "scene.cal.hdr" pairs with "scene.cal.raw"
    candidates = [stem] + [Path(str(stem) + s) for s in (".raw", ".img", ".dat", ".bin")]
    for cand in candidates:
        if cand.exists() and cand != header_path:
            return cand
    raise EnviFormatError(f"no raw file found next to {header_path}")


def write_envi(cube: SpectralCube, header_path: str | Path,
               interleave: str | None = None) -> Path:
    """Write cube as ENVI header + raw pair; returns the raw path.

    The raw file is written next to the header as ``<stem>.raw``.
    """
    header_path = Path(header_path)
    if header_path.suffix != ".hdr":
        header_path = header_path.with_suffix(header_path.suffix + ".hdr")
    interleave = (interleave or cube.interleave).lower()
    if interleave not in INTERLEAVES:
        raise EnviFormatError(f"unsupported interleave {interleave!r}")
    dtype = cube.data.dtype
    if dtype not in _DTYPE_CODES:
        raise EnviFormatError(f"cannot write dtype {dtype} (use float32 or uint16)")

    raw_path = header_path.with_suffix(".raw")
    if interleave == "bsq":
        ordered = cube.data.transpose(2, 0, 1)
    elif interleave == "bil":
        ordered = cube.data.transpose(0, 2, 1)
    else:
        ordered = cube.data
    np.ascontiguousarray(ordered).astype(dtype.newbyteorder("<")).tofile(raw_path)

    wl = ", ".join(_format_float(w) for w in cube.wavelengths)
    header_path.write_text(
        "ENVI\n"
        f"samples = {cube.cols}\n"
        f"lines = {cube.rows}\n"
        f"bands = {cube.bands}\n"
        "header offset = 0\n"
        "file type = ENVI Standard\n"
        f"data type = {_DTYPE_CODES[dtype]}\n"
        f"interleave = {interleave}\n"
        "byte order = 0\n"
        "wavelength units = nm\n"
        f"wavelength = {{ {wl} }}\n",
        encoding="utf-8",
    )
    return raw_path


def _format_float(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


# ---------------------------------------------------------------------------
# Calibration


def calibrate(raw: SpectralCube, dark: SpectralCube, white: SpectralCube,
              eps: float = DEGENERATE_EPS) -> SpectralCube:
    """Dark/white radiometric normalization: (raw - dark) / (white - dark).

    ``dark`` and ``white`` are reference cubes of one or more scan lines; they
    are averaged over their lines first, giving one reference spectrum per
    column (or a single shared one when they have one column).  Output is
    clamped to [0, 1.5]; columns where the white-dark gap is <= ``eps`` at any
    band are marked invalid rather than divided.
    """
    for ref, name in ((dark, "dark"), (white, "white")):
        if ref.bands != raw.bands or not np.array_equal(ref.wavelengths, raw.wavelengths):
            raise ValueError(f"{name} reference wavelength axis differs from raw cube")
        if ref.cols not in (raw.cols, 1):
            raise ValueError(
                f"{name} reference has {ref.cols} columns, expected {raw.cols} or 1"
            )

    dark_ref = dark.data.mean(axis=0, dtype=np.float64)    # (cols, bands)
    white_ref = white.data.mean(axis=0, dtype=np.float64)
    if dark_ref.shape[0] == 1:
        dark_ref = np.broadcast_to(dark_ref, (raw.cols, raw.bands))
    if white_ref.shape[0] == 1:
        white_ref = np.broadcast_to(white_ref, (raw.cols, raw.bands))

    denom = white_ref - dark_ref
    col_ok = np.all(denom > eps, axis=1)                   # (cols,)
    if not col_ok.any():
        raise ValueError("white - dark gap is degenerate at every column")

    safe = np.where(denom > eps, denom, 1.0)
    refl = np.empty(raw.data.shape, dtype=np.float32)
    chunk = max(1, (1 << 26) // max(1, raw.cols * raw.bands))  # ~512 MB of f8 per chunk
    for r0 in range(0, raw.rows, chunk):
        r1 = min(raw.rows, r0 + chunk)
        block = (raw.data[r0:r1].astype(np.float64) - dark_ref[None, :, :]) / safe[None, :, :]
        np.clip(block, 0.0, 1.5, out=block)
        refl[r0:r1] = block

    mask = raw.valid_mask & col_ok[None, :]
    refl[~mask] = 0.0
    return SpectralCube(
        wavelengths=raw.wavelengths,
        data=refl,
        interleave=raw.interleave,
        valid_mask=mask,
    )


# ---------------------------------------------------------------------------
# Label maps: indexed PNG + class-table sidecar


def _sidecar_path(png_path: Path) -> Path:
    return png_path.with_suffix(".classes.txt")


def label_png_bytes(lm: LabelMap) -> bytes:
    """Encode a label map as an indexed PNG (palette slot = class id)."""
    import io

    img = _label_image(lm)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _label_image(lm: LabelMap) -> Image.Image:
    if lm.labels.size and int(lm.labels.max()) > 255:
        raise LabelMapError("class ids above 255 cannot be stored in an indexed PNG")
    if any(c > 255 or c < 0 for c in lm.class_table):
        raise LabelMapError("class table holds ids outside 0..255")
    img = Image.fromarray(lm.labels.astype(np.uint8), mode="P")
    palette = [0] * (256 * 3)
    for cid, (_, color) in lm.class_table.items():
        r, g, b = _parse_color(color)
        palette[cid * 3: cid * 3 + 3] = [r, g, b]
    img.putpalette(palette)
    return img


def _parse_color(color: str) -> tuple[int, int, int]:
    color = color.strip()
    if not (color.startswith("#") and len(color) == 7):
        raise LabelMapError(f"bad color {color!r}, expected #RRGGBB")
    return int(color[1:3], 16), int(color[3:5], 16), int(color[5:7], 16)


def write_label_map(lm: LabelMap, path: str | Path) -> None:
    """Write labels as indexed PNG plus an ``id<TAB>name<TAB>#RRGGBB`` sidecar."""
    path = Path(path)
    _label_image(lm).save(path, format="PNG")
    lines = [
        f"{cid}\t{name}\t{color}"
        for cid, (name, color) in sorted(lm.class_table.items())
    ]
    _sidecar_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_label_map(path: str | Path,
                   expected_shape: tuple[int, int] | None = None) -> LabelMap:
    path = Path(path)
    img = Image.open(path)
    if img.mode != "P":
        raise LabelMapError(f"{path.name} is not an indexed (palette) PNG")
    labels = np.asarray(img, dtype=np.int32)
    if expected_shape is not None and labels.shape != expected_shape:
        raise LabelMapError(
            f"label map is {labels.shape}, expected {expected_shape}"
        )
    table: dict[int, tuple[str, str]] = {}
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        for lineno, line in enumerate(sidecar.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise LabelMapError(f"{sidecar.name}:{lineno}: expected id<TAB>name<TAB>color")
            table[int(parts[0])] = (parts[1], parts[2])
    return LabelMap(labels=labels, class_table=table)
