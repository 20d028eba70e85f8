"""Cube-level classification and the accuracy metrics it is scored with."""

from __future__ import annotations

import csv
import io
import os
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cube import LabelMap, SpectralCube
from .features import DEFAULT_THRESHOLD, detect_feature_points
from .preprocess import CONTINUUM_MODES, Spectrum, continuum_remove, savgol_design, smooth
from .rules import And, CompiledAtom, CompiledRuleSet, Or, evaluate

ENV_THREADS = "SPECSHAPE_THREADS"

# categorical display colors, cycled for class ids 1, 2, ...
PALETTE = (
    "#E6194B", "#3CB44B", "#FFE119", "#4363D8", "#F58231", "#911EB4",
    "#46F0F0", "#F032E6", "#BCF60C", "#008080", "#9A6324", "#800000",
    "#AAFFC3", "#808000", "#FFD8B1", "#000075", "#FABEBE", "#808080",
)


def class_color(class_id: int) -> str:
    return PALETTE[(class_id - 1) % len(PALETTE)]


@dataclass(frozen=True)
class PipelineConfig:
    """Per-run knobs for the smooth -> continuum-remove -> curvature -> rules pipeline."""

    smooth_window: int = 7
    smooth_order: int = 2
    continuum_mode: str = "ratio"
    curvature_threshold: float = DEFAULT_THRESHOLD
    bind_tolerance_nm: float = 10.0
    x_scale: float = 1.0
    workers: int | None = None  # parallelism width hint; None = everything allowed

    def validate(self, bands: int | None = None) -> None:
        limit = bands if bands is not None else self.smooth_window
        if self.smooth_window % 2 == 0 or not 3 <= self.smooth_window <= limit:
            raise ValueError(f"smooth_window must be odd and in [3, {limit}]")
        if self.smooth_order >= self.smooth_window or self.smooth_order < 0:
            raise ValueError("smooth_order must be in [0, smooth_window)")
        if self.continuum_mode not in CONTINUUM_MODES:
            raise ValueError(f"continuum_mode must be one of {CONTINUUM_MODES}")
        if self.curvature_threshold <= 0.0:
            raise ValueError("curvature_threshold must be positive")
        if self.bind_tolerance_nm <= 0.0:
            raise ValueError("bind_tolerance_nm must be positive")
        if self.x_scale <= 0.0:
            raise ValueError("x_scale must be positive")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")


def resolve_workers(hint: int | None = None) -> int:
    """Effective thread count: min(hint, SPECSHAPE_THREADS, numba's launch maximum)."""
    from numba import config as numba_config

    cap = int(numba_config.NUMBA_NUM_THREADS)
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            cap = min(cap, max(1, int(env)))
        except ValueError:
            raise ValueError(f"{ENV_THREADS} must be an integer, got {env!r}") from None
    if hint is not None:
        cap = min(cap, max(1, hint))
    return max(1, cap)


@contextmanager
def _thread_cap(n: int):
    from numba import get_num_threads, set_num_threads

    old = get_num_threads()
    set_num_threads(n)
    try:
        yield
    finally:
        set_num_threads(old)


# ---------------------------------------------------------------------------
# Rule program flattening (tree -> postfix arrays for the kernel)

_FEATURE_CODE = {"CV": _kernels.FEAT_CV, "CRRV": _kernels.FEAT_CRRV, "RV": _kernels.FEAT_RV}
_CMP_CODE = {"<": _kernels.CMP_LT, "<=": _kernels.CMP_LE,
             ">": _kernels.CMP_GT, ">=": _kernels.CMP_GE}


def _flatten(crs: CompiledRuleSet):
    ops: list[int] = []
    args: list[int] = []
    rule_start: list[int] = []
    rule_end: list[int] = []
    feats: list[int] = []
    bands: list[int] = []
    cmps: list[int] = []
    thrs: list[float] = []
    max_stack = 1

    def emit(expr) -> int:
        nonlocal max_stack
        if isinstance(expr, CompiledAtom):
            idx = len(feats)
            feats.append(_FEATURE_CODE[expr.feature])
            bands.append(expr.band)
            cmps.append(_CMP_CODE[expr.op])
            thrs.append(expr.threshold)
            ops.append(_kernels.OP_ATOM)
            args.append(idx)
            return 1
        code = _kernels.OP_AND if isinstance(expr, And) else _kernels.OP_OR
        depth = 0
        for child in expr.items:
            depth += emit(child)
            max_stack = max(max_stack, depth)
        for _ in range(len(expr.items) - 1):
            ops.append(code)
            args.append(0)
        return 1

    for rule in crs.rules:
        rule_start.append(len(ops))
        emit(rule.expr)
        rule_end.append(len(ops))

    return (
        np.array(ops, dtype=np.int8),
        np.array(args, dtype=np.int32),
        np.array(rule_start, dtype=np.int32),
        np.array(rule_end, dtype=np.int32),
        np.array(feats, dtype=np.int8),
        np.array(bands, dtype=np.int64),
        np.array(cmps, dtype=np.int8),
        np.array(thrs, dtype=np.float64),
        max_stack,
    )


# ---------------------------------------------------------------------------
# Classification


def _check_compatible(cube: SpectralCube, crs: CompiledRuleSet, cfg: PipelineConfig) -> None:
    cfg.validate(bands=cube.bands)
    if cube.bands < 3:
        raise ValueError("classification needs at least 3 bands")
    if crs.axis_fingerprint != cube.axis_fingerprint:
        raise ValueError(
            "compiled rules were bound to a different wavelength axis than this cube"
        )
    if crs.continuum_mode != cfg.continuum_mode or crs.x_scale != cfg.x_scale:
        raise ValueError(
            f"rules were compiled for continuum_mode={crs.continuum_mode!r}, "
            f"x_scale={crs.x_scale}; pipeline is configured for "
            f"{cfg.continuum_mode!r}, {cfg.x_scale}"
        )


def classify_cube(cube: SpectralCube, crs: CompiledRuleSet,
                  cfg: PipelineConfig = PipelineConfig()) -> LabelMap:
    """Label every pixel: smooth, continuum-remove, curvature, first matching rule.

    Invalid pixels (calibration mask, or a non-positive ratio-mode hull) get
    label 0.  Output is deterministic and bit-identical for any worker count.
    """
    _check_compatible(cube, crs, cfg)
    coeffs, start, length = savgol_design(cube.bands, cfg.smooth_window, cfg.smooth_order)
    (prog_op, prog_arg, rule_start, rule_end,
     atom_feat, atom_band, atom_cmp, atom_thr, max_stack) = _flatten(crs)

    data2d = cube.data.reshape(cube.rows * cube.cols, cube.bands)
    valid = np.ascontiguousarray(cube.valid_mask.reshape(-1))
    labels = np.empty(cube.rows * cube.cols, dtype=np.int32)

    with _thread_cap(resolve_workers(cfg.workers)):
        _kernels.classify_pixels(
            data2d, valid, coeffs, start, length,
            cfg.continuum_mode == "ratio", cfg.x_scale,
            prog_op, prog_arg, rule_start, rule_end,
            atom_feat, atom_band, atom_cmp, atom_thr,
            max_stack, labels,
        )

    table = {r.class_id: (r.name, class_color(r.class_id)) for r in crs.rules}
    table[0] = ("background", "#000000")
    return LabelMap(labels=labels.reshape(cube.rows, cube.cols), class_table=table)


def classify_spectrum(raw: Spectrum, crs: CompiledRuleSet,
                      cfg: PipelineConfig = PipelineConfig()) -> int | None:
    """Single-spectrum version of the pipeline; None if unclassified or invalid."""
    cfg.validate(bands=len(raw))
    sm = smooth(raw, cfg.smooth_window, cfg.smooth_order)
    cr = continuum_remove(sm, cfg.continuum_mode)
    if not np.all(np.isfinite(cr.values)):
        return None
    fs = detect_feature_points(cr, cfg.curvature_threshold, x_scale=cfg.x_scale)
    return evaluate(crs, fs, cr, raw)


def _classify_reference(cube: SpectralCube, crs: CompiledRuleSet,
                        cfg: PipelineConfig = PipelineConfig()) -> LabelMap:
    """Plain-Python oracle for classify_cube; reads each pixel's spectrum once."""
    _check_compatible(cube, crs, cfg)
    labels = np.zeros((cube.rows, cube.cols), dtype=np.int32)
    for y in range(cube.rows):
        for x in range(cube.cols):
            if not cube.valid_mask[y, x]:
                continue
            label = classify_spectrum(cube.spectrum_at(x, y), crs, cfg)
            labels[y, x] = 0 if label is None else label
    table = {r.class_id: (r.name, class_color(r.class_id)) for r in crs.rules}
    table[0] = ("background", "#000000")
    return LabelMap(labels=labels, class_table=table)


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class ClassScores:
    class_id: int
    support: int
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    sensitivity: float
    fpr: float
    f1: float


@dataclass(eq=False)
class Metrics:
    """Confusion matrix (rows = truth, cols = predicted) and derived scores.

    Macro scores are unweighted means over the classes present in ground
    truth; the full per-class table is kept so any other averaging can be
    recomputed from it.
    """

    classes: tuple[int, ...]
    matrix: np.ndarray
    total: int
    overall_accuracy: float
    kappa: float
    macro_precision: float
    macro_sensitivity: float
    macro_fpr: float
    macro_f1: float
    per_class: tuple[ClassScores, ...]


def evaluate_metrics(pred: LabelMap, truth: LabelMap,
                     ignore_zero_truth: bool = True) -> Metrics:
    """Score predictions against ground truth.

    With ``ignore_zero_truth`` (default) pixels whose truth label is 0 are
    excluded, matching scoring over annotated regions only; the strict mode
    (False) keeps them, so unclassified-vs-annotated disagreements and
    background behavior are scored too.
    """
    p = pred.labels
    t = truth.labels
    if p.shape != t.shape:
        raise ValueError(f"prediction is {p.shape}, truth is {t.shape}")
    mask = (t != 0) if ignore_zero_truth else np.ones(t.shape, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        raise ValueError("zero evaluated pixels (truth is empty under this mode)")

    tv = t[mask].ravel()
    pv = p[mask].ravel()
    classes = np.unique(np.concatenate([tv, pv]))
    k = classes.size
    ti = np.searchsorted(classes, tv)
    pi = np.searchsorted(classes, pv)
    matrix = np.bincount(ti * k + pi, minlength=k * k).reshape(k, k)

    return metrics_from_matrix(tuple(int(c) for c in classes), matrix)


def metrics_from_matrix(classes: tuple[int, ...], matrix: np.ndarray) -> Metrics:
    """Derive all scores from a truth-by-predicted count matrix."""
    matrix = np.asarray(matrix, dtype=np.int64)
    k = len(classes)
    if matrix.shape != (k, k) or (matrix < 0).any():
        raise ValueError("matrix must be (classes x classes) of non-negative counts")
    total = int(matrix.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")

    diag = np.diag(matrix)
    row = matrix.sum(axis=1)  # truth marginals
    col = matrix.sum(axis=0)  # prediction marginals
    oa = float(diag.sum()) / total

    pe = float(row @ col) / (float(total) * float(total))
    if pe == 1.0:
        kappa = 1.0 if oa == 1.0 else 0.0
    else:
        kappa = (oa - pe) / (1.0 - pe)

    scores: list[ClassScores] = []
    for i, cid in enumerate(classes):
        if row[i] == 0:
            continue  # absent from truth: kept in the matrix, not in macro scores
        tp = int(diag[i])
        fp = int(col[i] - diag[i])
        fn = int(row[i] - diag[i])
        tn = total - tp - fp - fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        sensitivity = tp / (tp + fn)
        fpr = fp / (fp + tn) if fp + tn else 0.0
        f1 = 2.0 * precision * sensitivity / (precision + sensitivity) \
            if precision + sensitivity else 0.0
        scores.append(ClassScores(int(cid), int(row[i]), tp, fp, fn, tn,
                                  precision, sensitivity, fpr, f1))
    if not scores:
        raise ValueError("no classes present in ground truth")

    return Metrics(
        classes=tuple(classes),
        matrix=matrix,
        total=total,
        overall_accuracy=oa,
        kappa=kappa,
        macro_precision=float(np.mean([s.precision for s in scores])),
        macro_sensitivity=float(np.mean([s.sensitivity for s in scores])),
        macro_fpr=float(np.mean([s.fpr for s in scores])),
        macro_f1=float(np.mean([s.f1 for s in scores])),
        per_class=tuple(scores),
    )


def metrics_to_text(m: Metrics, class_names: dict[int, str] | None = None) -> str:
    names = class_names or {}
    lines = [
        f"evaluated pixels : {m.total}",
        f"overall accuracy : {m.overall_accuracy:.4f}",
        f"kappa            : {m.kappa:.4f}",
        "",
        f"{'class':>8} {'name':<12} {'support':>8} {'precision':>9} "
        f"{'sensitivity':>11} {'fpr':>8} {'f1':>8}",
    ]
    for s in m.per_class:
        lines.append(
            f"{s.class_id:>8} {names.get(s.class_id, ''):<12} {s.support:>8} "
            f"{s.precision:>9.4f} {s.sensitivity:>11.4f} {s.fpr:>8.4f} {s.f1:>8.4f}"
        )
    lines.append(
        f"{'macro':>8} {'':<12} {m.total:>8} {m.macro_precision:>9.4f} "
        f"{m.macro_sensitivity:>11.4f} {m.macro_fpr:>8.4f} {m.macro_f1:>8.4f}"
    )
    return "\n".join(lines) + "\n"


def metrics_to_csv(m: Metrics, class_names: dict[int, str] | None = None) -> str:
    names = class_names or {}
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["class_id", "name", "support", "precision", "sensitivity",
                     "fpr", "f1", "overall_accuracy", "kappa"])
    for s in m.per_class:
        writer.writerow([s.class_id, names.get(s.class_id, ""), s.support,
                         repr(s.precision), repr(s.sensitivity), repr(s.fpr),
                         repr(s.f1), "", ""])
    writer.writerow(["macro", "", m.total, repr(m.macro_precision),
                     repr(m.macro_sensitivity), repr(m.macro_fpr),
                     repr(m.macro_f1), repr(m.overall_accuracy), repr(m.kappa)])
    return buf.getvalue()
