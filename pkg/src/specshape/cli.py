"""Command-line front door: calibrate, classify, plot, serve.

Exit codes are a stable contract for pipeline use:
0 ok, 2 I/O problem, 3 rule parse/bind problem, 4 bad configuration.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .cube import (EnviFormatError, LabelMapError, calibrate, read_envi,
                   read_label_map, write_envi, write_label_map)
from .features import detect_feature_points
from .pipeline import (PipelineConfig, classify_cube, evaluate_metrics,
                       metrics_to_csv, metrics_to_text)
from .plotting import render_feature_svg
from .preprocess import continuum_remove, smooth
from .rules import RuleBindError, RuleSyntaxError, bind, parse_rules
from .service import serve_forever

EXIT_OK = 0
EXIT_IO = 2
EXIT_RULES = 3
EXIT_CONFIG = 4


@dataclass
class JobSpec:
    """A validated classification job: inputs exist, outputs are writable."""

    cube_path: Path
    rules_path: Path
    out_path: Path
    dark_path: Path | None = None
    white_path: Path | None = None
    truth_path: Path | None = None
    config: PipelineConfig = field(default_factory=PipelineConfig)

    def validate(self) -> None:
        for p in (self.cube_path, self.rules_path, self.dark_path,
                  self.white_path, self.truth_path):
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(f"input file not found: {p}")
        if (self.dark_path is None) != (self.white_path is None):
            raise ValueError("--dark and --white must be given together")
        out_dir = Path(self.out_path).parent
        if not out_dir.exists():
            raise FileNotFoundError(f"output directory not found: {out_dir}")


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems are config errors (exit 4)
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold", type=float, default=0.1,
                   help="curvature significance threshold (default 0.1)")
    p.add_argument("--continuum-mode", choices=("ratio", "difference"), default="ratio")
    p.add_argument("--smooth-window", type=int, default=7)
    p.add_argument("--smooth-order", type=int, default=2)
    p.add_argument("--bind-tolerance-nm", type=float, default=10.0)
    p.add_argument("--x-scale", type=float, default=1.0,
                   help="band spacing in curvature coordinates (default 1.0)")


def _config_from(args: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(
        smooth_window=args.smooth_window,
        smooth_order=args.smooth_order,
        continuum_mode=args.continuum_mode,
        curvature_threshold=args.threshold,
        bind_tolerance_nm=args.bind_tolerance_nm,
        x_scale=args.x_scale,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="specshape",
                             description="Shape-rule classification of hyperspectral cubes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="dark/white radiometric calibration")
    p.add_argument("raw", help="raw cube ENVI header")
    p.add_argument("dark", help="dark reference ENVI header")
    p.add_argument("white", help="white reference ENVI header")
    p.add_argument("out", help="output ENVI header path (float32)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("classify", help="rule-based per-pixel classification")
    p.add_argument("cube", help="calibrated cube ENVI header (or raw, with --dark/--white)")
    p.add_argument("--rules", required=True, help="rule DSL file")
    p.add_argument("--out", required=True, help="output label map PNG")
    p.add_argument("--dark", help="dark reference header (calibrate before classifying)")
    p.add_argument("--white", help="white reference header")
    p.add_argument("--truth", help="ground-truth label map PNG; writes metrics next to --out")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("plot", help="render one pixel's spectrum + curvature as SVG")
    p.add_argument("cube", help="calibrated cube ENVI header")
    p.add_argument("x", type=int, help="pixel column")
    p.add_argument("y", type=int, help="pixel row")
    p.add_argument("--out", required=True, help="output SVG path")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("serve", help="run the workbench HTTP API")
    p.add_argument("cube", help="calibrated cube ENVI header")
    p.add_argument("--rules", help="initial rule DSL file")
    p.add_argument("--port", type=int, default=8756)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", help="directory with the workbench frontend build")
    p.add_argument("--downsample", type=int, default=4,
                   help="default preview stride (default 4)")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def cmd_calibrate(args: argparse.Namespace) -> int:
    raw = read_envi(args.raw)
    dark = read_envi(args.dark)
    white = read_envi(args.white)
    cube = calibrate(raw, dark, white)
    write_envi(cube, args.out)
    print(f"calibrated {cube.rows}x{cube.cols}x{cube.bands} cube -> {args.out}")
    return EXIT_OK


def cmd_classify(args: argparse.Namespace) -> int:
    job = JobSpec(
        cube_path=Path(args.cube),
        rules_path=Path(args.rules),
        out_path=Path(args.out),
        dark_path=Path(args.dark) if args.dark else None,
        white_path=Path(args.white) if args.white else None,
        truth_path=Path(args.truth) if args.truth else None,
        config=_config_from(args),
    )
    job.validate()

    cube = read_envi(job.cube_path)
    if job.dark_path is not None:
        cube = calibrate(cube, read_envi(job.dark_path), read_envi(job.white_path))

    rules = parse_rules(job.rules_path.read_text(encoding="utf-8"))
    crs = bind(rules, cube.wavelengths, job.config.bind_tolerance_nm,
               job.config.continuum_mode, job.config.x_scale)

    t0 = time.perf_counter()
    labels = classify_cube(cube, crs, job.config)
    elapsed = time.perf_counter() - t0
    write_label_map(labels, job.out_path)
    print(f"classified {cube.rows * cube.cols} pixels in {elapsed:.2f} s -> {job.out_path}")

    if job.truth_path is not None:
        truth = read_label_map(job.truth_path, expected_shape=(cube.rows, cube.cols))
        metrics = evaluate_metrics(labels, truth)
        names = {cid: name for cid, (name, _) in labels.class_table.items()}
        csv_path = job.out_path.with_suffix(".metrics.csv")
        csv_path.write_text(metrics_to_csv(metrics, names), encoding="utf-8")
        sys.stdout.write(metrics_to_text(metrics, names))
        print(f"metrics -> {csv_path}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    cube = read_envi(args.cube)
    cfg.validate(bands=cube.bands)
    if not (0 <= args.x < cube.cols and 0 <= args.y < cube.rows):
        raise ValueError(
            f"pixel ({args.x}, {args.y}) outside {cube.cols}x{cube.rows} cube"
        )
    raw = cube.spectrum_at(args.x, args.y)
    sm = smooth(raw, cfg.smooth_window, cfg.smooth_order)
    cr = continuum_remove(sm, cfg.continuum_mode)
    fs = detect_feature_points(cr, cfg.curvature_threshold, x_scale=cfg.x_scale)
    svg = render_feature_svg(cr, fs, title=f"pixel ({args.x}, {args.y})")
    Path(args.out).write_text(svg, encoding="utf-8")
    print(f"plotted pixel ({args.x}, {args.y}) -> {args.out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    cube = read_envi(args.cube)
    rules_text = Path(args.rules).read_text(encoding="utf-8") if args.rules else ""
    if rules_text:
        # surface rule problems before binding the port
        bind(parse_rules(rules_text), cube.wavelengths, cfg.bind_tolerance_nm,
             cfg.continuum_mode, cfg.x_scale)
    serve_forever(cube, rules_text, cfg, host=args.host, port=args.port,
                  static_dir=args.static, default_downsample=args.downsample)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RuleSyntaxError, RuleBindError) as exc:
        print(f"specshape: rule error: {exc}", file=sys.stderr)
        return EXIT_RULES
    except (EnviFormatError, LabelMapError, FileNotFoundError, OSError) as exc:
        print(f"specshape: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"specshape: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
