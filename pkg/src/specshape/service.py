"""Embedded HTTP API that serves the rule-authoring workbench.

The service holds one immutable cube and answers stateless JSON queries about
it; the only mutable state is the most recent classification preview.  A new
preview request supersedes a running one: computation happens in row chunks
and aborts between chunks once its generation is stale (latest text wins).
"""

from __future__ import annotations

import json
import math
import threading
from functools import partial
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from .cube import LabelMap, SpectralCube, label_png_bytes
from .features import detect_feature_points
from .pipeline import PipelineConfig, class_color, classify_cube
from .preprocess import continuum_remove, smooth
from .rules import (CompiledRuleSet, RuleBindError, RuleSet, RuleSyntaxError,
                    _tokenize, bind, parse_rules)

_PREVIEW_CHUNK_ROWS = 64

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".json": "application/json",
    ".map": "application/json",
    ".ico": "image/x-icon",
}


class _BadRequest(ValueError):
    pass


class WorkbenchService:
    def __init__(self, cube: SpectralCube, rules_text: str = "",
                 cfg: PipelineConfig = PipelineConfig(),
                 static_dir: str | Path | None = None,
                 default_downsample: int = 4):
        cfg.validate(bands=cube.bands)
        self.cube = cube
        self.cfg = cfg
        self.static_dir = Path(static_dir) if static_dir else None
        self.default_downsample = max(1, default_downsample)
        self.initial_rules = self._compile(rules_text)

        self._gen = 0
        self._gen_lock = threading.Lock()
        self._compute_lock = threading.Lock()
        self._state_lock = threading.Lock()
        self._last_preview: bytes | None = None

    # -- compilation -------------------------------------------------------

    def _compile(self, text: str) -> CompiledRuleSet:
        # a blank editor is a valid (empty) ruleset even though the grammar
        # proper requires at least one rule
        if len(_tokenize(text)) == 1:
            rs = RuleSet(())
        else:
            rs = parse_rules(text)
        return bind(rs, self.cube.wavelengths, self.cfg.bind_tolerance_nm,
                    self.cfg.continuum_mode, self.cfg.x_scale)

    # -- endpoint bodies ----------------------------------------------------

    def meta(self) -> dict:
        return {
            "rows": self.cube.rows,
            "cols": self.cube.cols,
            "bands": self.cube.bands,
            "wavelengths": [float(w) for w in self.cube.wavelengths],
            "threshold": self.cfg.curvature_threshold,
            "continuum_mode": self.cfg.continuum_mode,
            "classes": _class_list(self.initial_rules),
        }

    def spectrum(self, x: int, y: int) -> dict:
        raw = self.cube.spectrum_at(x, y)
        sm = smooth(raw, self.cfg.smooth_window, self.cfg.smooth_order)
        cr = continuum_remove(sm, self.cfg.continuum_mode)
        return {
            "x": x,
            "y": y,
            "wavelengths": _jlist(raw.wavelengths),
            "raw": _jlist(raw.values),
            "continuum_removed": _jlist(cr.values),
        }

    def features(self, x: int, y: int, threshold: float) -> dict:
        raw = self.cube.spectrum_at(x, y)
        sm = smooth(raw, self.cfg.smooth_window, self.cfg.smooth_order)
        cr = continuum_remove(sm, self.cfg.continuum_mode)
        fs = detect_feature_points(cr, threshold, x_scale=self.cfg.x_scale)
        return {
            "x": x,
            "y": y,
            "threshold": threshold,
            "kappa": _jlist(fs.curvature.kappa),
            "points": [
                {
                    "band": p.band,
                    "wavelength_nm": p.wavelength,
                    "kappa": p.kappa,
                    "direction": p.direction,
                    "significant": p.is_significant,
                }
                for p in fs.points
            ],
        }

    def validate_rules(self, text: str) -> dict:
        crs = self._compile(text)
        return {
            "ok": True,
            "classes": list(crs.class_names()),
            "atom_count": sum(1 for r in crs.rules for _ in r.atoms()),
        }

    def preview(self, text: str, downsample: int) -> dict | None:
        """Classify a strided view of the cube; None when superseded."""
        crs = self._compile(text)
        stride = max(1, downsample)
        with self._gen_lock:
            self._gen += 1
            my_gen = self._gen

        data = self.cube.data[::stride, ::stride]
        valid = self.cube.valid_mask[::stride, ::stride]
        rows, cols = data.shape[0], data.shape[1]
        labels = np.zeros((rows, cols), dtype=np.int32)

        with self._compute_lock:
            for r0 in range(0, rows, _PREVIEW_CHUNK_ROWS):
                with self._gen_lock:
                    if self._gen != my_gen:
                        return None
                r1 = min(rows, r0 + _PREVIEW_CHUNK_ROWS)
                sub = SpectralCube(
                    wavelengths=self.cube.wavelengths,
                    data=data[r0:r1],
                    interleave=self.cube.interleave,
                    valid_mask=valid[r0:r1],
                )
                labels[r0:r1] = classify_cube(sub, crs, self.cfg).labels

            table = {r.class_id: (r.name, class_color(r.class_id)) for r in crs.rules}
            table[0] = ("background", "#000000")
            lm = LabelMap(labels=labels, class_table=table)
            png = label_png_bytes(lm)
            with self._state_lock:
                self._last_preview = png
            return {
                "width": cols,
                "height": rows,
                "stride": stride,
                "counts": {str(k): v for k, v in sorted(lm.class_counts().items())},
                "classes": _class_list(crs),
            }

    def last_preview_png(self) -> bytes | None:
        with self._state_lock:
            return self._last_preview

    # -- server ------------------------------------------------------------

    def make_server(self, host: str = "127.0.0.1", port: int = 8756) -> ThreadingHTTPServer:
        return ThreadingHTTPServer((host, port), partial(_Handler, self))


def _class_list(crs: CompiledRuleSet) -> list[dict]:
    classes = [{"id": 0, "name": "background", "color": "#000000"}]
    classes += [
        {"id": r.class_id, "name": r.name, "color": class_color(r.class_id)}
        for r in crs.rules
    ]
    return classes


def _jlist(arr) -> list:
    return [float(v) if math.isfinite(v) else None for v in np.asarray(arr, dtype=np.float64)]


class _Handler(BaseHTTPRequestHandler):
    def __init__(self, service: WorkbenchService, *args, **kwargs):
        self.service = service
        super().__init__(*args, **kwargs)

    def log_message(self, fmt, *args):  # tests and pipelines want a quiet server
        pass

    # -- plumbing ----------------------------------------------------------

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, payload: dict) -> None:
        self._send(status, json.dumps(payload).encode("utf-8"), "application/json")

    def _query(self) -> dict[str, str]:
        return {k: v[-1] for k, v in parse_qs(urlparse(self.path).query).items()}

    def _int_param(self, params: dict[str, str], name: str) -> int:
        if name not in params:
            raise _BadRequest(f"missing query parameter {name!r}")
        try:
            return int(params[name])
        except ValueError:
            raise _BadRequest(f"query parameter {name!r} must be an integer") from None

    def _body_text(self) -> str:
        n = int(self.headers.get("Content-Length", "0"))
        return self.rfile.read(n).decode("utf-8")

    # -- methods -----------------------------------------------------------

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    def do_GET(self) -> None:
        path = urlparse(self.path).path
        try:
            if path == "/api/meta":
                self._send_json(200, self.service.meta())
            elif path == "/api/spectrum":
                params = self._query()
                x = self._int_param(params, "x")
                y = self._int_param(params, "y")
                self._send_json(200, self.service.spectrum(x, y))
            elif path == "/api/features":
                params = self._query()
                x = self._int_param(params, "x")
                y = self._int_param(params, "y")
                threshold = self.service.cfg.curvature_threshold
                if "threshold" in params:
                    try:
                        threshold = float(params["threshold"])
                    except ValueError:
                        raise _BadRequest("query parameter 'threshold' must be a number") from None
                if threshold <= 0.0:
                    raise _BadRequest("threshold must be positive")
                self._send_json(200, self.service.features(x, y, threshold))
            elif path == "/api/labels.png":
                png = self.service.last_preview_png()
                if png is None:
                    self._send_json(404, {"error": "no preview computed yet"})
                else:
                    self._send(200, png, "image/png")
            else:
                self._serve_static(path)
        except _BadRequest as exc:
            self._send_json(400, {"error": str(exc)})
        except IndexError as exc:
            self._send_json(404, {"error": str(exc)})

    def do_POST(self) -> None:
        path = urlparse(self.path).path
        if path == "/api/rules/validate":
            text = self._body_text()
            try:
                self._send_json(200, self.service.validate_rules(text))
            except (RuleSyntaxError, RuleBindError) as exc:
                self._send_json(422, {"ok": False, "diagnostics": _diagnostics(exc)})
        elif path == "/api/rules/preview":
            params = self._query()
            downsample = self.service.default_downsample
            if "downsample" in params:
                try:
                    downsample = int(params["downsample"])
                except ValueError:
                    self._send_json(400, {"error": "downsample must be an integer"})
                    return
                if downsample < 1:
                    self._send_json(400, {"error": "downsample must be >= 1"})
                    return
            text = self._body_text()
            try:
                result = self.service.preview(text, downsample)
            except (RuleSyntaxError, RuleBindError) as exc:
                self._send_json(422, {"ok": False, "diagnostics": _diagnostics(exc)})
                return
            if result is None:
                self._send_json(409, {"error": "superseded by a newer preview request"})
            else:
                self._send_json(200, result)
        else:
            self._send_json(404, {"error": f"no such endpoint {path!r}"})

    def _serve_static(self, path: str) -> None:
        root = self.service.static_dir
        if root is None:
            self._send_json(404, {"error": f"no such endpoint {path!r}"})
            return
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._send_json(404, {"error": f"not found: {path}"})
            return
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._send(200, target.read_bytes(), ctype)


def _diagnostics(exc: Exception) -> list[dict]:
    if isinstance(exc, RuleSyntaxError):
        d = exc.diagnostic
        return [{"line": d.line, "col": d.col, "message": d.message, "kind": d.kind}]
    return [{"line": 0, "col": 0, "message": str(exc), "kind": "bind"}]


def serve_forever(cube: SpectralCube, rules_text: str = "",
                  cfg: PipelineConfig = PipelineConfig(), host: str = "127.0.0.1",
                  port: int = 8756, static_dir: str | Path | None = None,
                  default_downsample: int = 4) -> None:
    service = WorkbenchService(cube, rules_text, cfg, static_dir, default_downsample)
    server = service.make_server(host, port)
    print(f"serving workbench API on http://{host}:{server.server_address[1]}/")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
