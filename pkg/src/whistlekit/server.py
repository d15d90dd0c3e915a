"""Local HTTP service backing the labeling workbench.

Serves detection artifacts from a state directory (the output of `detect`),
accepts label writes with optimistic per-snake versioning, and can retrain
the classifier on the labeled rows. Label writes are atomic
(write-temp-rename of the append-only log) and immediately visible; at most
one training job runs at a time.
"""
from __future__ import annotations

import json
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .pipeline import (
    InputError,
    PipelineConfig,
    read_detections,
    read_labels,
    run_extract,
    run_train,
)


class VersionConflict(Exception):
    pass


class TrainingBusy(Exception):
    pass


class ServerState:
    """Detections, labels and training artifacts under one state directory."""

    def __init__(self, state_dir: str, cfg: PipelineConfig):
        self.dir = Path(state_dir)
        self.cfg = cfg
        detections = self.dir / "detections.jsonl"
        if not detections.exists():
            raise InputError(f"{detections} not found; run detect first")
        self.records = read_detections(str(detections))
        self.by_snake = {rec["snake_id"]: rec for rec in self.records}
        self.snippet_order: list[str] = []
        self.by_snippet: dict[str, list[dict]] = {}
        for rec in self.records:
            sid = rec["snippet_id"]
            if sid not in self.by_snippet:
                self.by_snippet[sid] = []
                self.snippet_order.append(sid)
            self.by_snippet[sid].append(rec)
        # include snippets that produced no snakes but have images on disk
        spect_dir = self.dir / "spectrograms"
        if spect_dir.is_dir():
            for png in sorted(spect_dir.glob("*.png")):
                sid = png.stem
                if sid not in self.by_snippet:
                    self.by_snippet[sid] = []
                    self.snippet_order.append(sid)
        self._label_lock = threading.RLock()
        self._train_lock = threading.Lock()
        self.labels_path = self.dir / "labels.jsonl"
        self.label_log = self._read_label_log()
        self.labels = read_labels(self.labels_path)
        self.metrics_path = self.dir / "metrics.json"

    def _read_label_log(self) -> list[dict]:
        if not self.labels_path.exists():
            return []
        return [json.loads(line)
                for line in self.labels_path.read_text().splitlines() if line.strip()]

    # -- labels ------------------------------------------------------------

    def label_of(self, snake_id: str) -> dict | None:
        entry = self.labels.get(snake_id)
        if entry is None:
            return None
        return {"target": bool(entry["target"]), "version": int(entry["version"])}

    def set_label(self, snake_id: str, target: bool, version: int | None) -> dict:
        if snake_id not in self.by_snake:
            raise KeyError(snake_id)
        with self._label_lock:
            current = self.labels.get(snake_id)
            current_version = int(current["version"]) if current else 0
            if version is not None and version != current_version:
                raise VersionConflict(f"label version is {current_version}, not {version}")
            entry = {"snake_id": snake_id, "target": bool(target), "version": current_version + 1}
            self.labels[snake_id] = entry
            self.label_log.append(entry)
            self._persist_labels()
            return {"target": entry["target"], "version": entry["version"]}

    def _persist_labels(self) -> None:
        # append-only history for auditability; the whole log is rewritten to
        # a temp file and renamed so readers never see a torn write
        tmp = self.labels_path.with_suffix(".jsonl.tmp")
        with open(tmp, "w") as fh:
            for entry in self.label_log:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        os.replace(tmp, self.labels_path)

    # -- views -------------------------------------------------------------

    def snippets_summary(self) -> list[dict]:
        out = []
        for sid in self.snippet_order:
            recs = self.by_snippet[sid]
            labeled = sum(1 for r in recs if r["snake_id"] in self.labels)
            out.append({
                "snippet_id": sid,
                "n_snakes": len(recs),
                "n_labeled": labeled,
                "image_url": f"/api/snippets/{sid}/image.png",
                "overlay_url": f"/api/snippets/{sid}/overlay.png",
            })
        return out

    def snippet_snakes(self, sid: str) -> list[dict] | None:
        if sid not in self.by_snippet:
            return None
        out = []
        for rec in self.by_snippet[sid]:
            out.append({
                "snake_id": rec["snake_id"],
                "points": rec["points"],
                "features": rec["features"],
                "prediction": rec.get("prediction"),
                "vote_fraction": rec.get("vote_fraction"),
                "label": self.label_of(rec["snake_id"]),
            })
        return out

    def image_path(self, sid: str, kind: str) -> Path | None:
        sub = "spectrograms" if kind == "image" else "overlays"
        path = self.dir / sub / f"{sid}.png"
        return path if path.exists() else None

    # -- training ----------------------------------------------------------

    def train(self, params: dict) -> dict:
        if not self._train_lock.acquire(blocking=False):
            raise TrainingBusy("a training job is already running")
        try:
            seed = int(params.get("seed", self.cfg.seed))
            split_ratio = float(params.get("split_ratio", 0.7))
            reduced = bool(params.get("reduced", False))
            grid = params.get("grid")
            csv_path = self.dir / "dataset.csv"
            run_extract(str(self.dir / "detections.jsonl"), self.cfg, str(csv_path),
                        labels_path=str(self.labels_path))
            result = run_train(str(csv_path), str(self.dir / "model.json"),
                               report_path=str(self.metrics_path), grid=grid,
                               split_ratio=split_ratio, seed=seed, reduced=reduced)
            return result.report
        finally:
            self._train_lock.release()

    def metrics(self) -> dict | None:
        if self.metrics_path.exists():
            return json.loads(self.metrics_path.read_text())
        return None


_FALLBACK_PAGE = """<!doctype html><meta charset="utf-8"><title>whistlekit</title>
<body style="font-family:sans-serif"><h1>whistlekit service</h1>
<p>No UI bundle found. Build the frontend (see README) or use the API:</p>
<ul><li>GET /api/snippets</li><li>GET /api/snippets/{id}/snakes</li>
<li>POST /api/labels</li><li>POST /api/train</li><li>GET /api/metrics</li></ul></body>
"""

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".map": "application/json",
    ".json": "application/json",
}


def find_ui_dir(explicit: str | None = None) -> Path | None:
    if explicit:
        path = Path(explicit)
        return path if path.is_dir() else None
    candidates = [
        Path(__file__).parent / "static",
        Path.cwd() / "frontend" / "dist",
    ]
    try:  # repo layout (editable install): <root>/frontend/dist
        candidates.append(Path(__file__).resolve().parents[2] / "frontend" / "dist")
    except IndexError:
        pass
    for candidate in candidates:
        if (candidate / "index.html").exists():
            return candidate
    return None


def make_handler(state: ServerState, ui_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        # -- helpers --------------------------------------------------------

        def _send(self, code: int, body: bytes, content_type: str) -> None:
            self.send_response(code)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _json(self, code: int, payload) -> None:
            self._send(code, json.dumps(payload).encode(), "application/json")

        def _error(self, code: int, message: str) -> None:
            self._json(code, {"error": message})

        def _read_body(self) -> dict | None:
            try:
                length = int(self.headers.get("Content-Length", 0))
                doc = json.loads(self.rfile.read(length) or b"{}")
            except (ValueError, json.JSONDecodeError):
                return None
            return doc if isinstance(doc, dict) else None

        # -- routes ----------------------------------------------------------

        def do_GET(self):
            path = self.path.split("?", 1)[0]
            if path == "/api/snippets":
                return self._json(200, state.snippets_summary())
            if path.startswith("/api/snippets/"):
                parts = path.split("/")
                if len(parts) == 5 and parts[4] in ("image.png", "overlay.png", "snakes"):
                    sid = parts[3]
                    if parts[4] == "snakes":
                        snakes = state.snippet_snakes(sid)
                        if snakes is None:
                            return self._error(404, f"unknown snippet {sid}")
                        return self._json(200, snakes)
                    kind = "image" if parts[4] == "image.png" else "overlay"
                    png = state.image_path(sid, kind)
                    if png is None:
                        return self._error(404, f"no {kind} for {sid}")
                    return self._send(200, png.read_bytes(), "image/png")
                return self._error(404, "not found")
            if path == "/api/metrics":
                metrics = state.metrics()
                if metrics is None:
                    return self._error(404, "no training run yet")
                return self._json(200, metrics)
            if path.startswith("/api/"):
                return self._error(404, "not found")
            return self._static(path)

        def do_POST(self):
            path = self.path.split("?", 1)[0]
            if path == "/api/labels":
                body = self._read_body()
                if body is None or "snake_id" not in body or "target" not in body:
                    return self._error(400, "body must be JSON with snake_id and target")
                if not isinstance(body["target"], bool):
                    return self._error(400, "target must be a boolean")
                version = body.get("version")
                if version is not None and not isinstance(version, int):
                    return self._error(400, "version must be an integer")
                try:
                    result = state.set_label(body["snake_id"], body["target"], version)
                except KeyError:
                    return self._error(404, f"unknown snake {body['snake_id']}")
                except VersionConflict as exc:
                    return self._error(409, str(exc))
                return self._json(200, {"snake_id": body["snake_id"], **result})
            if path == "/api/train":
                body = self._read_body()
                if body is None:
                    return self._error(400, "body must be a JSON object")
                try:
                    report = state.train(body)
                except TrainingBusy as exc:
                    return self._error(409, str(exc))
                except InputError as exc:
                    return self._error(400, str(exc))
                return self._json(200, report)
            return self._error(404, "not found")

        def _static(self, path: str) -> None:
            if ui_dir is None:
                if path in ("/", "/index.html"):
                    return self._send(200, _FALLBACK_PAGE.encode(), "text/html; charset=utf-8")
                return self._error(404, "not found")
            rel = "index.html" if path == "/" else path.lstrip("/")
            target = (ui_dir / rel).resolve()
            if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
                return self._error(404, "not found")
            ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
            return self._send(200, target.read_bytes(), ctype)

    return Handler


def run_server(state_dir: str, cfg: PipelineConfig, port: int = 8765,
               ui_dir: str | None = None, block: bool = True):
    """Start the service; with block=False returns the running HTTPServer."""
    state = ServerState(state_dir, cfg)
    handler = make_handler(state, find_ui_dir(ui_dir))
    try:
        httpd = ThreadingHTTPServer(("127.0.0.1", port), handler)
    except OSError as exc:
        raise InputError(f"cannot bind port {port}: {exc}") from exc
    httpd.state = state  # introspection for tests and embedding
    if not block:
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        return httpd
    try:
        print(f"whistlekit service on http://127.0.0.1:{httpd.server_port}/ (state: {state_dir})")
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return None
