"""HTTP studio service: stylization plus background style learning.

Readers work against an immutable snapshot (weights + codebook + adapted
parameter cache). A single worker thread runs at most one add-style job at
a time; when a job finishes, a new snapshot is published atomically, so
in-flight stylize calls finish on the old one and no request ever sees a
half-updated codebook. Request and response bodies are JSON with base64
PNG payloads; see docs/api.md.
"""

from __future__ import annotations

import base64
import binascii
import json
import os
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .backbone import FeatureBackbone, toy_backbone
from .codebook import StyleCodebook, resolve_blend
from .errors import CodebookError, ContractError, ImageCodecError, NonFiniteError, TrainingAborted
from .network import Stylizer
from .storage import decode_image, encode_image
from .synthetic import content_pool
from .training import TrainConfig, train_incremental

JOB_STATES = ("queued", "running", "done", "failed")


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class Snapshot:
    stylizer: Stylizer
    codebook: StyleCodebook
    cache: dict


@dataclass
class StyleJob:
    job_id: str
    name: str
    style_id: str
    state: str = "queued"
    iterations_done: int = 0
    loss: float | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "name": self.name,
            "style_id": self.style_id,
            "state": self.state,
            "iterations_done": self.iterations_done,
            "loss": self.loss,
            "error": self.error,
        }


def _slug(name: str) -> str:
    slug = "".join(c if c.isalnum() else "-" for c in name.lower()).strip("-")
    while "--" in slug:
        slug = slug.replace("--", "-")
    return slug


class StudioService:
    """Application state behind the HTTP handler; usable directly in tests."""

    def __init__(self, stylizer: Stylizer, codebook: StyleCodebook,
                 backbone: FeatureBackbone | None = None,
                 contents: list[np.ndarray] | None = None,
                 job_iterations: int = 3000, job_seed: int = 7):
        self.snapshot: Snapshot | None = Snapshot(stylizer, codebook, {})
        self.backbone = backbone if backbone is not None else toy_backbone()
        self.contents = contents if contents is not None else content_pool(17, 8, size=48)
        self.job_iterations = job_iterations
        self.job_seed = job_seed
        self.jobs: dict[str, StyleJob] = {}
        self._job_images: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self._queue: queue.Queue[str] = queue.Queue()
        self._worker = threading.Thread(target=self._work, daemon=True,
                                        name="styleshift-job-worker")
        self._worker.start()

    # -- request handlers ----------------------------------------------------

    def _require_snapshot(self) -> Snapshot:
        snap = self.snapshot
        if snap is None:
            raise ApiError(503, "service is starting up")
        return snap

    def list_styles(self) -> dict:
        snap = self._require_snapshot()
        return {"styles": [
            {"id": rep.id, "name": rep.name, "identity": rep.id == snap.codebook.identity.id}
            for rep in snap.codebook.entries()
        ]}

    def stylize(self, payload: dict) -> dict:
        snap = self._require_snapshot()
        if not isinstance(payload, dict):
            raise ApiError(400, "request body must be a JSON object")
        content = _decode_b64_png(payload.get("content"))
        raw_weights = payload.get("weights")
        if not isinstance(raw_weights, list) or not raw_weights:
            raise ApiError(400, "weights must be a non-empty list of {style_id, w}")
        weights = []
        for item in raw_weights:
            if not isinstance(item, dict) or "style_id" not in item or "w" not in item:
                raise ApiError(400, "each weight needs style_id and w")
            try:
                w = float(item["w"])
            except (TypeError, ValueError):
                raise ApiError(400, f"weight {item['w']!r} is not a number") from None
            if not np.isfinite(w):
                raise ApiError(422, "weights must be finite")
            weights.append((str(item["style_id"]), w))
        alpha = payload.get("alpha", 1.0)
        try:
            alpha = float(alpha)
        except (TypeError, ValueError):
            raise ApiError(400, f"alpha {alpha!r} is not a number") from None
        if not np.isfinite(alpha) or not 0.0 <= alpha <= 1.0:
            raise ApiError(422, "alpha must be finite and in [0, 1]")
        fmt = payload.get("format", "png")
        if fmt != "png":
            raise ApiError(400, f"unsupported output format {fmt!r}")
        try:
            values, normalized = resolve_blend(snap.codebook, weights, alpha)
        except CodebookError as exc:
            raise ApiError(404, str(exc)) from None
        except (ContractError, NonFiniteError) as exc:
            raise ApiError(422, str(exc)) from None
        t0 = time.perf_counter()
        out = snap.stylizer.stylize_any_size(content, values, snap.cache)
        millis = (time.perf_counter() - t0) * 1e3
        return {
            "image": base64.b64encode(encode_image(out)).decode("ascii"),
            "millis": millis,
            "weights_normalized": normalized,
        }

    def submit_style(self, payload: dict) -> dict:
        snap = self._require_snapshot()
        if not isinstance(payload, dict):
            raise ApiError(400, "request body must be a JSON object")
        name = payload.get("name")
        if not isinstance(name, str) or not name.strip():
            raise ApiError(400, "name must be a non-empty string")
        image = _decode_b64_png(payload.get("image"))
        style_id = _slug(name)
        if not style_id:
            raise ApiError(400, f"cannot derive a style id from {name!r}")
        with self._lock:
            taken = set(snap.codebook.ids()) | {
                job.style_id for job in self.jobs.values() if job.state in ("queued", "running")
            }
            existing_names = {rep.name for rep in snap.codebook.entries()}
            if style_id in taken or name in existing_names:
                raise ApiError(409, f"style name {name!r} (id {style_id!r}) already exists")
            job = StyleJob(job_id=uuid.uuid4().hex[:12], name=name, style_id=style_id)
            self.jobs[job.job_id] = job
            self._job_images[job.job_id] = image
        self._queue.put(job.job_id)
        return {"job_id": job.job_id}

    def job_status(self, job_id: str) -> dict:
        job = self.jobs.get(job_id)
        if job is None:
            raise ApiError(404, f"unknown job {job_id!r}")
        return job.to_dict()

    # -- background worker -----------------------------------------------------

    def _work(self) -> None:
        while True:
            job_id = self._queue.get()
            job = self.jobs[job_id]
            image = self._job_images.pop(job_id)
            snap = self.snapshot
            job.state = "running"

            def progress(iteration, comps):
                job.iterations_done = iteration + 1
                job.loss = comps["total"]

            try:
                cfg = TrainConfig(
                    iterations=self.job_iterations, batch_size=2, content_crop=32,
                    lr_halve_every=max(1, self.job_iterations // 4),
                    seed=self.job_seed, incremental=True, geo_mode="sample1",
                    checkpoint_every=max(1, self.job_iterations))
                merged, report = train_incremental(
                    cfg, self.contents, {job.style_id: image}, snap.stylizer,
                    snap.codebook, self.backbone, style_names={job.style_id: job.name},
                    progress=progress)
                # publish atomically; in-flight requests keep the old snapshot
                self.snapshot = Snapshot(snap.stylizer, merged, snap.cache)
                job.loss = report.per_style_loss.get(job.style_id)
                job.state = "done"
            except (TrainingAborted, NonFiniteError, CodebookError, ContractError) as exc:
                job.error = str(exc)
                job.state = "failed"


def _decode_b64_png(data) -> np.ndarray:
    if not isinstance(data, str) or not data:
        raise ApiError(400, "expected a base64 PNG string")
    try:
        raw = base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError):
        raise ApiError(400, "invalid base64 payload") from None
    try:
        return decode_image(raw)
    except ImageCodecError as exc:
        raise ApiError(400, f"bad PNG: {exc}") from None


# ---------------------------------------------------------------------------
# HTTP plumbing
# ---------------------------------------------------------------------------

_CONTENT_TYPES = {".html": "text/html", ".js": "text/javascript",
                  ".css": "text/css", ".map": "application/json",
                  ".png": "image/png", ".svg": "image/svg+xml"}


def make_handler(service: StudioService, ui_dir: str | None = None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, status: int, body: bytes, content_type: str) -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.end_headers()
            self.wfile.write(body)

        def _send_json(self, status: int, doc: dict) -> None:
            self._send(status, json.dumps(doc).encode("utf-8"), "application/json")

        def _read_json(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if length <= 0:
                raise ApiError(400, "missing request body")
            raw = self.rfile.read(length)
            try:
                return json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise ApiError(400, "request body is not valid JSON") from None

        def _dispatch(self, method: str) -> None:
            path = self.path.split("?", 1)[0].rstrip("/") or "/"
            try:
                if method == "GET" and path == "/healthz":
                    if service.snapshot is None:
                        raise ApiError(503, "starting up")
                    self._send(200, b"ok", "text/plain")
                elif method == "GET" and path == "/styles":
                    self._send_json(200, service.list_styles())
                elif method == "POST" and path == "/stylize":
                    self._send_json(200, service.stylize(self._read_json()))
                elif method == "POST" and path == "/styles":
                    self._send_json(202, service.submit_style(self._read_json()))
                elif method == "GET" and path.startswith("/jobs/"):
                    self._send_json(200, service.job_status(path[len("/jobs/"):]))
                elif method == "GET" and ui_dir:
                    self._serve_static(path)
                else:
                    raise ApiError(404, f"no route for {method} {path}")
            except ApiError as exc:
                self._send_json(exc.status, {"error": str(exc)})
            except BrokenPipeError:
                pass

        def _serve_static(self, path: str) -> None:
            rel = "index.html" if path == "/" else path.lstrip("/")
            full = os.path.realpath(os.path.join(ui_dir, rel))
            if not full.startswith(os.path.realpath(ui_dir)) or not os.path.isfile(full):
                raise ApiError(404, f"no route for GET {path}")
            ext = os.path.splitext(full)[1]
            with open(full, "rb") as fh:
                self._send(200, fh.read(), _CONTENT_TYPES.get(ext, "application/octet-stream"))

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_OPTIONS(self):
            self._send(204, b"", "text/plain")

    return Handler


def create_server(service: StudioService, port: int = 0, host: str = "127.0.0.1",
                  ui_dir: str | None = None) -> ThreadingHTTPServer:
    return ThreadingHTTPServer((host, port), make_handler(service, ui_dir))


def run_server(service: StudioService, port: int, host: str = "127.0.0.1",
               ui_dir: str | None = None) -> None:
    server = create_server(service, port, host, ui_dir)
    print(json.dumps({"listening": True, "host": host, "port": server.server_address[1]}),
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
