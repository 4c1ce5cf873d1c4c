"""Read-only HTTP inference service backing the threshold-explorer UI.

Scores are computed at most once per piece per checkpoint; threshold
changes only re-binarize the cached score matrix, so slider interaction
costs O(d * n) per request.  The service never writes to checkpoints or
corpus files.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from schagraph.graph import build_graph
from schagraph.model import forward_scores
from schagraph.pooling import membership
from schagraph.score import ScoreError, parse_score_json, serialize_score
from schagraph.training import Checkpoint


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class _PieceCache:
    n: int
    scores: np.ndarray  # d x n
    voices: np.ndarray  # n x 3


class AnalysisService:
    """Piece registry + score cache; host-server plumbing lives below."""

    def __init__(self, checkpoint: Checkpoint, corpus_dir: Path, ui_dir: Path | None = None):
        self.checkpoint = checkpoint
        self.corpus_dir = Path(corpus_dir)
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.pieces: dict[str, Path] = {}
        for score_file in sorted(self.corpus_dir.glob("*.score.json")):
            self.pieces[score_file.name[: -len(".score.json")]] = score_file
        if not self.pieces:
            raise ScoreError(f"no *.score.json pieces under {corpus_dir}")
        self._cache: dict[str, _PieceCache] = {}
        self._locks: dict[str, threading.Lock] = {
            pid: threading.Lock() for pid in self.pieces
        }
        # Instrumentation: model forward passes per piece.
        self.forward_counts: dict[str, int] = {pid: 0 for pid in self.pieces}

    def _load_score(self, piece_id: str):
        if piece_id not in self.pieces:
            raise ServiceError(404, f"unknown piece {piece_id!r}")
        try:
            return parse_score_json(self.pieces[piece_id].read_bytes())
        except (OSError, ScoreError) as exc:
            raise ServiceError(404, f"piece {piece_id!r} unreadable: {exc}") from exc

    def list_pieces(self) -> list[dict]:
        out = []
        for pid in self.pieces:
            score = self._load_score(pid)
            out.append(
                {
                    "id": pid,
                    "title": score.title,
                    "n": score.n,
                    "d": self.checkpoint.config.depth_count,
                }
            )
        return out

    def piece_doc(self, piece_id: str) -> dict:
        score = self._load_score(piece_id)
        graph = build_graph(score)
        return {
            "piece": json.loads(serialize_score(score).decode("utf-8")),
            "topo_order": graph.topo_order.tolist(),
        }

    def _scores_for(self, piece_id: str) -> _PieceCache:
        """Single-flight per piece: concurrent first requests compute once."""
        score = self._load_score(piece_id)
        cached = self._cache.get(piece_id)
        if cached is not None:
            if cached.n != score.n:
                del self._cache[piece_id]
                raise ServiceError(
                    409, f"piece {piece_id!r} changed on disk (n={score.n}); cache dropped"
                )
            return cached
        with self._locks[piece_id]:
            cached = self._cache.get(piece_id)
            if cached is not None:
                return cached
            graph = build_graph(score)
            result = forward_scores(
                graph, self.checkpoint.config, self.checkpoint.params
            )
            self.forward_counts[piece_id] += 1
            voices = (
                result.voice.value
                if result.voice is not None
                else np.zeros((graph.n, 3))
            )
            cached = _PieceCache(n=score.n, scores=result.stack.scores, voices=voices)
            self._cache[piece_id] = cached
            return cached

    def scores_doc(self, piece_id: str) -> dict:
        cache = self._scores_for(piece_id)
        return {
            "c_min": self.checkpoint.config.c_min,
            "scores": cache.scores.tolist(),
            "voices": cache.voices.tolist(),
        }

    def assignment_doc(self, piece_id: str, body: bytes) -> dict:
        cache = self._scores_for(piece_id)
        d = cache.scores.shape[0]
        try:
            doc = json.loads(body)
            thresholds = doc["c_min"]
            if isinstance(thresholds, (int, float)):
                thresholds = [float(thresholds)]
            thresholds = [float(t) for t in thresholds]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ServiceError(400, f"malformed thresholds: {exc}") from exc
        if len(thresholds) not in (1, d):
            raise ServiceError(
                400, f"expected 1 or {d} thresholds, got {len(thresholds)}"
            )
        if len(thresholds) == 1:
            thresholds = thresholds * d
        bits = membership(cache.scores, thresholds)
        margins = cache.scores - np.asarray(thresholds)[:, None]
        return {"assignment": bits.tolist(), "margins": margins.tolist()}


def _make_handler(service: AnalysisService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass  # keep test output quiet

        def _send(self, status: int, payload: bytes, content_type="application/json"):
            self.send_response(status)
            self.send_header("Content-Type", f"{content_type}; charset=utf-8")
            self.send_header("Content-Length", str(len(payload)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.end_headers()
            self.wfile.write(payload)

        def _send_json(self, status: int, doc):
            self._send(status, json.dumps(doc).encode("utf-8"))

        def _send_error(self, exc: ServiceError):
            self._send_json(exc.status, {"error": exc.message})

        def do_OPTIONS(self):
            self._send(204, b"")

        def do_GET(self):
            try:
                parts = [p for p in self.path.split("?")[0].split("/") if p]
                if not parts and service.ui_dir:
                    index = service.ui_dir / "index.html"
                    if index.exists():
                        self._send(200, index.read_bytes(), "text/html")
                        return
                if parts and parts[0] != "pieces" and service.ui_dir:
                    static = service.ui_dir / "/".join(parts)
                    if static.is_file():
                        kind = "text/javascript" if static.suffix == ".js" else "text/html"
                        self._send(200, static.read_bytes(), kind)
                        return
                if parts == ["pieces"]:
                    self._send_json(200, service.list_pieces())
                elif len(parts) == 2 and parts[0] == "pieces":
                    self._send_json(200, service.piece_doc(parts[1]))
                elif len(parts) == 3 and parts[0] == "pieces" and parts[2] == "scores":
                    self._send_json(200, service.scores_doc(parts[1]))
                else:
                    raise ServiceError(404, f"no such endpoint {self.path!r}")
            except ServiceError as exc:
                self._send_error(exc)

        def do_POST(self):
            try:
                parts = [p for p in self.path.split("?")[0].split("/") if p]
                if len(parts) == 3 and parts[0] == "pieces" and parts[2] == "assignment":
                    length = int(self.headers.get("Content-Length", "0"))
                    body = self.rfile.read(length)
                    self._send_json(200, service.assignment_doc(parts[1], body))
                else:
                    raise ServiceError(404, f"no such endpoint {self.path!r}")
            except ServiceError as exc:
                self._send_error(exc)

    return Handler


def make_server(service: AnalysisService, host: str = "127.0.0.1", port: int = 8080):
    return ThreadingHTTPServer((host, port), _make_handler(service))


def serve(checkpoint: Checkpoint, corpus_dir: Path, port: int = 8080,
          host: str = "127.0.0.1", ui_dir: Path | None = None):
    """Blocking entry point used by the CLI."""
    service = AnalysisService(checkpoint, corpus_dir, ui_dir=ui_dir)
    server = make_server(service, host, port)
    print(f"serving {len(service.pieces)} pieces on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
