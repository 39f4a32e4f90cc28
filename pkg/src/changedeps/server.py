"""JSON-over-HTTP prediction endpoint for review automation."""

from __future__ import annotations

import json
import logging
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import __version__
from ._kernels import BACKEND
from .corpus import CorpusError, change_from_dict
from .predict import Predictor

log = logging.getLogger(__name__)

MAX_BODY = 16 * 1024 * 1024


class _Handler(BaseHTTPRequestHandler):
    server_version = f"changedeps/{__version__}"
    predictor: Predictor

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        log.info("%s %s", self.address_string(), fmt % args)

    def do_GET(self):
        if self.path != "/health":
            self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
            return
        b = self.predictor.bundle
        self._send(HTTPStatus.OK, {
            "status": "ok",
            "version": __version__,
            "kernel_backend": BACKEND,
            "corpus_changes": len(self.predictor.corpus),
            "trained_until": b.trained_until.isoformat() if b.trained_until else None,
            "threshold": b.threshold,
            "k": b.k,
        })

    def do_POST(self):
        if self.path != "/predict":
            self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        if length <= 0 or length > MAX_BODY:
            self._send(HTTPStatus.BAD_REQUEST, {"error": "missing or oversized body"})
            return
        try:
            payload = json.loads(self.rfile.read(length))
            if not isinstance(payload, dict):
                raise TypeError("expected a JSON object")
            change = change_from_dict(payload)
        except (ValueError, KeyError, TypeError, CorpusError) as exc:
            self._send(HTTPStatus.BAD_REQUEST, {"error": f"invalid change: {exc}"})
            return
        try:
            result = self.predictor.predict(change)
        except Exception as exc:  # keep serving other requests
            log.exception("prediction failed for change %s", change.change_number)
            self._send(HTTPStatus.INTERNAL_SERVER_ERROR, {"error": str(exc)})
            return
        self._send(HTTPStatus.OK, result.to_dict())


def make_server(predictor: Predictor, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    """A threaded server bound to ``host:port``; port 0 picks a free one."""
    handler = type("Handler", (_Handler,), {"predictor": predictor})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def serve(predictor: Predictor, host: str = "127.0.0.1", port: int = 8080) -> None:
    server = make_server(predictor, host, port)
    log.info("serving on http://%s:%d", *server.server_address[:2])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
