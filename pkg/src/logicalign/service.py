"""HTTP review service: the store's lifecycle exposed to the browser UI.

Endpoints (JSON bodies, UTF-8):
  GET  /proposals?status=pending&limit=50&offset=0
  GET  /proposals/{id}
  POST /proposals/{id}/decision   {"action": "accept|reject|edit",
                                   "texts": [...], "note": "..."}
  POST /datasets/finalize         {"path": "optional override"}
  GET  /stats

Binds loopback and runs unauthenticated by default; set a shared token to
require X-Review-Token on every request (for non-local use).
"""

from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .review import ConflictError, ReviewError, ReviewStore, UnknownProposalError

logger = logging.getLogger(__name__)

_PROPOSAL_PATH = re.compile(r"^/proposals/([0-9a-fA-F-]+)$")
_DECISION_PATH = re.compile(r"^/proposals/([0-9a-fA-F-]+)/decision$")

MAX_BODY = 1 << 20


class ReviewService:
    def __init__(self, store: ReviewStore, host: str = "127.0.0.1",
                 port: int = 0, token: str = "",
                 finalize_path="review-dataset.jsonl"):
        self.store = store
        self.token = token
        self.finalize_path = finalize_path
        handler = _make_handler(self)
        self.server = ThreadingHTTPServer((host, port), handler)
        self._thread = None

    @property
    def address(self):
        host, port = self.server.server_address[:2]
        return host, port

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self):
        """Serve on a background thread; returns once the socket is live."""
        self._thread = threading.Thread(
            target=self.server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        logger.info("review service on %s", self.url)
        self.server.serve_forever()

    def stop(self):
        self.server.shutdown()
        self.server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def _make_handler(service: ReviewService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        # -- plumbing -------------------------------------------------------

        def log_message(self, fmt, *args):
            logger.debug("%s " + fmt, self.address_string(), *args)

        def _send(self, status: int, doc: dict):
            body = json.dumps(doc, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self._cors()
            self.end_headers()
            self.wfile.write(body)

        def _cors(self):
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods",
                             "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers",
                             "Content-Type, X-Review-Token")

        def _error(self, status: int, message: str):
            self._send(status, {"error": message})

        def _authorized(self) -> bool:
            if not service.token:
                return True
            if self.headers.get("X-Review-Token") == service.token:
                return True
            self._error(401, "missing or invalid X-Review-Token")
            return False

        def _read_body(self):
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY:
                self._error(413, "request body too large")
                return None
            raw = self.rfile.read(length) if length else b""
            if not raw:
                return {}
            try:
                doc = json.loads(raw)
            except ValueError:
                self._error(400, "request body is not valid JSON")
                return None
            if not isinstance(doc, dict):
                self._error(400, "request body must be a JSON object")
                return None
            return doc

        # -- methods --------------------------------------------------------

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            if not self._authorized():
                return
            url = urlparse(self.path)
            if url.path == "/proposals":
                return self._list(parse_qs(url.query))
            m = _PROPOSAL_PATH.match(url.path)
            if m:
                return self._get_one(m.group(1))
            if url.path == "/stats":
                return self._send(200, service.store.stats())
            self._error(404, f"no route for GET {url.path}")

        def do_POST(self):
            if not self._authorized():
                return
            url = urlparse(self.path)
            m = _DECISION_PATH.match(url.path)
            if m:
                return self._decide(m.group(1))
            if url.path == "/datasets/finalize":
                return self._finalize()
            self._error(404, f"no route for POST {url.path}")

        # -- handlers -------------------------------------------------------

        def _list(self, query):
            status = query.get("status", [None])[0]
            try:
                limit = int(query.get("limit", ["50"])[0])
                offset = int(query.get("offset", ["0"])[0])
            except ValueError:
                return self._error(400, "limit and offset must be integers")
            try:
                page = service.store.list(status=status, limit=limit,
                                          offset=offset)
            except ReviewError as e:
                return self._error(400, str(e))
            page["proposals"] = [p.to_dict() for p in page["proposals"]]
            self._send(200, page)

        def _get_one(self, pid):
            try:
                p = service.store.get(pid)
            except UnknownProposalError as e:
                return self._error(404, str(e))
            self._send(200, p.to_dict())

        def _decide(self, pid):
            doc = self._read_body()
            if doc is None:
                return
            action = doc.get("action")
            if action not in ("accept", "reject", "edit"):
                return self._error(400, "action must be accept, reject or edit")
            try:
                p = service.store.decide(pid, action,
                                         texts=doc.get("texts"),
                                         note=doc.get("note", ""))
            except UnknownProposalError as e:
                return self._error(404, str(e))
            except ConflictError as e:
                return self._error(409, str(e))
            except ReviewError as e:
                return self._error(400, str(e))
            self._send(200, p.to_dict())

        def _finalize(self):
            doc = self._read_body()
            if doc is None:
                return
            path = doc.get("path") or service.finalize_path
            try:
                manifest = service.store.finalize(path)
            except (ReviewError, OSError) as e:
                return self._error(400, f"finalize failed: {e}")
            self._send(200, {"path": str(path), "manifest": manifest})

    return Handler
