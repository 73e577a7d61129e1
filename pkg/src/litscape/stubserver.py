"""Local HTTP stand-ins for the resolver, publisher, chat and embedding services."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional
from urllib.parse import unquote, urlparse

from .embedding import fallback_embed
from .llmextract.rulemodel import RuleChatModel


class StubState:
    def __init__(self):
        self.oa: dict = {}  # doi -> url or None (closed); missing -> 404
        self.files: dict = {}  # name -> (content_type, body)
        self.publisher: dict = {}  # doi -> (status, body)
        self.publisher_token: Optional[str] = "stub-key"
        self.chat: Callable = RuleChatModel().complete
        self.flaky: dict = {}  # path prefix -> number of 503s still to send
        self.requests: list = []  # (monotonic time, method, path)
        self.lock = threading.Lock()

    def log(self, method: str, path: str) -> None:
        with self.lock:
            self.requests.append((time.monotonic(), method, path))

    def take_failure(self, path: str) -> bool:
        with self.lock:
            for prefix, left in self.flaky.items():
                if path.startswith(prefix) and left > 0:
                    self.flaky[prefix] = left - 1
                    return True
        return False

    def times(self, prefix: str) -> list:
        with self.lock:
            return [t for t, _, p in self.requests if p.startswith(prefix)]


def _handler(state: StubState):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send(self, status: int, body, content_type="application/json"):
            data = body.encode("utf-8") if isinstance(body, str) else body
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            path = urlparse(self.path).path
            state.log("GET", path)
            if state.take_failure(path):
                return self._send(503, '{"error": "busy"}')
            if path.startswith("/oa/"):
                doi = unquote(path[len("/oa/"):])
                if doi not in state.oa:
                    return self._send(404, '{"error": "unknown doi"}')
                url = state.oa[doi]
                best = {"url": url, "url_for_pdf": None} if url else None
                return self._send(200, json.dumps({"doi": doi, "best_oa_location": best}))
            if path.startswith("/files/"):
                name = path[len("/files/"):]
                if name not in state.files:
                    return self._send(404, "missing", "text/plain")
                kind, body = state.files[name]
                return self._send(200, body, kind)
            if path.startswith("/publisher/"):
                doi = unquote(path[len("/publisher/"):])
                if state.publisher_token and self.headers.get("X-ELS-APIKey") != state.publisher_token:
                    return self._send(401, "<service-error>bad key</service-error>", "text/xml")
                status, body = state.publisher.get(doi, (404, "<service-error>not found</service-error>"))
                return self._send(status, body, "text/xml")
            self._send(404, '{"error": "no route"}')

        def do_POST(self):
            path = urlparse(self.path).path
            state.log("POST", path)
            length = int(self.headers.get("Content-Length", 0))
            try:
                payload = json.loads(self.rfile.read(length) or b"{}")
            except ValueError:
                return self._send(400, '{"error": "bad json"}')
            if state.take_failure(path):
                return self._send(503, '{"error": "busy"}')
            if path == "/v1/chat/completions":
                content = state.chat(payload.get("messages", []))
                return self._send(200, json.dumps({"choices": [{"index": 0, "message": {"role": "assistant",
                                                                                       "content": content}}]}))
            if path == "/v1/embeddings":
                data = [{"index": i, "embedding": fallback_embed(t).tolist()}
                        for i, t in enumerate(payload.get("input", []))]
                return self._send(200, json.dumps({"data": data, "model": payload.get("model")}))
            self._send(404, '{"error": "no route"}')

    return Handler


class StubServer:
    """Context manager running the stub services on an ephemeral localhost port."""

    def __init__(self, state: Optional[StubState] = None):
        self.state = state or StubState()
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _handler(self.state))
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "StubServer":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self.thread.join()
