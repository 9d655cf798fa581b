"""Minimal threaded HTTP plumbing shared by the platform and the GMs.

One thread per connection (stdlib ThreadingHTTPServer) with HTTP/1.1
keep-alive. This is the right shape for the platform's blocking long-poll
delivery channel: a waiting poll simply parks its connection thread on a
condition variable.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import traceback
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional
from urllib.parse import parse_qs, urlsplit

log = logging.getLogger(__name__)

MAX_BODY_BYTES = 4 * 1024 * 1024


class HttpError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class Request:
    def __init__(self, method, path, query, headers, body: bytes):
        self.method = method
        self.path = path
        self.query = query  # dict[str, str], first value wins
        self.headers = headers
        self.body = body
        self.params: dict[str, str] = {}  # filled by the router

    def json(self) -> dict:
        if not self.body:
            return {}
        try:
            payload = json.loads(self.body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise HttpError(400, "bad_request", f"body is not valid JSON: {exc}")
        if not isinstance(payload, dict):
            raise HttpError(400, "bad_request", "body must be a JSON object")
        return payload

    def form(self) -> dict:
        try:
            pairs = parse_qs(self.body.decode("utf-8"), keep_blank_values=True)
        except UnicodeDecodeError as exc:
            raise HttpError(400, "bad_request", f"body is not form data: {exc}")
        return {k: v[0] for k, v in pairs.items()}


class Response:
    def __init__(self, payload=None, status=200, content_type="application/json", headers=None, body: bytes = b""):
        self.status = status
        self.headers = dict(headers or {})
        if payload is not None:
            self.body = json.dumps(payload).encode("utf-8")
            self.content_type = content_type
        else:
            self.body = body
            self.content_type = content_type


class Router:
    """Maps (method, /path/{var}/pattern) to handler(request) -> Response."""

    def __init__(self):
        self._routes: list[tuple[str, re.Pattern, Callable[[Request], Response]]] = []

    def add(self, method: str, pattern: str, handler: Callable[[Request], Response]):
        regex = "^"
        for part in re.split(r"(\{[a-zA-Z_]+\*?\})", pattern):
            if part.startswith("{") and part.endswith("}"):
                name = part[1:-1]
                if name.endswith("*"):
                    regex += f"(?P<{name[:-1]}>.+)"
                else:
                    regex += f"(?P<{name}>[^/]+)"
            else:
                regex += re.escape(part)
        regex += "$"
        self._routes.append((method.upper(), re.compile(regex), handler))

    def get(self, pattern):
        return lambda fn: (self.add("GET", pattern, fn), fn)[1]

    def post(self, pattern):
        return lambda fn: (self.add("POST", pattern, fn), fn)[1]

    def dispatch(self, request: Request) -> Response:
        path_matched = False
        for method, regex, handler in self._routes:
            match = regex.match(request.path)
            if match is None:
                continue
            path_matched = True
            if method != request.method:
                continue
            request.params = match.groupdict()
            return handler(request)
        if path_matched:
            raise HttpError(405, "method_not_allowed", f"wrong method for {request.path}")
        raise HttpError(404, "not_found", f"no route for {request.path}")


def _make_handler(router: Router, server_name: str):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = server_name

        def log_message(self, fmt, *args):
            log.debug("%s %s", self.address_string(), fmt % args)

        def _respond(self, response: Response):
            self.send_response(response.status)
            self.send_header("Content-Type", response.content_type)
            self.send_header("Content-Length", str(len(response.body)))
            for key, value in response.headers.items():
                self.send_header(key, value)
            self.end_headers()
            if self.command != "HEAD":
                self.wfile.write(response.body)

        def _handle(self):
            try:
                split = urlsplit(self.path)
                query = {k: v[0] for k, v in parse_qs(split.query, keep_blank_values=True).items()}
                length = int(self.headers.get("Content-Length") or 0)
                if length > MAX_BODY_BYTES:
                    raise HttpError(413, "too_large", "request body too large")
                body = self.rfile.read(length) if length else b""
                request = Request(self.command, split.path, query, self.headers, body)
                response = router.dispatch(request)
            except HttpError as exc:
                response = Response(
                    {"error": {"code": exc.code, "message": exc.message}}, status=exc.status
                )
            except (BrokenPipeError, ConnectionResetError):
                raise
            except Exception:
                log.error("unhandled error handling %s %s\n%s", self.command, self.path, traceback.format_exc())
                response = Response(
                    {"error": {"code": "internal", "message": "internal server error"}}, status=500
                )
            try:
                self._respond(response)
            except (BrokenPipeError, ConnectionResetError):
                pass  # client went away mid-reply

        def do_GET(self):
            self._handle()

        def do_POST(self):
            self._handle()

        def do_HEAD(self):
            self._handle()

    return Handler


class HttpService:
    """A router bound to a listening socket, with clean start/stop."""

    def __init__(self, router: Router, host="127.0.0.1", port=0, name="playlab/0.1"):
        self.router = router
        try:
            self._httpd = ThreadingHTTPServer((host, port), _make_handler(router, name))
        except OSError as exc:
            raise HttpError(0, "bind_failed", f"cannot listen on {host}:{port}: {exc}")
        self._httpd.daemon_threads = True
        self._thread: Optional[threading.Thread] = None
        self._serving = False

    @property
    def host(self) -> str:
        return self._httpd.server_address[0]

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}/"

    def start(self):
        self._serving = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, name="httpd", daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._serving:  # shutdown() deadlocks if serve_forever never ran
            self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def serve_forever(self):
        self._serving = True
        self._httpd.serve_forever()
