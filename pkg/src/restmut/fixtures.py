"""Demo services for desk-scale experiments.

``AccMan`` mirrors the account-management example: ``GET /checkAccountRisk``
forwards the account number to a risk-evaluation dependee and relays its
answer.  The *secure* flavour rejects verb tampering (405), missing tokens
(401) and idle sessions (401 ``session terminated``).  The *vulnerable* flavour
seeds the weaknesses listed in :data:`WEAKNESSES`; one of them (dot-segment
paths stall the request handler) makes the service silent, which the
generated tests report as ``fail``.

Every service exposes ``POST /__fixture/reset`` taking ``{"mockUrl": ...}``;
the executor calls it before each plan so that dependee calls reach the mock.
"""

from __future__ import annotations

import argparse
import contextlib
import http.client
import json
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from typing import Any, Iterator
from urllib.parse import urlsplit

RESET_PATH = "/__fixture/reset"
SUT_ID = "AccMan"
DEPENDEE_ID = "CheckRisk"
PROVISIONED_TOKEN = "1234"

# seeded weakness -> operator expected to reveal it
WEAKNESSES = {
    "access bypass with HTTP verbs": "verb-change",
    "missing token ignored": "token-removal",
    "insufficient session expiration": "session-mgmt",
    "path traversal stalls the service": "path-manip",
}

PROTECTED = ("/checkAccountRisk", "/account")


def asset(name: str) -> str:
    """Text of a shipped data file (``accman_check.json``, ``accman.jsonl`` ...)."""
    return (resources.files("restmut") / "data" / name).read_text(encoding="utf-8")


def asset_path(name: str) -> str:
    return str(resources.files("restmut") / "data" / name)


@dataclass
class Reply:
    status: int
    body: str = ""
    headers: list[tuple[str, str]] = field(default_factory=list)


class Service:
    """Base for fixture services: routing, reset and a threaded HTTP server."""

    def __init__(self) -> None:
        self.mock_url: str | None = None
        self.lock = threading.Lock()
        self.reset()

    def reset(self, mock_url: str | None = None) -> None:
        self.mock_url = mock_url

    def handle(self, method: str, path: str, headers: dict[str, str], body: str) -> Reply | None:
        raise NotImplementedError

    def dependee(self, path: str, headers: list[tuple[str, str]], timeout: float) -> Reply | None:
        """Call the dependee at the configured mock URL; None on any transport failure."""
        if not self.mock_url:
            return None
        parts = urlsplit(self.mock_url)
        conn = http.client.HTTPConnection(parts.hostname or "127.0.0.1", parts.port or 80, timeout=timeout)
        try:
            conn.request("GET", path, headers=dict(headers))
            resp = conn.getresponse()
            return Reply(resp.status, resp.read().decode("utf-8", "replace"), list(resp.getheaders()))
        except (OSError, http.client.HTTPException):
            return None
        finally:
            conn.close()


class AccMan(Service):
    def __init__(self, secure: bool = True, session_ttl: float = 1.0, dependee_timeout: float = 2.0,
                 lockout: int = 3, stall: float = 30.0) -> None:
        self.secure = secure
        self.stall = stall
        self.session_ttl = session_ttl
        self.dependee_timeout = dependee_timeout
        self.lockout = lockout
        super().__init__()

    @property
    def flavour(self) -> str:
        return "secure" if self.secure else "vulnerable"

    def reset(self, mock_url: str | None = None) -> None:
        super().reset(mock_url)
        self.tokens: dict[str, float] = {PROVISIONED_TOKEN: time.monotonic()}
        self.issued = 0
        self.failures = 0

    # -- auth ---------------------------------------------------------------
    def _authorize(self, method: str, token: str | None) -> Reply | None:
        if self.secure:
            if method != "GET":
                return Reply(405, "error: method not allowed")
            if not token:
                return Reply(401, "error: missing token")
        elif not token:
            return None  # weakness: the missing token goes unnoticed
        with self.lock:
            seen = self.tokens.get(token)
            if seen is None:
                return Reply(401, "error: invalid token")
            now = time.monotonic()
            if self.secure and now - seen > self.session_ttl:
                del self.tokens[token]
                return Reply(401, "error: session terminated")
            self.tokens[token] = now
        return None

    def handle(self, method, path, headers, body):
        route = urlsplit(path).path
        token = headers.get("token")
        if route == "/login":
            return self._login(method, body)
        if not self.secure and "/.." in route:
            # weakness: the path is resolved against the file system and the handler blocks
            time.sleep(self.stall)
            return None
        if route not in PROTECTED:
            return Reply(404, "error: not found")
        denied = self._authorize(method, token)
        if denied is not None:
            return denied
        if route == "/account":
            return Reply(200, json.dumps({"user": "alice", "balance": 100}), [("Content-Type", "application/json")])
        return self._check_risk(token, body)

    def _login(self, method: str, body: str) -> Reply:
        if method != "POST":
            return Reply(405, "error: method not allowed")
        try:
            doc = json.loads(body or "{}")
        except ValueError:
            return Reply(400, "error: malformed body")
        if not isinstance(doc, dict):
            return Reply(400, "error: malformed body")
        with self.lock:
            if self.secure and self.failures >= self.lockout:
                return Reply(429, "error : Too Many Failed Attempt")
            if doc.get("user") == "alice" and doc.get("password") == "secret":
                self.failures = 0
                self.issued += 1
                tok = f"tok-{self.issued}"
                self.tokens[tok] = time.monotonic()
                return Reply(200, json.dumps({"token": tok}), [("Content-Type", "application/json")])
            self.failures += 1
            if self.secure and self.failures >= self.lockout:
                return Reply(429, "error : Too Many Failed Attempt")
        return Reply(401, "error: bad credentials")

    def _check_risk(self, token: str | None, body: str) -> Reply:
        m = re.search(r'"?acc"?\s*[=:]\s*"?(\w+)', body or "")
        acc = m.group(1) if m else ""
        outbound = [("acc", acc)] + ([("token", token)] if token else [])
        answer = self.dependee("/evaluateRisk", outbound, self.dependee_timeout)
        back = [("token", token)] if token else []
        if answer is None:
            if self.secure:
                return Reply(408, "error : connexion timed out")
            return Reply(200, "LOWRISK", back)
        if self.secure:
            carried = dict((k.lower(), v) for k, v in answer.headers).get("token")
            if carried != token:
                return Reply(403, "error: untrusted dependee response")
        return Reply(200, answer.body, back)


class Scripted(Service):
    """Calls the dependee like AccMan, then answers with a fixed behaviour.

    ``mode`` is ``"403"``, ``"200"`` or ``"silent"`` (no answer for ``silence`` seconds).
    """

    def __init__(self, mode: str = "403", silence: float = 3.0) -> None:
        self.mode = mode
        self.silence = silence
        super().__init__()

    def handle(self, method, path, headers, body):
        self.dependee("/evaluateRisk", [("acc", "99"), ("token", PROVISIONED_TOKEN)], 2.0)
        if self.mode == "silent":
            time.sleep(self.silence)
            return None
        status = int(self.mode)
        return Reply(status, "LOWRISK" if status == 200 else "error: forbidden", [("token", PROVISIONED_TOKEN)])


def _handler(service: Service) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt: str, *args: Any) -> None:
            pass

        def _serve(self) -> None:
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length).decode("utf-8", "replace") if length else ""
            headers = {k.lower(): v for k, v in self.headers.items()}
            if self.path == RESET_PATH and self.command == "POST":
                try:
                    doc = json.loads(body or "{}")
                except ValueError:
                    doc = {}
                service.reset(doc.get("mockUrl"))
                reply: Reply | None = Reply(204)
            else:
                reply = service.handle(self.command, self.path, headers, body)
            if reply is None:
                self.close_connection = True
                return
            data = reply.body.encode("utf-8")
            self.send_response(reply.status)
            for k, v in reply.headers:
                self.send_header(k, v)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        do_GET = do_POST = do_PUT = do_DELETE = do_PATCH = do_HEAD = do_OPTIONS = _serve

    return Handler


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    block_on_close = False


@contextlib.contextmanager
def serve(service: Service, port: int = 0, host: str = "127.0.0.1") -> Iterator[str]:
    """Run ``service`` in a background thread; yields its base URL."""
    httpd = _Server((host, port), _handler(service))
    thread = threading.Thread(target=httpd.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True)
    thread.start()
    try:
        yield f"http://{host}:{httpd.server_address[1]}"
    finally:
        httpd.shutdown()
        httpd.server_close()


def reset_url(base_url: str) -> str:
    return base_url.rstrip("/") + RESET_PATH


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="restmut fixtures", description="start the demo AccMan services")
    add_arguments(parser)
    return run_from_args(parser.parse_args(argv))


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kind", choices=("secure", "vulnerable", "both"), default="both")
    parser.add_argument("--port", type=int, default=8080, help="first port; 'both' uses port and port+1")
    parser.add_argument("--session-ttl", type=float, default=1.0)
    parser.add_argument("--stall", type=float, default=30.0, help="seconds the vulnerable service hangs")


def run_from_args(args: argparse.Namespace) -> int:
    kinds = ["secure", "vulnerable"] if args.kind == "both" else [args.kind]
    with contextlib.ExitStack() as stack:
        for i, kind in enumerate(kinds):
            url = stack.enter_context(serve(AccMan(kind == "secure", args.session_ttl, stall=args.stall), args.port + i))
            print(f"{kind} AccMan listening on {url} (reset: {reset_url(url)})", flush=True)
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            pass
    return 0
