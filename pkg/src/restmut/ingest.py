"""Convert JSONL HTTP exchange logs into linear IOTS test cases.

Each log line is one exchange::

    {"ts": 0, "from": "Client", "to": "AccMan", "kind": "request",
     "method": "GET", "path": "/checkAccountRisk", "headers": {"token": "1234"},
     "body": "\\"acc\\"=99", "cookies": {}}

Responses carry ``status`` instead of ``method``/``path``.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from http import HTTPStatus
from typing import Any, Iterable, Mapping, Sequence
from urllib.parse import parse_qsl, urlsplit

from .iots import (
    CRASH,
    INPUT,
    LOGIN,
    MOCK,
    OUTPUT,
    PASS,
    TOKEN,
    TOKEN_CREATION,
    Event,
    TestCase,
    linear_test_case,
    validate,
)

log = logging.getLogger(__name__)

DEFAULT_LOGIN_PATTERNS = ("login", "auth", "signin")
DEFAULT_TOKEN_NAMES = ("authorization", "token", "access_token", "sessionid")


class LogError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class HttpExchange:
    ts: int
    source: str
    dest: str
    kind: str
    method: str | None = None
    path: str | None = None
    status: int | None = None
    headers: tuple[tuple[str, str], ...] = ()
    body: str = ""
    cookies: Mapping[str, str] = field(default_factory=dict)
    line: int = 0
    pair: int | None = None  # index of the paired exchange in the parsed list
    labels: frozenset[str] = frozenset()

    @property
    def is_request(self) -> bool:
        return self.kind == "request"

    def header(self, name: str) -> str | None:
        for k, v in self.headers:
            if k.lower() == name.lower():
                return v
        return None


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _headers(raw: Any) -> tuple[tuple[str, str], ...]:
    if raw is None:
        return ()
    if isinstance(raw, Mapping):
        return tuple((str(k), str(v)) for k, v in raw.items())
    return tuple((str(k), str(v)) for k, v in raw)


def _exchange(doc: Mapping[str, Any], lineno: int) -> HttpExchange:
    if not isinstance(doc, Mapping):
        raise LogError("expected a JSON object", lineno)
    for req in ("ts", "from", "to", "kind"):
        if req not in doc:
            raise LogError(f"missing field {req!r}", lineno)
    kind = doc["kind"]
    if kind not in ("request", "response"):
        raise LogError(f"kind must be request or response, got {kind!r}", lineno)
    if not doc["from"] or not doc["to"]:
        raise LogError("'from' and 'to' must be non-empty", lineno)
    if kind == "request" and (not doc.get("method") or not doc.get("path")):
        raise LogError("request needs method and path", lineno)
    if kind == "response" and not isinstance(doc.get("status"), int):
        raise LogError("response needs an integer status", lineno)
    return HttpExchange(
        ts=int(doc["ts"]),
        source=str(doc["from"]),
        dest=str(doc["to"]),
        kind=kind,
        method=doc.get("method") if kind == "request" else None,
        path=doc.get("path") if kind == "request" else None,
        status=doc.get("status") if kind == "response" else None,
        headers=_headers(doc.get("headers")),
        body=doc.get("body") or "",
        cookies=dict(doc.get("cookies") or {}),
        line=lineno,
    )


def parse_log(data: bytes | str, fmt: str = "jsonl", lenient: bool = False) -> list[HttpExchange]:
    """Parse a JSONL log and pair each response with its request.

    Malformed lines raise :class:`LogError` unless ``lenient`` is set, in which
    case they are skipped with a warning.
    """
    if fmt != "jsonl":
        raise ValueError(f"unsupported log format {fmt!r}")
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data
    out: list[HttpExchange] = []
    open_requests: list[int] = []
    last_ts: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise LogError(f"malformed JSON ({exc.msg})", lineno) from None
            x = _exchange(doc, lineno)
            if last_ts is not None and x.ts < last_ts:
                raise LogError(f"timestamp {x.ts} goes backwards", lineno)
            if x.is_request:
                out.append(x)
                open_requests.append(len(out) - 1)
                last_ts = x.ts
                continue
            for pos in range(len(open_requests) - 1, -1, -1):
                req = out[open_requests[pos]]
                if req.source == x.dest and req.dest == x.source:
                    idx = open_requests.pop(pos)
                    out.append(replace(x, pair=idx))
                    out[idx] = replace(req, pair=len(out) - 1)
                    break
            else:
                raise LogError(f"response from {x.source} to {x.dest} has no pending request", lineno)
            last_ts = x.ts
        except LogError as exc:
            if not lenient:
                raise
            log.warning("skipping %s", exc)
    return out


# ---------------------------------------------------------------------------
# Labelling
# ---------------------------------------------------------------------------

def _json_leaves(body: str) -> list[tuple[str, Any]]:
    try:
        doc = json.loads(body)
    except (ValueError, TypeError):
        return []
    leaves: list[tuple[str, Any]] = []

    def walk(node: Any, key: str) -> None:
        if isinstance(node, dict):
            for k, v in node.items():
                walk(v, str(k))
        elif isinstance(node, list):
            for v in node:
                walk(v, key)
        else:
            leaves.append((key, node))

    walk(doc, "")
    return leaves


def named_fields(x: HttpExchange | Event) -> list[tuple[str, str]]:
    """``(name, value)`` pairs carried by headers, cookies, query string and JSON body."""
    if isinstance(x, Event):
        headers, cookies, body, path = x.headers, x.cookies, x.body, x.path or ""
    else:
        headers, cookies, body, path = x.headers, x.cookies, x.body, x.path or ""
    fields = [(k, v) for k, v in headers]
    fields += [(k, v) for k, v in cookies.items()]
    fields += parse_qsl(urlsplit(path).query)
    fields += [(k, str(v)) for k, v in _json_leaves(body) if k and v is not None]
    return fields


def _token_values(x: HttpExchange, token_names: set[str]) -> list[str]:
    vals = []
    for k, v in named_fields(x):
        if k.lower() in token_names and v:
            # "Bearer abc" carries the token "abc"
            vals.append(v.split()[-1])
    return vals


def _carries(x: HttpExchange, values: set[str]) -> bool:
    if not values:
        return False
    for _, v in named_fields(x):
        if any(part in values for part in str(v).split()):
            return True
    return bool(set(x.body.split()) & values)


def label_exchanges(
    xs: Sequence[HttpExchange],
    sut_id: str,
    login_patterns: Iterable[str] = DEFAULT_LOGIN_PATTERNS,
    token_names: Iterable[str] = DEFAULT_TOKEN_NAMES,
) -> list[HttpExchange]:
    """Attach crash / login / token / token creation / mock labels."""
    login_patterns = tuple(p.lower() for p in login_patterns)
    token_names = {t.lower() for t in token_names}
    known_tokens: set[str] = set()
    out = []
    for x in xs:
        labels = set(x.labels)
        if x.status == 500:
            labels.add(CRASH)
        if x.is_request and any(p in (urlsplit(x.path or "").path.lower()) for p in login_patterns):
            labels.add(LOGIN)
        carried = _token_values(x, token_names)
        new = [v for v in carried if v not in known_tokens]
        if not x.is_request and new:
            labels.add(TOKEN_CREATION)
        elif carried or _carries(x, known_tokens):
            labels.add(TOKEN)
        known_tokens.update(carried)
        # dependee traffic: requests issued by the SUT and the answers it receives
        if (x.is_request and x.source == sut_id and x.dest != sut_id) or (
            not x.is_request and x.dest == sut_id and x.source != sut_id
        ):
            labels.add(MOCK)
        out.append(replace(x, labels=frozenset(labels)))
    return out


# ---------------------------------------------------------------------------
# Test-case construction
# ---------------------------------------------------------------------------

def status_label(status: int) -> str:
    try:
        phrase = HTTPStatus(status).phrase
    except ValueError:
        phrase = str(status)
    return "/" + re.sub(r"[^a-z0-9]+", "_", phrase.lower()).strip("_")


def to_event(x: HttpExchange, sut_id: str) -> Event:
    params: dict[str, Any] = {"from": x.source, "to": x.dest}
    if x.is_request:
        params.update(method=x.method, path=x.path)
        label = urlsplit(x.path or "").path or "/"
    else:
        params["status"] = x.status
        label = status_label(x.status or 0)
    if x.headers:
        params["headers"] = [list(h) for h in x.headers]
    if x.body:
        params["body"] = x.body
    if x.cookies:
        params["cookies"] = dict(x.cookies)
    direction = INPUT if (x.is_request and x.dest == sut_id and x.source != sut_id) else OUTPUT
    return Event(direction, label, params)


def sessions(xs: Sequence[HttpExchange], sut_id: str, session_key: str = "from") -> dict[str, list[int]]:
    """Partition exchange indexes into sessions.

    ``session_key`` is ``"from"`` (client component id) or ``"cookie:<name>"``.
    Dependee traffic joins the session of the most recent client request
    still waiting for its response.
    """
    groups: dict[str, list[int]] = {}
    owner: dict[int, str] = {}
    pending: list[tuple[int, str]] = []

    def key_of(x: HttpExchange) -> str:
        if session_key == "from":
            return x.source
        if session_key.startswith("cookie:"):
            return x.cookies.get(session_key[7:], "") or f"nocookie:{x.source}"
        raise ValueError(f"unknown session key {session_key!r}")

    for i, x in enumerate(xs):
        if x.is_request and x.dest == sut_id and x.source != sut_id:
            k = key_of(x)
            pending.append((i, k))
        elif x.pair is not None and x.pair in owner:
            k = owner[x.pair]
            pending = [(j, kk) for j, kk in pending if j != x.pair]
        elif pending:
            k = pending[-1][1]
        else:
            k = f"orphan:{x.source}->{x.dest}"
        owner[i] = k
        groups.setdefault(k, []).append(i)
    return groups


def build_test_cases(
    xs: Sequence[HttpExchange],
    sut_id: str,
    session_key: str = "from",
    prefix: str | None = None,
) -> list[TestCase]:
    """One linear test case ending in ``pass`` per complete session."""
    out = []
    prefix = prefix or sut_id
    for n, (key, idxs) in enumerate(sessions(xs, sut_id, session_key).items()):
        chunk = [xs[i] for i in idxs]
        if any(x.pair is None for x in chunk):
            log.warning("dropping session %s: request without response", key)
            continue
        events = [(to_event(x, sut_id), x.labels) for x in chunk]
        tc = linear_test_case(f"{prefix}-{n}", sut_id, events, PASS)
        problems = validate(tc)
        if problems:
            log.warning("dropping session %s: %s", key, "; ".join(map(str, problems)))
            continue
        out.append(tc)
    return out


def collect_bindings(xs: Iterable[HttpExchange]) -> dict[str, str]:
    """Last recorded value per parameter name (lower-cased), used to resolve ``*``."""
    values: dict[str, str] = {}
    for x in xs:
        for k, v in named_fields(x):
            values[k.lower()] = str(v)
        if x.body:
            values["body"] = x.body
    return values


def ingest(data: bytes | str, sut_id: str, session_key: str = "from", lenient: bool = False) -> list[TestCase]:
    xs = label_exchanges(parse_log(data, lenient=lenient), sut_id)
    return build_test_cases(xs, sut_id, session_key)
