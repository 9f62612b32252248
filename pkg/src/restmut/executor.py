"""Execute test plans against a running service, with an embedded mock component."""

from __future__ import annotations

import http.client
import json
import logging
import socket
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Iterable, Mapping, Sequence
from urllib.parse import urlsplit
from xml.etree import ElementTree as ET

from .concretize import Branch, MockRule, PlanNode, Request, TestPlan
from .iots import FAIL, INC, PASS, VERDICT_RANK

log = logging.getLogger(__name__)

RESULT_SCHEMA = "result/1"
ENVIRONMENT = "environment"
MOCK_VIOLATED = "mock contract violated"


class HarnessError(RuntimeError):
    """The harness could not reach the service or start its mocks."""


# ---------------------------------------------------------------------------
# mock component
# ---------------------------------------------------------------------------

@dataclass
class MockCall:
    method: str
    path: str
    headers: tuple[tuple[str, str], ...]
    body: str
    rule: int | None


class MockServer:
    """Serves :class:`MockRule` s on ``127.0.0.1`` and records every call.

    Identical requests get identical answers; when several rules share a
    matcher they are consumed in order, the last one answering any surplus.
    A shutdown rule drops the connection and every later call.
    """

    def __init__(self, rules: Sequence[MockRule], port: int = 0, host: str = "127.0.0.1"):
        self.rules = list(rules)
        self.calls: list[MockCall] = []
        self.down = False
        self._lock = threading.Lock()
        self._served: Counter = Counter()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt: str, *args: Any) -> None:  # quiet
                log.debug("mock: " + fmt, *args)

            def _handle(self) -> None:
                length = int(self.headers.get("Content-Length") or 0)
                body = self.rfile.read(length).decode("utf-8", "replace") if length else ""
                headers = tuple((k, v) for k, v in self.headers.items())
                idx, rule = outer._dispatch(self.command, self.path, headers, body)
                if rule is None:
                    if outer.down:
                        self._drop()
                        return
                    self._reply(404, (), "no mock rule")
                    return
                if rule.delay:
                    time.sleep(rule.delay)
                if rule.shutdown:
                    outer.down = True
                    self._drop()
                    return
                resp = rule.response
                if resp is None:
                    self._reply(200, (), "")
                else:
                    self._reply(resp.status, resp.headers, resp.body)

            def _drop(self) -> None:
                self.close_connection = True
                try:
                    self.connection.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass

            def _reply(self, status: int, headers: Iterable[tuple[str, str]], body: str) -> None:
                data = body.encode("utf-8")
                self.send_response(status)
                for k, v in headers:
                    if k.lower() not in ("content-length", "connection"):
                        self.send_header(k, v)
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            do_GET = do_POST = do_PUT = do_DELETE = do_PATCH = do_HEAD = do_OPTIONS = _handle

        self.httpd = ThreadingHTTPServer((host, port), Handler)
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def _dispatch(self, method: str, path: str, headers, body: str) -> tuple[int | None, MockRule | None]:
        with self._lock:
            if self.down:
                self.calls.append(MockCall(method, path, headers, body, None))
                return None, None
            matching = [i for i, r in enumerate(self.rules) if r.matches(method, path, headers)]
            chosen = None
            for i in matching:
                if self._served[i] < self.rules[i].times:
                    chosen = i
                    break
            if chosen is None and matching:
                chosen = matching[-1]
            if chosen is not None:
                self._served[chosen] += 1
            self.calls.append(MockCall(method, path, headers, body, chosen))
            return chosen, (self.rules[chosen] if chosen is not None else None)

    def counts(self) -> list[int]:
        with self._lock:
            return [self._served[i] for i in range(len(self.rules))]

    def unexpected(self) -> list[MockCall]:
        with self._lock:
            return [c for c in self.calls if c.rule is None]

    def __enter__(self) -> "MockServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc: Any) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()


def verify_mocks(plan: TestPlan, observed: Sequence[int]) -> dict[str, Any]:
    """Compare the number of calls per rule with the expected count."""
    mismatches = []
    for i, rule in enumerate(plan.rules):
        if rule.exempt:
            continue
        got = observed[i] if i < len(observed) else 0
        if got != rule.times:
            mismatches.append({
                "rule": i,
                "request": f"{rule.method} {rule.path}",
                "expected": rule.times,
                "observed": got,
            })
    return {"ok": not mismatches, "mismatches": mismatches}


# ---------------------------------------------------------------------------
# observations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Observation:
    kind: str  # response | silence | transport
    status: int | None = None
    headers: tuple[tuple[str, str], ...] = ()
    body: str = ""
    error: str = ""

    @property
    def transport_error(self) -> bool:
        return self.kind == "transport"

    @property
    def crash(self) -> bool:
        return self.status == 500 or (self.kind == "transport" and not self.error.startswith("refused"))

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"kind": self.kind}
        if self.kind == "response":
            doc.update(status=self.status, body=self.body[:2000])
        if self.error:
            doc["error"] = self.error
        return doc


def send(base_url: str, req: Request, timeout: float) -> Observation:
    """Issue one request; paths are sent verbatim (no dot-segment normalisation)."""
    parts = urlsplit(base_url)
    prefix = parts.path.rstrip("/")
    conn = http.client.HTTPConnection(parts.hostname or "127.0.0.1", parts.port or 80, timeout=timeout)
    try:
        body = req.body.encode("utf-8") if req.body else None
        conn.putrequest(req.method, prefix + req.path, skip_accept_encoding=True)
        names = set()
        for k, v in req.headers:
            conn.putheader(k, v)
            names.add(k.lower())
        if body is not None and "content-length" not in names:
            conn.putheader("Content-Length", str(len(body)))
        elif body is None and req.method in ("POST", "PUT", "PATCH"):
            conn.putheader("Content-Length", "0")
        conn.endheaders(body)
        resp = conn.getresponse()
        data = resp.read().decode("utf-8", "replace")
        return Observation("response", resp.status, tuple(resp.getheaders()), data)
    except (socket.timeout, TimeoutError):
        return Observation("silence")
    except ConnectionRefusedError:
        return Observation("transport", error="refused")
    except (ConnectionResetError, BrokenPipeError, http.client.RemoteDisconnected,
            http.client.IncompleteRead, http.client.BadStatusLine) as exc:
        return Observation("transport", error=f"reset: {type(exc).__name__}")
    except OSError as exc:
        return Observation("transport", error=f"refused: {exc}")
    finally:
        conn.close()


# ---------------------------------------------------------------------------
# running plans
# ---------------------------------------------------------------------------

@dataclass
class Timeouts:
    quiescence: float = 5.0

    @classmethod
    def from_ms(cls, ms: int) -> "Timeouts":
        return cls(ms / 1000.0)


@dataclass
class TestResult:
    __test__ = False

    mutant_id: str
    name: str
    operator: str
    verdict: str
    trace: list[dict[str, Any]] = field(default_factory=list)
    mock_verification: dict[str, Any] = field(default_factory=lambda: {"ok": True, "mismatches": []})
    reason: str = ""
    warnings: list[str] = field(default_factory=list)
    unexpected_mock_calls: int = 0

    def to_json(self, timestamps: bool = True) -> dict[str, Any]:
        trace = self.trace if timestamps else [{k: v for k, v in t.items() if k != "t"} for t in self.trace]
        return {
            "mutant": self.mutant_id,
            "name": self.name,
            "operator": self.operator,
            "verdict": self.verdict,
            "reason": self.reason,
            "trace": trace,
            "mockVerification": self.mock_verification,
            "unexpectedMockCalls": self.unexpected_mock_calls,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "TestResult":
        return cls(
            doc["mutant"], doc.get("name", doc["mutant"]), doc.get("operator", ""), doc["verdict"],
            list(doc.get("trace", ())), dict(doc.get("mockVerification", {"ok": True, "mismatches": []})),
            doc.get("reason", ""), list(doc.get("warnings", ())), int(doc.get("unexpectedMockCalls", 0)),
        )


ACCEPTED_ANYWAY = "mutated request accepted with 2xx"

Setup = Callable[[str], None]


def setup_via_url(url: str, timeout: float = 5.0) -> Setup:
    """Setup hook POSTing ``{"mockUrl": ...}`` to a control endpoint before each plan."""

    def setup(mock_url: str) -> None:
        parts = urlsplit(url)
        conn = http.client.HTTPConnection(parts.hostname or "127.0.0.1", parts.port or 80, timeout=timeout)
        try:
            data = json.dumps({"mockUrl": mock_url}).encode()
            conn.request("POST", parts.path or "/", body=data, headers={"Content-Type": "application/json"})
            resp = conn.getresponse()
            resp.read()
            if resp.status >= 400:
                raise HarnessError(f"setup endpoint answered {resp.status}")
        except OSError as exc:
            raise HarnessError(f"setup endpoint unreachable: {exc}") from exc
        finally:
            conn.close()

    return setup


def _classify(node: PlanNode, obs: Observation) -> Branch | None:
    if obs.kind == "silence":
        return None
    for b in node.branches:
        if b.matches(obs.status, obs.body, obs.transport_error):
            return b
    return None


def _outcome_rank(node: PlanNode, obs: Observation) -> int:
    if obs.kind == "silence":
        return VERDICT_RANK.get(node.silence or PASS, 0)
    b = _classify(node, obs)
    return VERDICT_RANK.get(b.verdict or PASS, 0) if b else VERDICT_RANK[INC]


def _field_value(obs: Observation, name: str) -> str | None:
    for k, v in obs.headers:
        if k.lower() == name.lower():
            return v.split()[-1] if v.split() else v
    try:
        doc = json.loads(obs.body)
    except (ValueError, TypeError):
        return None
    todo = [doc]
    while todo:
        cur = todo.pop()
        if isinstance(cur, dict):
            for k, v in cur.items():
                if str(k).lower() == name.lower() and isinstance(v, (str, int)):
                    return str(v)
                todo.append(v)
        elif isinstance(cur, list):
            todo.extend(cur)
    return None


def _rebind(req: Request, subst: Mapping[str, str]) -> Request:
    if not subst:
        return req

    def sub(text: str) -> str:
        for old, new in subst.items():
            text = text.replace(old, new)
        return text

    return Request(req.method, sub(req.path), tuple((k, sub(v)) for k, v in req.headers), sub(req.body), req.scheme)


def run(
    plan: TestPlan,
    sut_url: str,
    timeouts: Timeouts | None = None,
    setup: Setup | None = None,
    mock_port: int = 0,
) -> TestResult:
    """Execute ``plan``; the result's verdict follows the plan's branch mapping."""
    timeouts = timeouts or Timeouts()
    result = TestResult(plan.mutant_id, plan.name, plan.operator, INC)
    t0 = time.monotonic()

    def note(kind: str, **data: Any) -> None:
        result.trace.append({"t": round(time.monotonic() - t0, 4), "kind": kind, **data})

    try:
        mock = MockServer(plan.rules, mock_port)
    except OSError as exc:
        result.reason = f"{ENVIRONMENT}: mock server: {exc}"
        return result

    subst: dict[str, str] = {}
    mutation_seen = False
    accepted = False
    verdict: str | None = None
    with mock:
        if setup is not None:
            try:
                setup(mock.url)
            except HarnessError as exc:
                result.reason = f"{ENVIRONMENT}: {exc}"
                return result
        node_id: str | None = plan.root
        pending: Observation | None = None
        judged = False  # the reaction to the mutated event has been seen
        sends = 0
        while node_id is not None:
            node = plan.nodes[node_id]
            mutation_seen = mutation_seen or node.mutation
            if node.kind == "verdict":
                verdict = node.verdict
                break
            if node.kind == "delay":
                note("delay", seconds=node.delay)
                time.sleep(node.delay)
                node_id = node.next
                continue
            if node.kind == "send":
                assert node.request is not None
                req = _rebind(node.request, subst)
                nxt = plan.nodes.get(node.next) if node.next else None
                wait = timeouts.quiescence + (nxt.wait if nxt is not None and nxt.kind == "expect" else 0.0)
                observations = []
                for _ in range(max(1, node.repeat)):
                    observations.append(send(sut_url, req, wait))
                note("send", method=req.method, path=req.path, repeat=node.repeat)
                if sends == 0 and observations[0].kind == "transport" and observations[0].error.startswith("refused"):
                    result.reason = f"{ENVIRONMENT}: service unreachable ({observations[0].error})"
                    verdict = INC
                    break
                sends += 1
                if nxt is not None and nxt.kind == "expect" and len(observations) > 1:
                    if node.repeat_check == "last":
                        obs = observations[-1]
                    else:
                        ranks = [_outcome_rank(nxt, o) for o in observations]
                        obs = observations[ranks.index(max(ranks))]
                else:
                    obs = observations[-1]
                pending = obs
                node_id = node.next
                continue
            # expect
            obs = pending if pending is not None else Observation("silence")
            pending = None
            note("observe", observation=obs.to_json())
            if obs.kind == "silence":
                if node.silence is not None:
                    verdict = node.silence
                    result.reason = "no reaction within the quiescence timeout"
                    break
                if node.silence_next is not None:
                    node_id = node.silence_next
                    continue
                verdict = INC
                result.reason = "unexpected silence"
                break
            if mutation_seen and not judged:
                judged = True
                accepted = obs.status is not None and 200 <= obs.status < 300
            b = _classify(node, obs)
            if b is None:
                verdict = INC
                result.reason = "observation outside the model"
                break
            for name, recorded in b.captures:
                value = _field_value(obs, name)
                if value is not None and value != recorded:
                    subst[recorded] = value
            if b.verdict is not None:
                verdict = b.verdict
                if verdict == INC and b.kind == "any":
                    result.reason = "reaction outside the expected behaviour"
                elif verdict == FAIL:
                    result.reason = "reaction leads to a fail state"
                break
            node_id = b.next
        else:
            verdict = INC
        result.mock_verification = verify_mocks(plan, mock.counts())
        result.unexpected_mock_calls = len(mock.unexpected())

    result.verdict = verdict or INC
    if result.verdict != FAIL and not result.mock_verification["ok"] and not result.reason.startswith(ENVIRONMENT):
        result.verdict = INC
        result.reason = MOCK_VIOLATED
    if result.verdict == PASS and not result.reason:
        result.reason = "expected secure reaction observed"
    if result.verdict == INC and accepted and _vulnerability_hint(plan):
        result.warnings.append(ACCEPTED_ANYWAY)
    return result


def _vulnerability_hint(plan: TestPlan) -> bool:
    """A rejecting operator hit a token-carrying step that is a request or a credential."""
    info = plan.hint
    return bool(info.get("rejects")) and bool(info.get("token")) and bool(info.get("input") or info.get("credential"))


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def summarize(results: Sequence[TestResult]) -> dict[str, Any]:
    summary = {PASS: 0, FAIL: 0, INC: 0}
    per_op: dict[str, dict[str, int]] = {}
    for r in results:
        summary[r.verdict] = summary.get(r.verdict, 0) + 1
        row = per_op.setdefault(r.operator, {PASS: 0, FAIL: 0, INC: 0, "warnings": 0})
        row[r.verdict] += 1
        row["warnings"] += bool(r.warnings)
    return {"summary": summary, "perOperator": dict(sorted(per_op.items()))}


def run_suite(
    plans: Sequence[TestPlan],
    sut_url: str,
    timeouts: Timeouts | None = None,
    setup: Setup | None = None,
    mock_port: int = 0,
) -> tuple[list[TestResult], dict[str, Any]]:
    """Run plans one after the other (mutants share the service's state)."""
    results = [run(p, sut_url, timeouts, setup, mock_port) for p in plans]
    return results, summarize(results)


def exit_code(results: Sequence[TestResult]) -> int:
    if any(r.reason.startswith(ENVIRONMENT) for r in results):
        return 2
    if any(r.verdict == FAIL for r in results):
        return 1
    return 0


def junit_xml(results: Sequence[TestResult], suite: str = "restmut") -> str:
    root = ET.Element("testsuite", name=suite, tests=str(len(results)),
                      failures=str(sum(r.verdict == FAIL for r in results)),
                      skipped=str(sum(r.verdict == INC for r in results)))
    for r in results:
        case = ET.SubElement(root, "testcase", classname=r.operator or suite, name=r.name)
        if r.verdict == FAIL:
            ET.SubElement(case, "failure", message=r.reason or "fail")
        elif r.verdict == INC:
            ET.SubElement(case, "skipped", message=r.reason or "inconclusive")
        if r.warnings:
            ET.SubElement(case, "system-out").text = "; ".join(r.warnings)
    return ET.tostring(root, encoding="unicode")
