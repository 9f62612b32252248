"""Turn completed mutants into executable test plans.

Mock-labelled steps are removed from the driver's view of the test case and
compiled into request/response rules served by an embedded mock component.
What is left is a tree of plan nodes: *send* a request, *delay*, *expect* an
observation (branches mapped to verdicts or to the next node) and *verdict*.
"""

from __future__ import annotations

import random
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .iots import (
    DELAY,
    INC,
    MOCK,
    MUTATION,
    TOKEN,
    TOKEN_CREATION,
    WILDCARD,
    Event,
    Guard,
    TestCase,
    TestStep,
    event_sort_key,
    is_bare_wildcard,
    validate,
)

PLAN_SCHEMA = "plan/1"
NUMERIC_HINTS = ("id", "acc", "num", "count", "age", "amount", "qty", "quantity", "page", "size", "limit")


class ConcretizationError(ValueError):
    """A structural field of a mutant cannot be made concrete."""


# ---------------------------------------------------------------------------
# plan data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Request:
    method: str
    path: str
    headers: tuple[tuple[str, str], ...] = ()
    body: str = ""
    scheme: str | None = None

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"method": self.method, "path": self.path, "headers": [list(h) for h in self.headers], "body": self.body}
        if self.scheme:
            doc["scheme"] = self.scheme
        return doc

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "Request":
        return cls(doc["method"], doc["path"], tuple(tuple(h) for h in doc.get("headers", ())), doc.get("body", ""), doc.get("scheme"))


@dataclass(frozen=True)
class Response:
    status: int
    headers: tuple[tuple[str, str], ...] = ()
    body: str = ""

    def to_json(self) -> dict[str, Any]:
        return {"status": self.status, "headers": [list(h) for h in self.headers], "body": self.body}

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "Response":
        return cls(int(doc["status"]), tuple(tuple(h) for h in doc.get("headers", ())), doc.get("body", ""))


@dataclass(frozen=True)
class MockRule:
    """``request(...)...respond(...)`` with an exact expected call count."""

    method: str
    path: str
    headers: tuple[tuple[str, str], ...]
    response: Response | None
    times: int = 1
    delay: float = 0.0
    shutdown: bool = False
    exempt: bool = False  # scheduled after a shutdown: never reached, not verified

    def matches(self, method: str, path: str, headers: Iterable[tuple[str, str]]) -> bool:
        if method.upper() != self.method.upper() or path != self.path:
            return False
        have = {(k.lower(), v) for k, v in headers}
        return all((k.lower(), v) in have for k, v in self.headers)

    @property
    def matcher(self) -> tuple:
        return (self.method.upper(), self.path, tuple(sorted((k.lower(), v) for k, v in self.headers)))

    def to_json(self) -> dict[str, Any]:
        return {
            "request": {"method": self.method, "path": self.path, "headers": [list(h) for h in self.headers]},
            "response": self.response.to_json() if self.response else None,
            "times": self.times,
            "delay": self.delay,
            "shutdown": self.shutdown,
            "exempt": self.exempt,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "MockRule":
        req = doc["request"]
        resp = doc.get("response")
        return cls(
            req["method"], req["path"], tuple(tuple(h) for h in req.get("headers", ())),
            Response.from_json(resp) if resp else None,
            int(doc.get("times", 1)), float(doc.get("delay", 0.0)),
            bool(doc.get("shutdown", False)), bool(doc.get("exempt", False)),
        )


@dataclass(frozen=True)
class Branch:
    """One way an observation can be classified at an expect node.

    ``kind`` is ``concrete`` (recorded status must match), ``guarded`` (the
    guard decides) or ``any`` (unconstrained wildcard).  Exactly one of
    ``verdict`` / ``next`` is set.
    """

    kind: str
    verdict: str | None = None
    next: str | None = None
    status: int | None = None
    guard: Guard | None = None
    captures: tuple[tuple[str, str], ...] = ()  # (field name, recorded value)

    def matches(self, status: int | None, body: str, transport_error: bool) -> bool:
        if self.kind == "any":
            return True
        if self.kind == "concrete":
            if transport_error or status is None:
                return False
            if self.status is not None and status != self.status:
                return False
        if self.guard is not None:
            return self.guard.matches(status, body, transport_error)
        return True

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"kind": self.kind, "verdict": self.verdict, "next": self.next}
        if self.status is not None:
            doc["status"] = self.status
        if self.guard is not None:
            doc["guard"] = self.guard.to_json()
        if self.captures:
            doc["captures"] = [list(c) for c in self.captures]
        return doc

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "Branch":
        return cls(
            doc["kind"], doc.get("verdict"), doc.get("next"), doc.get("status"),
            Guard.from_json(doc["guard"]) if "guard" in doc else None,
            tuple(tuple(c) for c in doc.get("captures", ())),
        )


BRANCH_ORDER = {"concrete": 0, "guarded": 1, "any": 2}


@dataclass(frozen=True)
class PlanNode:
    id: str
    kind: str  # send | delay | expect | verdict
    request: Request | None = None
    repeat: int = 1
    repeat_check: str = "all"
    delay: float = 0.0
    next: str | None = None
    branches: tuple[Branch, ...] = ()
    silence: str | None = None  # verdict on silence, or None
    silence_next: str | None = None
    verdict: str | None = None
    mutation: bool = False
    wait: float = 0.0  # extra response time owed to mock delays

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"id": self.id, "kind": self.kind}
        if self.kind == "send":
            doc.update(request=self.request.to_json() if self.request else None, repeat=self.repeat,
                       repeatCheck=self.repeat_check, next=self.next)
        elif self.kind == "delay":
            doc.update(delay=self.delay, next=self.next)
        elif self.kind == "expect":
            doc.update(branches=[b.to_json() for b in self.branches], silence=self.silence,
                       silenceNext=self.silence_next, wait=self.wait)
        else:
            doc["verdict"] = self.verdict
        if self.mutation:
            doc["mutation"] = True
        return doc

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "PlanNode":
        req = doc.get("request")
        return cls(
            id=doc["id"], kind=doc["kind"],
            request=Request.from_json(req) if req else None,
            repeat=int(doc.get("repeat", 1)), repeat_check=doc.get("repeatCheck", "all"),
            delay=float(doc.get("delay", 0.0)), next=doc.get("next"),
            branches=tuple(Branch.from_json(b) for b in doc.get("branches", ())),
            silence=doc.get("silence"), silence_next=doc.get("silenceNext"),
            verdict=doc.get("verdict"), mutation=bool(doc.get("mutation", False)),
            wait=float(doc.get("wait", 0.0)),
        )


@dataclass
class TestPlan:
    """Executable form of one mutant."""

    __test__ = False

    mutant_id: str
    name: str
    root: str
    nodes: dict[str, PlanNode]
    rules: list[MockRule] = field(default_factory=list)
    bindings: dict[str, str] = field(default_factory=dict)
    seed: int = 0
    operator: str = ""
    meta: dict[str, Any] = field(default_factory=dict)
    hint: dict[str, bool] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "schema": PLAN_SCHEMA,
            "mutant": self.mutant_id,
            "name": self.name,
            "operator": self.operator,
            "seed": self.seed,
            "root": self.root,
            "nodes": [self.nodes[k].to_json() for k in sorted(self.nodes)],
            "rules": [r.to_json() for r in self.rules],
            "bindings": dict(sorted(self.bindings.items())),
            "meta": self.meta,
            "hint": self.hint,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "TestPlan":
        nodes = {n["id"]: PlanNode.from_json(n) for n in doc["nodes"]}
        return cls(doc["mutant"], doc.get("name", doc["mutant"]), doc["root"], nodes,
                   [MockRule.from_json(r) for r in doc.get("rules", ())],
                   dict(doc.get("bindings", {})), int(doc.get("seed", 0)),
                   doc.get("operator", ""), dict(doc.get("meta", {})), dict(doc.get("hint", {})))

    # queries -----------------------------------------------------------
    def sends(self) -> list[PlanNode]:
        return [n for n in self.walk() if n.kind == "send"]

    def expects(self) -> list[PlanNode]:
        return [n for n in self.walk() if n.kind == "expect"]

    def walk(self) -> list[PlanNode]:
        """Nodes in depth-first order from the root."""
        out, todo, seen = [], [self.root], set()
        while todo:
            nid = todo.pop()
            if nid is None or nid in seen:
                continue
            seen.add(nid)
            node = self.nodes[nid]
            out.append(node)
            succ = [node.next, node.silence_next] + [b.next for b in node.branches]
            todo.extend(reversed([s for s in succ if s]))
        return out

    def pass_matchers(self) -> list[Branch]:
        return [b for n in self.expects() for b in n.branches if b.verdict == "pass"]


# ---------------------------------------------------------------------------
# value resolution
# ---------------------------------------------------------------------------

def _numeric_name(name: str) -> bool:
    n = name.lower()
    return any(n == h or n.endswith(h) or n.endswith("_" + h) for h in NUMERIC_HINTS)


class Resolver:
    """Resolves ``*`` parameter values: recorded bindings first, else seeded random values."""

    def __init__(self, bindings: Mapping[str, str] | None, rng: random.Random):
        self.recorded = {k.lower(): str(v) for k, v in (bindings or {}).items()}
        self.rng = rng
        self.used: dict[str, str] = {}

    def value(self, name: str, current: Any) -> str:
        if current != WILDCARD:
            return str(current)
        key = name.lower()
        if key in self.used:
            return self.used[key]
        if key in self.recorded:
            v = self.recorded[key]
        elif _numeric_name(key):
            v = str(self.rng.randrange(10**6))
        else:
            v = "".join(self.rng.choice(string.ascii_letters + string.digits) for _ in range(8))
        self.used[key] = v
        return v

    def path(self, path: str) -> str:
        if "?" not in path:
            return path
        base, _, query = path.partition("?")
        parts = []
        for item in query.split("&"):
            k, eq, v = item.partition("=")
            parts.append(f"{k}={self.value(k, v)}" if eq else item)
        return base + "?" + "&".join(parts)


def _structural(event: Event, key: str) -> str:
    v = event.params.get(key)
    if v is None or v == WILDCARD or v == "":
        raise ConcretizationError(f"{event}: {key} must be concrete, got {v!r}")
    return str(v)


def _concrete_headers(event: Event, res: Resolver) -> list[tuple[str, str]]:
    headers = [(str(k), res.value(str(k), v)) for k, v in event.headers]
    cookies = event.cookies
    if cookies:
        jar = "; ".join(f"{k}={res.value(k, v)}" for k, v in sorted(cookies.items()))
        headers.append(("Cookie", jar))
    return headers


def _concrete_body(event: Event, res: Resolver) -> str:
    if "oversize" in event.params:
        return "A" * int(event.params["oversize"])
    body = event.params.get("body", "")
    if body == WILDCARD:
        return res.value("body", body)
    return str(body or "")


def concrete_request(event: Event, res: Resolver) -> Request:
    method = _structural(event, "method").upper()
    path = res.path(_structural(event, "path"))
    scheme = event.params.get("scheme")
    return Request(method, path, tuple(_concrete_headers(event, res)), _concrete_body(event, res),
                   str(scheme) if scheme else None)


def concrete_response(event: Event, res: Resolver) -> Response:
    status = event.params.get("status")
    if status is None or status == WILDCARD:
        status = 200
    return Response(int(status), tuple(_concrete_headers(event, res)), _concrete_body(event, res))


# ---------------------------------------------------------------------------
# driver view
# ---------------------------------------------------------------------------

def driver_steps(tc: TestCase, q: str) -> list[TestStep]:
    """Non-mock steps available at ``q`` once mock steps are contracted.

    The steps reached through mock steps are considered first (they describe
    what the service under test does after talking to its dependees); a
    shallower step whose event duplicates a deeper one is dropped.
    """
    deeper: list[TestStep] = []
    own: list[TestStep] = []
    for s in tc.children(q):
        if MOCK in s.labels and not tc.is_verdict(s.target):
            deeper.extend(driver_steps(tc, s.target))
        elif MOCK not in s.labels:
            own.append(s)
    seen: set = set()
    out: list[TestStep] = []
    for s in deeper + own:
        k = ("theta",) if s.is_theta else ("ev", s.event)
        if k in seen:
            continue
        seen.add(k)
        out.append(s)
    return out


def contracted_mocks(tc: TestCase, q: str) -> list[TestStep]:
    """Mock steps folded into the driver node at ``q``."""
    out = []
    for s in tc.children(q):
        if MOCK in s.labels and not tc.is_verdict(s.target):
            out.append(s)
            out.extend(contracted_mocks(tc, s.target))
    return out


def _branch_kind(ev: Event) -> str:
    if is_bare_wildcard(ev):
        return "any"
    if ev.is_wildcard:
        return "guarded"
    return "concrete"


# ---------------------------------------------------------------------------
# concretize
# ---------------------------------------------------------------------------

@dataclass
class PlanOptions:
    session_delay: float = 60.0
    token_names: Sequence[str] = ("authorization", "token", "access_token", "sessionid")


def _rules(tc: TestCase, res: Resolver, opts: PlanOptions) -> list[MockRule]:
    """Compile mock request/response pairs into rules, counting occurrences."""
    found: list[tuple[MockRule, int]] = []

    def multiplier(step: TestStep) -> tuple[int, bool]:
        mult, exempt, q = 1, False, step.source
        while True:
            inc = tc.incoming.get(q, ())
            if not inc:
                return mult, exempt
            parent = inc[0]
            if parent.event is not None:
                if MOCK in parent.labels and parent.event.params.get("shutdown"):
                    exempt = True
                if parent.is_input and MOCK not in parent.labels:
                    mult *= int(parent.event.params.get("repeat", 1) or 1)
                    # only the nearest request governs the dependee calls
                    return mult, exempt
            q = parent.source

    for s in tc.steps:
        if MOCK not in s.labels or s.event is None or not s.event.is_request:
            continue
        ev = s.event
        delay = 0.0
        reply: TestStep | None = None
        for c in tc.children(s.target):
            if MOCK not in c.labels:
                continue
            if c.is_theta and DELAY in c.labels:
                delay = opts.session_delay
                reply = next((r for r in tc.children(c.target) if MOCK in r.labels and r.event is not None), None)
            elif c.event is not None and c.event.is_response:
                reply = c
        method = _structural(ev, "method").upper()
        path = res.path(_structural(ev, "path"))
        headers = tuple((str(k), res.value(str(k), v)) for k, v in ev.headers)
        shutdown = bool(reply and reply.event and reply.event.params.get("shutdown"))
        response = concrete_response(reply.event, res) if reply and reply.event and not shutdown else None
        if reply is None:
            response = Response(200)
        mult, exempt = multiplier(s)
        found.append((MockRule(method, path, headers, response, 1, delay, shutdown, exempt), mult))

    counts: Counter = Counter()
    order: list[MockRule] = []
    for rule, mult in found:
        if rule not in counts:
            order.append(rule)
        counts[rule] += mult
    return [MockRule(r.method, r.path, r.headers, r.response, counts[r], r.delay, r.shutdown, r.exempt) for r in order]


def concretize(
    mutant: TestCase,
    bindings: Mapping[str, str] | None = None,
    seed: int = 0,
    mutant_id: str | None = None,
    options: PlanOptions | None = None,
) -> TestPlan:
    """Build the executable plan of a completed mutant."""
    opts = options or PlanOptions()
    problems = validate(mutant)
    if problems:
        raise ConcretizationError(f"{mutant.name}: invalid test case: " + "; ".join(map(str, problems)))
    res = Resolver(bindings, random.Random(f"{seed}:{mutant.name}"))
    rules = _rules(mutant, res, opts)
    nodes: dict[str, PlanNode] = {}
    token_names = {t.lower() for t in opts.token_names}

    def wait_of(q: str) -> float:
        return sum(opts.session_delay for s in contracted_mocks(mutant, q) if s.is_theta and DELAY in s.labels)

    def build(q: str) -> str:
        if q in nodes:
            return q
        if mutant.is_verdict(q):
            nodes[q] = PlanNode(q, "verdict", verdict=mutant.verdict_of[q])
            return q
        steps = driver_steps(mutant, q)
        mutation = any(MUTATION in s.labels for s in contracted_mocks(mutant, q))
        inputs = [s for s in steps if s.is_input]
        delays = [s for s in steps if s.is_theta and DELAY in s.labels]
        if inputs:
            s = inputs[0]
            assert s.event is not None
            req = concrete_request(s.event, res)
            nodes[q] = PlanNode(
                q, "send", request=req,
                repeat=int(s.event.params.get("repeat", 1) or 1),
                repeat_check=str(s.event.params.get("repeat_check", "all")),
                next=s.target, mutation=mutation or MUTATION in s.labels,
            )
            build(s.target)
            return q
        if delays and not any(s.is_output for s in steps if not is_bare_wildcard(s.event)):
            s = delays[0]
            nodes[q] = PlanNode(q, "delay", delay=opts.session_delay, next=s.target,
                                mutation=mutation or MUTATION in s.labels)
            build(s.target)
            return q
        branches: list[tuple[int, tuple, Branch]] = []
        silence = silence_next = None
        for s in steps:
            if s.is_theta:
                if mutant.is_verdict(s.target):
                    silence = mutant.verdict_of[s.target]
                else:
                    silence_next = build(s.target)
                continue
            if s.is_input:
                continue
            ev = s.event
            assert ev is not None
            kind = _branch_kind(ev)
            status = ev.status if kind == "concrete" and ev.status not in (None, WILDCARD) else None
            captures: tuple[tuple[str, str], ...] = ()
            if TOKEN_CREATION in s.labels:
                from .ingest import named_fields

                captures = tuple((k, str(v).split()[-1]) for k, v in named_fields(ev)
                                 if k.lower() in token_names and str(v).split() and v != WILDCARD)
            if mutant.is_verdict(s.target):
                b = Branch(kind, verdict=mutant.verdict_of[s.target], status=status, guard=ev.guard, captures=captures)
            else:
                b = Branch(kind, next=build(s.target), status=status, guard=ev.guard, captures=captures)
            if MUTATION in s.labels:
                mutation = True
            branches.append((BRANCH_ORDER[kind], event_sort_key(ev), b))
        if not any(b.kind == "any" for _, _, b in branches):
            # compl guarantees this; keep the mapping total for hand-made inputs
            branches.append((BRANCH_ORDER["any"], (), Branch("any", verdict=INC)))
        branches.sort(key=lambda t: (t[0], t[1]))
        nodes[q] = PlanNode(q, "expect", branches=tuple(b for _, _, b in branches), silence=silence,
                            silence_next=silence_next, mutation=mutation, wait=wait_of(q))
        return q

    root = build(mutant.initial)
    meta = dict(mutant.meta)
    hint: dict[str, bool] = {}
    marked = [s for s in mutant.steps if MUTATION in s.labels]
    if marked:
        from .operators import catalog

        ops = {op.slug: op for op in catalog()}
        op = ops.get(str(meta.get("operator", "")))
        hint = {
            "rejects": bool(op and op.rejects),
            "credential": bool(op and op.credential),
            "token": TOKEN in marked[0].labels,
            "input": marked[0].is_input,
        }
    return TestPlan(
        mutant_id=mutant_id or mutant.name,
        name=mutant.name,
        root=root,
        nodes=nodes,
        rules=rules,
        bindings=dict(res.used),
        seed=seed,
        operator=str(meta.get("operator", "")),
        meta=meta,
        hint=hint,
    )


def check_total(plan: TestPlan) -> list[str]:
    """Expect nodes whose mapping from observations to outcomes is not total."""
    bad = []
    for n in plan.expects():
        if not any(b.kind == "any" for b in n.branches):
            bad.append(f"{n.id}: no catch-all branch")
        if n.silence is None and n.silence_next is None:
            bad.append(f"{n.id}: silence unmapped")
    return bad

