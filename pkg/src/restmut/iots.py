"""IOTS test-case model: events, test steps, test cases, validation and JSON I/O.

A test case is a deterministic, tree-shaped input/output transition system whose
leaves are the verdict states ``pass``, ``fail`` and ``inc``.  Input events
(``?``) are stimuli sent to the service under test, output events (``!``) are
observations.  A step whose event is ``None`` is the quiescence step (no
reaction observed within a timeout).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Iterable, Iterator, Mapping, Sequence

import jsonschema

SCHEMA_ID = "iots/1"

INPUT = "?"
OUTPUT = "!"
WILDCARD = "*"

PASS = "pass"
FAIL = "fail"
INC = "inc"
VERDICTS = (PASS, FAIL, INC)
# reporting order only: a run reaching fail dominates
VERDICT_RANK = {PASS: 0, INC: 1, FAIL: 2}

# well-known labels
MOCK = "mock"
LOGIN = "login"
TOKEN = "token"
TOKEN_CREATION = "token creation"
CRASH = "crash"
MUTATION = "mutation"
DELAY = "delay"


class IOTSError(ValueError):
    """Raised when a test-case document cannot be loaded."""


def worst_verdict(verdicts: Iterable[str]) -> str:
    return max(verdicts, key=VERDICT_RANK.__getitem__, default=PASS)


# ---------------------------------------------------------------------------
# Guards: predicates attached to expected output events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    """One observation predicate.

    ``kind`` is one of ``status_in``, ``body_contains``, ``body_lacks``,
    ``no_crash`` or ``transport_error``.  Substring tests ignore case.
    """

    kind: str
    statuses: tuple[int, ...] = ()
    text: str = ""

    KINDS = ("status_in", "body_contains", "body_lacks", "no_crash", "transport_error")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown guard atom {self.kind!r}")

    def holds(self, status: int | None, body: str, transport_error: bool) -> bool:
        if self.kind == "status_in":
            return status is not None and status in self.statuses
        if self.kind == "body_contains":
            return self.text.lower() in body.lower()
        if self.kind == "body_lacks":
            return self.text.lower() not in body.lower()
        if self.kind == "no_crash":
            return not transport_error and status != 500
        return transport_error

    def to_json(self) -> dict[str, Any]:
        if self.kind == "status_in":
            return {"status_in": list(self.statuses)}
        if self.kind in ("body_contains", "body_lacks"):
            return {self.kind: self.text}
        return {self.kind: True}

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "Atom":
        (kind, value), = doc.items()
        if kind == "status_in":
            return cls(kind, statuses=tuple(int(s) for s in value))
        if kind in ("body_contains", "body_lacks"):
            return cls(kind, text=str(value))
        return cls(kind)


def status_in(*statuses: int) -> Atom:
    return Atom("status_in", statuses=tuple(statuses))


def body_contains(text: str) -> Atom:
    return Atom("body_contains", text=text)


def body_lacks(text: str) -> Atom:
    return Atom("body_lacks", text=text)


NO_CRASH = Atom("no_crash")
TRANSPORT_ERROR = Atom("transport_error")


@dataclass(frozen=True)
class Guard:
    """Conjunction of ``all_of`` atoms and (when non-empty) a disjunction of ``any_of``."""

    all_of: tuple[Atom, ...] = ()
    any_of: tuple[Atom, ...] = ()

    def matches(self, status: int | None, body: str = "", transport_error: bool = False) -> bool:
        if not all(a.holds(status, body, transport_error) for a in self.all_of):
            return False
        return not self.any_of or any(a.holds(status, body, transport_error) for a in self.any_of)

    def to_json(self) -> dict[str, Any]:
        return {"all": [a.to_json() for a in self.all_of], "any": [a.to_json() for a in self.any_of]}

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "Guard":
        return cls(
            all_of=tuple(Atom.from_json(a) for a in doc.get("all", ())),
            any_of=tuple(Atom.from_json(a) for a in doc.get("any", ())),
        )


# ---------------------------------------------------------------------------
# Events and steps
# ---------------------------------------------------------------------------

def _freeze(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, dict):
        return {k: _freeze(v) for k, v in value.items()}
    return value


def _thaw(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    if isinstance(value, dict):
        return {k: _thaw(v) for k, v in value.items()}
    return value


@dataclass(frozen=True, eq=False)
class Event:
    """An HTTP-level communication ``e(alpha)``.

    ``params`` holds the assignment alpha.  Reserved keys: ``from``, ``to``,
    ``method``, ``path``, ``headers`` (sequence of ``(name, value)`` pairs),
    ``body``, ``status`` and ``cookies``.  Any value may be ``"*"``.
    """

    direction: str
    label: str
    params: Mapping[str, Any] = field(default_factory=dict)
    guard: Guard | None = None

    def __post_init__(self) -> None:
        if self.direction not in (INPUT, OUTPUT):
            raise ValueError(f"direction must be '?' or '!', got {self.direction!r}")
        object.__setattr__(self, "params", _freeze(dict(self.params)))

    # accessors ---------------------------------------------------------
    @property
    def is_input(self) -> bool:
        return self.direction == INPUT

    @property
    def is_output(self) -> bool:
        return self.direction == OUTPUT

    @property
    def source(self) -> str | None:
        return self.params.get("from")

    @property
    def dest(self) -> str | None:
        return self.params.get("to")

    @property
    def method(self) -> str | None:
        return self.params.get("method")

    @property
    def path(self) -> str | None:
        return self.params.get("path")

    @property
    def status(self) -> int | str | None:
        return self.params.get("status")

    @property
    def body(self) -> str:
        return self.params.get("body", "") or ""

    @property
    def headers(self) -> tuple[tuple[str, str], ...]:
        return tuple(tuple(h) for h in self.params.get("headers", ()))

    @property
    def cookies(self) -> Mapping[str, str]:
        return self.params.get("cookies", {}) or {}

    def header(self, name: str) -> str | None:
        name = name.lower()
        for k, v in self.headers:
            if k.lower() == name:
                return v
        return None

    @property
    def is_request(self) -> bool:
        return "method" in self.params and "path" in self.params and "status" not in self.params

    @property
    def is_response(self) -> bool:
        return "status" in self.params

    @property
    def is_wildcard(self) -> bool:
        return self.label == WILDCARD

    def with_params(self, **changes: Any) -> "Event":
        params = dict(self.params)
        for k, v in changes.items():
            if v is None:
                params.pop(k, None)
            else:
                params[k] = v
        return replace(self, params=params)

    # identity ------------------------------------------------------------
    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"dir": self.direction, "label": self.label, "params": _thaw(self.params)}
        if self.guard is not None:
            doc["guard"] = self.guard.to_json()
        return doc

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "Event":
        guard = doc.get("guard")
        return cls(
            direction=doc["dir"],
            label=doc["label"],
            params=doc.get("params", {}),
            guard=Guard.from_json(guard) if guard is not None else None,
        )

    @cached_property
    def canonical(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    @cached_property
    def key(self) -> tuple[str, ...]:
        """Canonical ordering key: (direction, label, method, path, status)."""
        p = self.params
        return (
            self.direction,
            self.label,
            str(p.get("method", "")),
            str(p.get("path", "")),
            str(p.get("status", "")),
        )

    @cached_property
    def sort_key(self) -> tuple[str, ...]:
        return self.key + (self.canonical,)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Event) and self.canonical == other.canonical

    def __hash__(self) -> int:
        return hash(self.canonical)

    def __str__(self) -> str:
        return f"{self.direction}{self.label}"

    __repr__ = __str__


# quiescence marker
THETA = None
THETA_KEY = ("~theta",)


def event_key(event: Event | None) -> tuple[str, ...]:
    return THETA_KEY if event is None else event.key


def event_sort_key(event: Event | None) -> tuple[str, ...]:
    return THETA_KEY if event is None else event.sort_key


def wildcard_output() -> Event:
    """The ``!*`` event added by completion: any output, from anyone."""
    return Event(OUTPUT, WILDCARD, {"from": WILDCARD, "to": WILDCARD, "status": WILDCARD})


def is_bare_wildcard(event: Event | None) -> bool:
    return event is not None and event.is_output and event.is_wildcard and event.guard is None


@dataclass(frozen=True)
class TestStep:
    """A transition ``source --event, labels--> target``."""

    __test__ = False

    source: str
    event: Event | None
    labels: frozenset[str]
    target: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", frozenset(self.labels))

    @property
    def is_theta(self) -> bool:
        return self.event is None

    @property
    def is_input(self) -> bool:
        return self.event is not None and self.event.is_input

    @property
    def is_output(self) -> bool:
        return self.event is not None and self.event.is_output

    @cached_property
    def sort_key(self) -> tuple:
        return (self.source, event_sort_key(self.event), self.target, tuple(sorted(self.labels)))

    def relabel(self, *add: str) -> "TestStep":
        return replace(self, labels=self.labels | set(add))

    def __str__(self) -> str:
        ev = "θ" if self.event is None else str(self.event)
        return f"{self.source} --{ev} {sorted(self.labels)}--> {self.target}"


# ---------------------------------------------------------------------------
# Test cases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestCase:
    """A deterministic IOTS test case.

    Steps are kept in canonical order; step ids (``t0``, ``t1`` ...) are
    positions in that order.  ``verdicts`` maps each verdict to its state id.
    """

    __test__ = False

    name: str
    sut_id: str
    initial: str
    states: frozenset[str]
    steps: tuple[TestStep, ...]
    verdicts: Mapping[str, str] = field(default_factory=lambda: {v: v for v in VERDICTS})
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        verdicts = {v: self.verdicts.get(v, v) for v in VERDICTS}
        object.__setattr__(self, "verdicts", verdicts)
        object.__setattr__(self, "states", frozenset(self.states) | set(verdicts.values()) | {self.initial})
        object.__setattr__(self, "steps", tuple(sorted(self.steps, key=lambda s: s.sort_key)))
        object.__setattr__(self, "meta", dict(self.meta))

    @classmethod
    def build(
        cls,
        name: str,
        sut_id: str,
        steps: Iterable[TestStep],
        initial: str = "q0",
        states: Iterable[str] = (),
        verdicts: Mapping[str, str] | None = None,
        meta: Mapping[str, Any] | None = None,
    ) -> "TestCase":
        steps = tuple(steps)
        all_states = set(states) | {initial}
        for s in steps:
            all_states.update((s.source, s.target))
        return cls(name, sut_id, initial, frozenset(all_states), steps,
                   verdicts or {v: v for v in VERDICTS}, meta or {})

    # indexes -------------------------------------------------------------
    @cached_property
    def verdict_states(self) -> frozenset[str]:
        return frozenset(self.verdicts.values())

    @cached_property
    def verdict_of(self) -> dict[str, str]:
        return {q: v for v, q in self.verdicts.items()}

    @cached_property
    def outgoing(self) -> dict[str, tuple[TestStep, ...]]:
        out: dict[str, list[TestStep]] = {q: [] for q in self.states}
        for s in self.steps:
            out.setdefault(s.source, []).append(s)
        return {q: tuple(v) for q, v in out.items()}

    @cached_property
    def incoming(self) -> dict[str, tuple[TestStep, ...]]:
        inc: dict[str, list[TestStep]] = {q: [] for q in self.states}
        for s in self.steps:
            inc.setdefault(s.target, []).append(s)
        return {q: tuple(v) for q, v in inc.items()}

    @cached_property
    def _ids(self) -> dict[TestStep, str]:
        return {s: f"t{i}" for i, s in enumerate(self.steps)}

    def step_id(self, step: TestStep) -> str:
        return self._ids[step]

    def step(self, step_id: str) -> TestStep:
        try:
            idx = int(step_id[1:])
            if not step_id.startswith("t") or idx < 0:
                raise ValueError
            return self.steps[idx]
        except (ValueError, IndexError):
            raise KeyError(f"unknown step id {step_id!r} in {self.name}") from None

    def is_verdict(self, q: str) -> bool:
        return q in self.verdict_states

    def children(self, q: str) -> tuple[TestStep, ...]:
        """Outgoing steps of ``q`` in deterministic depth-first order."""
        return tuple(sorted(self.outgoing.get(q, ()), key=lambda s: (event_sort_key(s.event), s.target)))

    def with_steps(self, steps: Iterable[TestStep], **changes: Any) -> "TestCase":
        steps = tuple(steps)
        states = set(self.verdict_states) | {self.initial}
        for s in steps:
            states.update((s.source, s.target))
        return replace(self, steps=steps, states=frozenset(states), **changes)

    def fresh_state(self, prefix: str = "m") -> Iterator[str]:
        """Yield state ids not already used in this test case."""
        n = 0
        while True:
            q = f"{prefix}{n}"
            n += 1
            if q not in self.states:
                yield q

    def __str__(self) -> str:
        return f"TestCase({self.name}, {len(self.steps)} steps)"


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    clause: str
    where: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.clause} at {self.where}: {self.detail}" if self.detail else f"{self.clause} at {self.where}"


# clause names, one per structural requirement
DETERMINISTIC = "deterministic"
ACYCLIC = "tree-shaped"
INPUT_RESTRICTED = "input restricted"
MOCK_RESTRICTED = "mock response restricted"
VERDICT_EVENT = "verdict step event"
VERDICT_TERMINAL = "verdict terminal"
EVENT_FORM = "event well-formed"
DANGLING = "dangling state"


def _event_problems(event: Event) -> list[str]:
    problems = []
    for k in ("from", "to"):
        if not event.params.get(k):
            problems.append(f"missing '{k}'")
    if event.is_wildcard:
        return problems
    if event.is_response:
        if "method" in event.params:
            problems.append("response carries 'method'")
    elif not event.is_request:
        problems.append("neither request (method+path) nor response (status)")
    return problems


def validate(tc: TestCase) -> list[Violation]:
    """Return every structural violation of ``tc``; empty means valid."""
    report: list[Violation] = []
    states = tc.states
    for s in tc.steps:
        for q in (s.source, s.target):
            if q not in states:
                report.append(Violation(DANGLING, str(s), f"state {q!r} undefined"))
        if s.event is not None:
            for p in _event_problems(s.event):
                report.append(Violation(EVENT_FORM, str(s), p))
        if tc.is_verdict(s.target) and s.is_input:
            report.append(Violation(VERDICT_EVENT, str(s), "step into a verdict state must be an output or θ"))

    for q in sorted(states):
        out = tc.outgoing.get(q, ())
        if tc.is_verdict(q):
            for s in out:
                if not (s.is_theta and s.target == q):
                    report.append(Violation(VERDICT_TERMINAL, q, f"verdict state has outgoing step {s}"))
            continue
        seen: set[Event | None] = set()
        for s in out:
            if s.event in seen:
                report.append(Violation(DETERMINISTIC, q, f"two steps with event {s.event or 'θ'}"))
            seen.add(s.event)
        inputs = [s for s in out if s.is_input]
        thetas = [s for s in out if s.is_theta]
        if len(inputs) > 1:
            report.append(Violation(INPUT_RESTRICTED, q, f"{len(inputs)} input events"))
        if inputs and thetas:
            report.append(Violation(INPUT_RESTRICTED, q, "input event together with θ"))
        mock_responses = [s for s in out if s.event is not None and s.event.is_response and MOCK in s.labels]
        if len(mock_responses) > 1:
            report.append(Violation(MOCK_RESTRICTED, q, f"{len(mock_responses)} mock responses"))
        incoming = [s for s in tc.incoming.get(q, ()) if not tc.is_verdict(s.source)]
        if len(incoming) > 1:
            report.append(Violation(ACYCLIC, q, f"{len(incoming)} incoming steps"))
    if tc.incoming.get(tc.initial) and not tc.is_verdict(tc.initial):
        report.append(Violation(ACYCLIC, tc.initial, "initial state has incoming steps"))

    # cycle detection among non-verdict states
    colour: dict[str, int] = {}
    for root in sorted(states):
        if root in colour or tc.is_verdict(root):
            continue
        stack = [(root, iter(tc.outgoing.get(root, ())))]
        colour[root] = 1
        while stack:
            q, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[q] = 2
                stack.pop()
                continue
            t = nxt.target
            if tc.is_verdict(t):
                continue
            if colour.get(t) == 1:
                report.append(Violation(ACYCLIC, q, f"cycle through {t}"))
            elif t not in colour:
                colour[t] = 1
                stack.append((t, iter(tc.outgoing.get(t, ()))))
    return report


def is_valid(tc: TestCase) -> bool:
    return not validate(tc)


def events_at(tc: TestCase, q: str) -> set[Event | None]:
    """Events (``None`` standing for θ) on the outgoing steps of ``q``."""
    if q not in tc.states:
        raise KeyError(f"unknown state {q!r}")
    return {s.event for s in tc.outgoing.get(q, ())}


def pass_sequences(tc: TestCase) -> list[tuple[TestStep, ...]]:
    """All step sequences from the initial state that end in ``pass``, depth first."""
    goal = tc.verdicts[PASS]
    found: list[tuple[TestStep, ...]] = []
    if tc.initial == goal:
        return found

    def walk(q: str, path: tuple[TestStep, ...], seen: frozenset[str]) -> None:
        for s in tc.children(q):
            if s.target == goal:
                found.append(path + (s,))
            elif not tc.is_verdict(s.target) and s.target not in seen:
                walk(s.target, path + (s,), seen | {s.target})

    walk(tc.initial, (), frozenset({tc.initial}))
    return found


def maximal_paths_end_in_verdict(tc: TestCase) -> bool:
    """True when every reachable state without outgoing steps is a verdict state."""
    seen = set()
    todo = [tc.initial]
    while todo:
        q = todo.pop()
        if q in seen:
            continue
        seen.add(q)
        out = [s for s in tc.outgoing.get(q, ()) if not (tc.is_verdict(q) and s.target == q)]
        if not out and not tc.is_verdict(q):
            return False
        todo.extend(s.target for s in out)
    return True


# ---------------------------------------------------------------------------
# JSON (de)serialization
# ---------------------------------------------------------------------------

_ATOM_SCHEMA = {
    "type": "object",
    "minProperties": 1,
    "maxProperties": 1,
    "properties": {
        "status_in": {"type": "array", "items": {"type": "integer"}},
        "body_contains": {"type": "string"},
        "body_lacks": {"type": "string"},
        "no_crash": {"const": True},
        "transport_error": {"const": True},
    },
    "additionalProperties": False,
}

DOCUMENT_SCHEMA = {
    "type": "object",
    "required": ["schema", "sutId", "initial", "states", "steps"],
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "name": {"type": "string"},
        "sutId": {"type": "string", "minLength": 1},
        "initial": {"type": "string"},
        "states": {"type": "array", "items": {"type": "string"}},
        "verdicts": {
            "type": "object",
            "properties": {v: {"type": "string"} for v in VERDICTS},
            "additionalProperties": False,
        },
        "meta": {"type": "object"},
        "steps": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "to", "event"],
                "properties": {
                    "from": {"type": "string"},
                    "to": {"type": "string"},
                    "labels": {"type": "array", "items": {"type": "string"}},
                    "event": {
                        "oneOf": [
                            {"type": "null"},
                            {
                                "type": "object",
                                "required": ["dir", "label"],
                                "properties": {
                                    "dir": {"enum": [INPUT, OUTPUT]},
                                    "label": {"type": "string"},
                                    "params": {
                                        "type": "object",
                                        "properties": {
                                            "headers": {
                                                "type": "array",
                                                "items": {
                                                    "type": "array",
                                                    "items": {"type": "string"},
                                                    "minItems": 2,
                                                    "maxItems": 2,
                                                },
                                            },
                                            "cookies": {"type": "object", "additionalProperties": {"type": "string"}},
                                            "status": {"type": ["integer", "string"]},
                                            "body": {"type": "string"},
                                        },
                                    },
                                    "guard": {
                                        "type": "object",
                                        "properties": {
                                            "all": {"type": "array", "items": _ATOM_SCHEMA},
                                            "any": {"type": "array", "items": _ATOM_SCHEMA},
                                        },
                                        "additionalProperties": False,
                                    },
                                },
                                "additionalProperties": False,
                            },
                        ]
                    },
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


def _step_doc(s: TestStep) -> dict[str, Any]:
    return {
        "from": s.source,
        "to": s.target,
        "event": None if s.event is None else s.event.to_json(),
        "labels": sorted(s.labels),
    }


def to_document(tc: TestCase) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "schema": SCHEMA_ID,
        "name": tc.name,
        "sutId": tc.sut_id,
        "initial": tc.initial,
        "states": sorted(tc.states),
        "verdicts": dict(tc.verdicts),
        "steps": [_step_doc(s) for s in tc.steps],
    }
    if tc.meta:
        doc["meta"] = dict(tc.meta)
    return doc


def dumps_canonical(doc: Any) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def store(tc: TestCase) -> bytes:
    """Serialize ``tc`` to canonical UTF-8 JSON."""
    return dumps_canonical(to_document(tc))


def _parse(data: bytes | str | Mapping[str, Any]) -> dict[str, Any]:
    if isinstance(data, Mapping):
        doc = dict(data)
    else:
        try:
            doc = json.loads(data)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise IOTSError(f"malformed JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, DOCUMENT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise IOTSError(f"schema violation: {exc.message}") from exc
    states = set(doc["states"])
    verdicts = {v: v for v in VERDICTS} | doc.get("verdicts", {})
    known = states | set(verdicts.values())
    if doc["initial"] not in known:
        raise IOTSError(f"schema violation: initial state {doc['initial']!r} undefined")
    for st in doc["steps"]:
        for k in ("from", "to"):
            if st[k] not in known:
                raise IOTSError(f"schema violation: step references undefined state {st[k]!r}")
    return doc


def _normalized_steps(doc: Mapping[str, Any]) -> list[dict[str, Any]]:
    verdict_states = set(({v: v for v in VERDICTS} | doc.get("verdicts", {})).values())
    # θ self-loops on verdict states are implicit
    return [
        st for st in doc["steps"]
        if not (st["event"] is None and st["from"] == st["to"] and st["from"] in verdict_states)
    ]


def load(data: bytes | str | Mapping[str, Any]) -> TestCase:
    """Parse a test-case document; raise :class:`IOTSError` on bad input."""
    doc = _parse(data)
    steps = [
        TestStep(
            st["from"],
            None if st["event"] is None else Event.from_json(st["event"]),
            frozenset(st.get("labels", ())),
            st["to"],
        )
        for st in _normalized_steps(doc)
    ]
    return TestCase(
        name=doc.get("name", ""),
        sut_id=doc["sutId"],
        initial=doc["initial"],
        states=frozenset(doc["states"]),
        steps=tuple(steps),
        verdicts=doc.get("verdicts", {}),
        meta=doc.get("meta", {}),
    )


def canonicalize(data: bytes | str | Mapping[str, Any]) -> bytes:
    """Canonical byte form of a schema-valid document, computed on the raw JSON tree."""
    doc = _parse(data)
    verdicts = {v: v for v in VERDICTS} | doc.get("verdicts", {})
    states = set(doc["states"]) | set(verdicts.values()) | {doc["initial"]}
    steps = []
    for st in _normalized_steps(doc):
        ev = st["event"]
        if ev is not None:
            ev = {"dir": ev["dir"], "label": ev["label"], "params": ev.get("params", {}),
                  **({"guard": {"all": ev["guard"].get("all", []), "any": ev["guard"].get("any", [])}}
                     if "guard" in ev else {})}
        steps.append({"from": st["from"], "to": st["to"], "event": ev,
                      "labels": sorted(set(st.get("labels", ())))})

    def key(st: dict[str, Any]) -> tuple:
        ev = st["event"]
        if ev is None:
            ek: tuple = THETA_KEY
        else:
            p = ev["params"]
            ek = (ev["dir"], ev["label"], str(p.get("method", "")), str(p.get("path", "")),
                  str(p.get("status", "")),
                  json.dumps(ev, sort_keys=True, ensure_ascii=False, separators=(",", ":")))
        return (st["from"], ek, st["to"], tuple(st["labels"]))

    out = {
        "schema": SCHEMA_ID,
        "name": doc.get("name", ""),
        "sutId": doc["sutId"],
        "initial": doc["initial"],
        "states": sorted(states),
        "verdicts": verdicts,
        "steps": sorted(steps, key=key),
    }
    if doc.get("meta"):
        out["meta"] = doc["meta"]
    return dumps_canonical(out)


def load_file(path: str) -> TestCase:
    with open(path, "rb") as fh:
        return load(fh.read())


def linear_test_case(
    name: str,
    sut_id: str,
    events: Sequence[tuple[Event, Iterable[str]]],
    verdict: str = PASS,
) -> TestCase:
    """Chain ``events`` into ``q0 -> q1 -> ... -> verdict``."""
    steps = []
    for i, (ev, labels) in enumerate(events):
        target = verdict if i == len(events) - 1 else f"q{i + 1}"
        steps.append(TestStep(f"q{i}", ev, frozenset(labels), target))
    return TestCase.build(name, sut_id, steps)
