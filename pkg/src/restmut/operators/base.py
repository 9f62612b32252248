"""Mutation-operator framework: (condition, change, expected) triples."""

from __future__ import annotations

import json
import random
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence
from urllib.parse import parse_qsl, urlencode, urlsplit, urlunsplit

from ..iots import (
    MOCK,
    MUTATION,
    OUTPUT,
    PASS,
    WILDCARD,
    Event,
    Guard,
    TestCase,
    TestStep,
)

DEFAULT_TOKEN_NAMES = ("authorization", "token", "access_token", "sessionid")
PAYLOAD_KINDS = ("xss", "sql", "traversal", "body", "sensitive")


class MutationError(ValueError):
    """The operator cannot be applied to the given test case."""


def load_dictionary(source: str | Path | Iterable[str]) -> list[str]:
    """Read a payload dictionary: one payload per line, ``#`` starts a comment line."""
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = list(source)
    return [ln for ln in (l.rstrip("\r\n") for l in lines) if ln.strip() and not ln.lstrip().startswith("#")]


def default_payloads() -> dict[str, list[str]]:
    root = resources.files("restmut.operators") / "payloads"
    return {k: load_dictionary((root / f"{k}.txt").read_text(encoding="utf-8").splitlines()) for k in PAYLOAD_KINDS}


@dataclass
class OperatorContext:
    """Knobs shared by all operators.  Defaults are documented in the README."""

    payloads: Mapping[str, Sequence[str]] = field(default_factory=default_payloads)
    token_names: Sequence[str] = DEFAULT_TOKEN_NAMES
    stress_repeat: int = 100
    login_attempts: int = 5
    overflow_size: int = 1 << 20
    expired_token: str | None = None
    known_tokens: Sequence[str] = ()
    unknown_component: str = "unknown-service"

    def payload(self, kind: str, index: int = 0) -> str:
        entries = self.payloads.get(kind) or default_payloads()[kind]
        return entries[index % len(entries)]

    @classmethod
    def with_payload_files(cls, paths: Mapping[str, str], **kw: Any) -> "OperatorContext":
        payloads = default_payloads()
        for kind, path in paths.items():
            payloads[kind] = load_dictionary(path)
        return cls(payloads=payloads, **kw)


@dataclass(frozen=True)
class Variant:
    index: int
    name: str = "default"
    value: str | None = None


DEFAULT_VARIANT = Variant(0)


def random_token(rng: random.Random, n: int = 16) -> str:
    return "".join(rng.choice(string.ascii_letters + string.digits) for _ in range(n))


# ---------------------------------------------------------------------------
# event rewriting helpers
# ---------------------------------------------------------------------------

def _is_token(name: str, names: Iterable[str]) -> bool:
    return name.lower() in {n.lower() for n in names}


def _map_json(body: str, fn) -> str | None:
    """Apply ``fn(key, value) -> value | _DROP`` to JSON leaves; None when body is not JSON."""
    try:
        doc = json.loads(body)
    except (ValueError, TypeError):
        return None
    if not isinstance(doc, (dict, list)):
        return None

    def walk(node: Any, key: str) -> Any:
        if isinstance(node, dict):
            out = {}
            for k, v in node.items():
                nv = walk(v, str(k))
                if nv is not _DROP:
                    out[k] = nv
            return out
        if isinstance(node, list):
            return [walk(v, key) for v in node]
        return fn(key, node)

    return json.dumps(walk(doc, ""), separators=(",", ":"))


_DROP = object()


def _split_path(path: str) -> tuple[str, list[tuple[str, str]]]:
    parts = urlsplit(path)
    return parts.path, parse_qsl(parts.query, keep_blank_values=True)


def _join_path(base: str, query: list[tuple[str, str]]) -> str:
    return urlunsplit(("", "", base, urlencode(query), ""))


def remove_tokens(event: Event, names: Sequence[str]) -> Event:
    changes: dict[str, Any] = {}
    if event.headers:
        changes["headers"] = [list(h) for h in event.headers if not _is_token(h[0], names)]
    if event.cookies:
        changes["cookies"] = {k: v for k, v in event.cookies.items() if not _is_token(k, names)}
    if event.path and "?" in event.path:
        base, q = _split_path(event.path)
        changes["path"] = _join_path(base, [(k, v) for k, v in q if not _is_token(k, names)])
    if event.body:
        body = _map_json(event.body, lambda k, v: _DROP if _is_token(k, names) else v)
        if body is not None:
            changes["body"] = body
    return _apply(event, changes)


def replace_tokens(event: Event, names: Sequence[str], new: str) -> Event:
    def swap(v: str) -> str:
        parts = str(v).split()
        return " ".join(parts[:-1] + [new]) if len(parts) > 1 else new

    changes: dict[str, Any] = {}
    if event.headers:
        changes["headers"] = [[k, swap(v) if _is_token(k, names) else v] for k, v in event.headers]
    if event.cookies:
        changes["cookies"] = {k: (new if _is_token(k, names) else v) for k, v in event.cookies.items()}
    if event.path and "?" in event.path:
        base, q = _split_path(event.path)
        changes["path"] = _join_path(base, [(k, new if _is_token(k, names) else v) for k, v in q])
    if event.body:
        body = _map_json(event.body, lambda k, v: new if _is_token(k, names) else v)
        if body is not None:
            changes["body"] = body
    return _apply(event, changes)


def token_values(event: Event, names: Sequence[str]) -> set[str]:
    from ..ingest import named_fields

    return {str(v).split()[-1] for k, v in named_fields(event) if _is_token(k, names) and str(v).split()}


def _apply(event: Event, changes: Mapping[str, Any]) -> Event:
    params = dict(event.params)
    for k, v in changes.items():
        if v in ({}, []):
            params.pop(k, None)
        else:
            params[k] = v
    return Event(event.direction, event.label, params, event.guard)


_SKIP_HEADERS = {"host", "content-length", "content-type", "connection"}


def _inject_header(event: Event, payload: str, names: Sequence[str]) -> Event:
    headers = [list(h) for h in event.headers]
    if not headers:
        return event
    candidates = [i for i, (k, _) in enumerate(headers) if k.lower() not in _SKIP_HEADERS and not _is_token(k, names)]
    if not candidates:
        candidates = [i for i, (k, _) in enumerate(headers) if k.lower() not in _SKIP_HEADERS] or [0]
    i = min(candidates, key=lambda j: headers[j][0].lower())
    headers[i][1] = payload
    return _apply(event, {"headers": headers})


def inject_body(body: str, payload: str) -> str:
    """Put ``payload`` into every string field of a JSON or form body, else replace it."""
    strings: list[bool] = []
    if _map_json(body, lambda k, v: strings.append(isinstance(v, str)) or v) is not None:
        only_strings = any(strings)
        return _map_json(body, lambda k, v: payload if isinstance(v, str) or not only_strings else v)  # type: ignore[return-value]
    if "=" in body:
        return "&".join(p.split("=", 1)[0] + "=" + payload if "=" in p else p for p in body.split("&"))
    return payload


def inject(event: Event, payload: str, names: Sequence[str]) -> Event:
    if event.body:
        return _apply(event, {"body": inject_body(event.body, payload)})
    return _inject_header(event, payload, names)


# ---------------------------------------------------------------------------
# the operator
# ---------------------------------------------------------------------------

def subtree_steps(tc: TestCase, root: str) -> list[TestStep]:
    """Steps reachable from ``root`` without passing through a verdict state."""
    out = []
    todo = [root]
    seen = set()
    while todo:
        q = todo.pop()
        if q in seen or tc.is_verdict(q):
            continue
        seen.add(q)
        for s in tc.outgoing.get(q, ()):
            out.append(s)
            todo.append(s.target)
    return out


def leads_to_pass(tc: TestCase, q: str) -> bool:
    goal = tc.verdicts[PASS]
    return q == goal or any(s.target == goal for s in subtree_steps(tc, q))


def marked_step(tc: TestCase) -> TestStep:
    marked = [s for s in tc.steps if MUTATION in s.labels]
    if len(marked) != 1:
        raise MutationError(f"{tc.name}: expected exactly one step labelled {MUTATION!r}, found {len(marked)}")
    return marked[0]


class MutationOperator:
    """Base class.  Subclasses set metadata and override :meth:`applies`,
    :meth:`modify` and/or :meth:`rewrite`.

    ``change`` rewrites the marked step, optionally keeps the dependee (mock)
    interaction that follows it, and prunes the rest of its subtree.
    ``expected`` appends the pass branch at the open end of the mutated branch.
    """

    slug: str = ""
    name: str = ""
    sources: tuple[str, ...] = ()
    description: str = ""
    pass_guard: Guard = Guard()
    keep_followups: bool = False
    # a secure service answers the mutated event with a 4xx rejection
    rejects: bool = False
    # the mutation targets credentials; used for the accepted-anyway warning
    credential: bool = False
    payload_kind: str | None = None

    # -- condition --------------------------------------------------------
    def applies(self, event: Event, labels: frozenset[str]) -> bool:
        return True

    def condition(self, step: TestStep) -> bool:
        return step.event is not None and self.applies(step.event, step.labels)

    # -- variants -----------------------------------------------------------
    def variants(self, step: TestStep, ctx: OperatorContext) -> list[Variant]:
        return [DEFAULT_VARIANT]

    # -- change -------------------------------------------------------------
    def modify(self, event: Event, variant: Variant, ctx: OperatorContext, rng: random.Random) -> Event:
        return event

    def rewrite(
        self,
        tc: TestCase,
        step: TestStep,
        chain: list[TestStep],
        variant: Variant,
        ctx: OperatorContext,
        rng: random.Random,
    ) -> list[TestStep]:
        assert step.event is not None
        mutated = TestStep(step.source, self.modify(step.event, variant, ctx, rng), step.labels, step.target)
        return [mutated, *chain]

    def followups(self, tc: TestCase, q: str) -> list[TestStep]:
        chain: list[TestStep] = []
        while True:
            mocks = [s for s in tc.children(q) if MOCK in s.labels and not tc.is_verdict(s.target)]
            if len(mocks) != 1:
                return chain
            chain.append(mocks[0])
            q = mocks[0].target

    def change(
        self,
        tc: TestCase,
        variant: Variant = DEFAULT_VARIANT,
        ctx: OperatorContext | None = None,
        rng: random.Random | None = None,
    ) -> TestCase:
        ctx = ctx or OperatorContext()
        rng = rng or random.Random(0)
        step = marked_step(tc)
        if not self.condition(step):
            raise MutationError(f"{self.slug}: condition does not hold on {step}")
        chain = self.followups(tc, step.target) if self.keep_followups else []
        dropped = set(subtree_steps(tc, step.target)) | {step}
        kept = [s for s in tc.steps if s not in dropped]
        return tc.with_steps(kept + self.rewrite(tc, step, chain, variant, ctx, rng))

    # -- expected -----------------------------------------------------------
    def pass_event(self, sut_id: str) -> Event:
        return Event(OUTPUT, WILDCARD, {"from": sut_id, "to": WILDCARD, "status": WILDCARD}, self.pass_guard)

    def expected(self, tc: TestCase) -> TestCase:
        step = marked_step(tc)
        region = [step.target] + [s.target for s in subtree_steps(tc, step.target)]
        leaves = sorted({q for q in region if not tc.is_verdict(q) and not tc.outgoing.get(q)})
        if not leaves:
            raise MutationError(f"{self.slug}: no open branch after the mutated step in {tc.name}")
        ev = self.pass_event(tc.sut_id)
        added = [TestStep(q, ev, frozenset(), tc.verdicts[PASS]) for q in leaves]
        return tc.with_steps(list(tc.steps) + added)

    def metadata(self) -> dict[str, Any]:
        return {
            "slug": self.slug,
            "name": self.name,
            "sources": list(self.sources),
            "description": self.description,
            "pass": self.pass_guard.to_json(),
        }

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.slug}>"
