"""Seeded generators of synthetic test cases (property tests, scaling runs)."""

from __future__ import annotations

import itertools
import json
import random
from typing import Iterator

from .iots import (
    CRASH,
    FAIL,
    INC,
    INPUT,
    LOGIN,
    MOCK,
    OUTPUT,
    PASS,
    TOKEN,
    TOKEN_CREATION,
    WILDCARD,
    Event,
    TestCase,
    TestStep,
    wildcard_output,
)
from .ingest import status_label
from .operators.base import subtree_steps

SUT = "S"
CLIENT = "C"
DEPENDEES = ("D1", "D2")
PATHS = ("/items", "/orders", "/login", "/account", "/search?q=abc", "/users/7")
STATUSES = (200, 201, 204, 400, 401, 403, 404, 500)


def _request(rng: random.Random, src: str, dst: str, token: str | None) -> tuple[Event, set[str]]:
    path = rng.choice(PATHS)
    method = "POST" if path == "/login" else rng.choice(("GET", "GET", "POST", "PUT", "DELETE"))
    params: dict = {"from": src, "to": dst, "method": method, "path": path}
    labels: set[str] = set()
    headers = []
    if rng.random() < 0.5:
        headers.append(["Accept", rng.choice(("application/json", "*/*"))])
    if token is not None:
        headers.append(["token", token])
        labels.add(TOKEN)
    if headers:
        params["headers"] = headers
    if path == "/login":
        labels.add(LOGIN)
        params["body"] = json.dumps({"user": "alice", "password": rng.choice(("secret", WILDCARD))})
    elif method in ("POST", "PUT") or rng.random() < 0.2:
        params["body"] = rng.choice(('{"name": "x", "qty": 2}', "a=1&b=two", "plain", WILDCARD))
    if rng.random() < 0.25:
        params["cookies"] = {"sid": rng.choice(("s1", "s2", WILDCARD))}
    return Event(INPUT if dst == SUT else OUTPUT, path.split("?")[0], params), labels


def _response(rng: random.Random, src: str, dst: str, status: int, token: str | None,
              created: bool = False) -> tuple[Event, set[str]]:
    params: dict = {"from": src, "to": dst, "status": status}
    labels: set[str] = set()
    if created:
        params["body"] = json.dumps({"token": token})
        labels.add(TOKEN_CREATION)
    elif rng.random() < 0.7:
        params["body"] = rng.choice(("ok", '{"id": 3}', "error: nope", "LOWRISK"))
    if token is not None and not created and rng.random() < 0.5:
        params["headers"] = [["token", token]]
        labels.add(TOKEN)
    if status == 500:
        labels.add(CRASH)
    return Event(OUTPUT, status_label(status), params), labels


def random_test_case(rng: random.Random, name: str = "synth", max_steps: int = 20) -> TestCase:
    """A random valid test case with at most ``max_steps`` steps.

    Mixes client requests with token / login labels, dependee (mock) chains,
    branching responses, quiescence and wildcard branches.
    """
    while True:
        tc = _draw(rng, name, max_steps)
        if len(tc.steps) <= max_steps:
            return tc


def _draw(rng: random.Random, name: str, max_steps: int) -> TestCase:
    ids = itertools.count(1)
    steps: list[TestStep] = []
    token = [rng.choice((None, "t-1"))]

    def new() -> str:
        return f"q{next(ids)}"

    def room() -> int:
        return max_steps - len(steps)

    def add(src: str, ev: Event | None, labels: set[str], dst: str) -> None:
        steps.append(TestStep(src, ev, frozenset(labels), dst))

    def verdict() -> str:
        return rng.choices((PASS, FAIL, INC), weights=(6, 2, 2))[0]

    def request(q: str) -> None:
        ev, labels = _request(rng, CLIENT, SUT, token[0])
        cur = new()
        add(q, ev, labels, cur)
        login = LOGIN in labels
        for _ in range(rng.choice((0, 0, 1, 1, 2))):
            if room() < 4:
                break
            dep = rng.choice(DEPENDEES)
            mreq, ml = _request(rng, SUT, dep, token[0] if rng.random() < 0.5 else None)
            mid = new()
            add(cur, mreq, ml | {MOCK}, mid)
            mresp, rl = _response(rng, dep, SUT, rng.choice((200, 200, 404, 503)), token[0])
            nxt = new()
            add(mid, mresp, rl | {MOCK}, nxt)
            cur = nxt
        respond(cur, login)

    def respond(q: str, login: bool) -> None:
        n = 1 if room() < 3 else rng.choice((1, 1, 2))
        statuses = rng.sample(STATUSES, n)
        for i, status in enumerate(statuses):
            created = login and status == 200
            if created:
                token[0] = f"t-{rng.randrange(2, 99)}"
            ev, labels = _response(rng, SUT, CLIENT, status, token[0], created)
            if room() >= 3 and rng.random() < 0.45:
                nq = new()
                add(q, ev, labels, nq)
                request(nq)
            else:
                add(q, ev, labels, verdict())
        if room() >= 1 and rng.random() < 0.2:
            add(q, None, set(), rng.choice((FAIL, INC)))
        if room() >= 1 and rng.random() < 0.15:
            add(q, wildcard_output(), set(), INC)

    request("q0")
    return TestCase.build(name, SUT, steps)


def corpus(seed: int, n: int, max_steps: int = 20) -> list[TestCase]:
    rng = random.Random(seed)
    return [random_test_case(rng, f"synth-{seed}-{i}", max_steps) for i in range(n)]


def linear_test_case(rng: random.Random, name: str, events: int) -> TestCase:
    """Request/response chain of about ``events`` events ending in ``pass``."""
    steps = []
    q = "q0"
    pairs = max(1, events // 2)
    for i in range(pairs):
        token = "t-1" if i else None
        req, rl = _request(rng, CLIENT, SUT, token)
        resp, pl = _response(rng, SUT, CLIENT, 200, token)
        mid, nxt = f"q{2 * i + 1}", (PASS if i == pairs - 1 else f"q{2 * i + 2}")
        steps.append(TestStep(q, req, frozenset(rl), mid))
        steps.append(TestStep(mid, resp, frozenset(pl), nxt))
        q = nxt
    return TestCase.build(name, SUT, steps)


def linear_corpus(seed: int, n: int, events: int) -> list[TestCase]:
    rng = random.Random(seed)
    return [linear_test_case(rng, f"lin-{seed}-{events}-{i}", events) for i in range(n)]


def random_incomplete(rng: random.Random, name: str = "partial", max_steps: int = 20) -> TestCase:
    """A deterministic tree where some branches stop before a verdict."""
    tc = random_test_case(rng, name, max_steps)
    steps = list(tc.steps)
    for _ in range(rng.randint(1, 3)):
        inner = [s for s in steps if not tc.is_verdict(s.target)]
        if not inner:
            break
        cut = rng.choice(inner)
        current = tc.with_steps(steps)
        drop = set(subtree_steps(current, cut.target))
        steps = [s for s in steps if s not in drop]
    # also drop a few verdict leaves outright
    leaves = [s for s in steps if tc.is_verdict(s.target)]
    for s in rng.sample(leaves, k=min(len(leaves), rng.randint(0, 2))):
        steps.remove(s)
    return tc.with_steps(steps)


def iter_random(seed: int) -> Iterator[TestCase]:
    rng = random.Random(seed)
    for i in itertools.count():
        yield random_test_case(rng, f"synth-{seed}-{i}")
