"""The security mutation operators for RESTful APIs.

Order follows the published operator tables; ``catalog()`` returns a fresh
list in that order.
"""

from __future__ import annotations

import base64
from typing import Any

from ..iots import (
    DELAY,
    LOGIN,
    MOCK,
    NO_CRASH,
    TOKEN,
    TOKEN_CREATION,
    TRANSPORT_ERROR,
    Event,
    Guard,
    TestStep,
    body_contains,
    body_lacks,
    status_in,
)
from .base import (
    DEFAULT_VARIANT,
    MutationOperator,
    Variant,
    _apply,
    _map_json,
    _split_path,
    _join_path,
    inject,
    leads_to_pass,
    marked_step,
    random_token,
    remove_tokens,
    replace_tokens,
    subtree_steps,
    token_values,
)

VERB_ORDER = ("GET", "POST", "PUT", "DELETE", "PATCH")
PASSWORD_KEYS = ("password", "passwd", "pass", "pwd", "secret")


def _has_body_or_header(event: Event) -> bool:
    return bool(event.body) or bool(event.headers)


class EventDuplication(MutationOperator):
    slug = "event-duplication"
    name = "Event Duplication"
    sources = ("ENISA TM-20",)
    description = "duplicate a request event to the service under test"
    pass_guard = Guard(all_of=(NO_CRASH,))
    keep_followups = True

    def applies(self, event, labels):
        return event.is_request

    def rewrite(self, tc, step, chain, variant, ctx, rng):
        fresh = tc.fresh_state("d")
        qk = chain[-1].target if chain else step.target
        replies = [s for s in tc.children(qk) if s.is_output and MOCK not in s.labels and leads_to_pass(tc, s.target)]
        copy = TestStep(step.source, step.event, step.labels - {"mutation"}, step.target)
        out = [step, *chain]
        if replies:
            qr = next(fresh)
            out.append(TestStep(replies[0].source, replies[0].event, replies[0].labels, qr))
            src = qr
        else:
            src = qk
        first = next(fresh)
        out.append(TestStep(src, copy.event, copy.labels, first))
        q = first
        for s in chain:
            nq = next(fresh)
            out.append(TestStep(q, s.event, s.labels, nq))
            q = nq
        return out


class HttpVerbChange(MutationOperator):
    slug = "verb-change"
    name = "HTTP Verb Change"
    sources = ("CAPEC-274",)
    description = "change the HTTP verb of a request"
    pass_guard = Guard(all_of=(status_in(405),))
    rejects = True

    def applies(self, event, labels):
        return event.is_request

    def modify(self, event, variant, ctx, rng):
        current = str(event.method).upper()
        verb = next(v for v in VERB_ORDER if v != current)
        return event.with_params(method=verb)


class XssAttack(MutationOperator):
    slug = "xss"
    name = "XSS Attack"
    sources = ("ENISA TM-21", "CAPEC-63", "CWE-79")
    description = "inject a cross-site scripting payload"
    pass_guard = Guard(all_of=(NO_CRASH, body_contains("error")))
    payload_kind = "xss"

    def applies(self, event, labels):
        return _has_body_or_header(event)

    def modify(self, event, variant, ctx, rng):
        return inject(event, ctx.payload("xss"), ctx.token_names)


class CryptographicFailures(MutationOperator):
    slug = "crypto-failure"
    name = "Cryptographic Failures"
    sources = ("CAPEC-220", "ENISA PS-15", "CAPEC-276", "CWE-287")
    description = "replay an event over an untrusted (plain) connection"
    pass_guard = Guard(any_of=(TRANSPORT_ERROR, body_contains("ERR_CERT_AUTHORITY_INVALID")))

    def modify(self, event, variant, ctx, rng):
        return event.with_params(scheme="http")


class TokenRemoval(MutationOperator):
    slug = "token-removal"
    name = "Token Removal"
    sources = ("CWE-602", "CWE-862", "CAPEC-114")
    description = "delete a token in an event"
    pass_guard = Guard(all_of=(status_in(401, 403),))
    rejects = True
    credential = True

    def applies(self, event, labels):
        return TOKEN in labels

    def modify(self, event, variant, ctx, rng):
        return remove_tokens(event, ctx.token_names)


class TokenRemovalOnCreation(TokenRemoval):
    slug = "token-removal-creation"
    name = "Token Removal on Creation"
    description = "delete a token where it is created"
    pass_guard = Guard(all_of=(status_in(401, 402, 403),))

    def applies(self, event, labels):
        return TOKEN_CREATION in labels


class TokenAlteration(MutationOperator):
    slug = "token-alteration"
    name = "Token Alteration"
    sources = ("CAPEC-114",)
    description = "replace a token by an expired one, one of another session, or a nonexistent one"
    pass_guard = Guard(all_of=(status_in(401, 402, 403),))
    rejects = True
    credential = True

    def applies(self, event, labels):
        return TOKEN in labels

    def variants(self, step, ctx):
        assert step.event is not None
        current = token_values(step.event, ctx.token_names)
        out = []
        if ctx.expired_token:
            out.append(Variant(0, "expired", ctx.expired_token))
        other = next((t for t in ctx.known_tokens if t not in current), None)
        if other is not None:
            out.append(Variant(1, "other-session", other))
        out.append(Variant(2, "nonexistent"))
        return out

    def modify(self, event, variant, ctx, rng):
        value = variant.value if variant.value is not None else "nx-" + random_token(rng)
        return replace_tokens(event, ctx.token_names, value)


class StressTesting(MutationOperator):
    slug = "stress"
    name = "Stress Testing"
    sources = ("CAPEC-488",)
    description = "replay a request many times in a small window"
    pass_guard = Guard(all_of=(NO_CRASH, body_lacks("error")))
    keep_followups = True

    def applies(self, event, labels):
        return event.is_request

    def modify(self, event, variant, ctx, rng):
        return event.with_params(repeat=ctx.stress_repeat, repeat_check="all")


class SsrfDenyByDefault(MutationOperator):
    slug = "ssrf"
    name = "SSRF Deny-by-default"
    sources = ("ENISA",)
    description = "issue the event from an unknown component"
    pass_guard = Guard(all_of=(NO_CRASH,), any_of=(body_contains("error"), status_in(404)))

    def modify(self, event, variant, ctx, rng):
        unknown = ctx.unknown_component
        if event.is_request:
            extra = ["Origin", f"http://{unknown}.invalid"]
        else:
            extra = ["Via", f"1.1 {unknown}"]
        headers = [list(h) for h in event.headers if h[0].lower() != extra[0].lower()] + [extra]
        return event.with_params(**{"from": unknown, "headers": headers})


class BodyDataManipulation(MutationOperator):
    slug = "body-manipulation"
    name = "Body Data Manipulation"
    sources = ("ENISA TM-06", "CAPEC-278", "CAPEC-92", "CWE-20", "CWE-125")
    description = "replay the event with unauthorized data"
    pass_guard = Guard(any_of=(status_in(400), status_in(422)))
    rejects = True
    payload_kind = "body"

    def applies(self, event, labels):
        return _has_body_or_header(event)

    def modify(self, event, variant, ctx, rng):
        import json

        payload = ctx.payload("body")
        if not event.body:
            return inject(event, payload, ctx.token_names)
        try:
            body, extra = json.loads(event.body), json.loads(payload)
        except ValueError:
            return _apply(event, {"body": payload})
        if isinstance(body, dict) and isinstance(extra, dict):
            return _apply(event, {"body": json.dumps({**body, **extra}, separators=(",", ":"))})
        return _apply(event, {"body": payload})


class CookieManipulation(MutationOperator):
    slug = "cookie-manipulation"
    name = "Cookie Manipulation"
    sources = ("CWE-472", "CAPEC-31")
    description = "change a cookie to inject an attack"
    pass_guard = Guard(all_of=(status_in(400),))
    rejects = True
    payload_kind = "sql"

    def applies(self, event, labels):
        return bool(event.cookies)

    def modify(self, event, variant, ctx, rng):
        cookies = dict(event.cookies)
        cookies[min(cookies)] = ctx.payload("sql")
        return event.with_params(cookies=cookies)


class FailedLoginDuplication(MutationOperator):
    slug = "failed-login-duplication"
    name = "Failed Login Attempt Duplication"
    sources = ("ENISA TM-38", "CAPEC-49")
    description = "repeat a login request with wrong credentials"
    pass_guard = Guard(all_of=(NO_CRASH, body_contains("Too Many Failed Attempt")))

    def applies(self, event, labels):
        return event.is_request and LOGIN in labels

    def modify(self, event, variant, ctx, rng):
        wrong = "wrong-" + random_token(rng, 8)
        changes: dict[str, Any] = {"repeat": ctx.login_attempts, "repeat_check": "last"}
        body = event.body
        if body:
            js = _map_json(body, lambda k, v: wrong if k.lower() in PASSWORD_KEYS else v)
            if js is not None:
                changes["body"] = js
            elif "=" in body:
                changes["body"] = "&".join(
                    (p.split("=", 1)[0] + "=" + wrong) if p.split("=", 1)[0].lower() in PASSWORD_KEYS else p
                    for p in body.split("&")
                )
            else:
                changes["body"] = body + wrong
        headers = []
        for k, v in event.headers:
            if k.lower() == "authorization" and v.lower().startswith("basic "):
                try:
                    user = base64.b64decode(v.split()[1]).decode().split(":", 1)[0]
                except (ValueError, IndexError, UnicodeDecodeError):
                    user = "user"
                v = "Basic " + base64.b64encode(f"{user}:{wrong}".encode()).decode()
            headers.append([k, v])
        if headers:
            changes["headers"] = headers
        return event.with_params(**changes)


class PathManipulation(MutationOperator):
    slug = "path-manip"
    name = "Path Manipulation"
    sources = ("CWE-22", "CAPEC-126")
    description = "change the URL to reach unauthorised data"
    pass_guard = Guard(all_of=(status_in(404),))
    rejects = True
    payload_kind = "traversal"

    def applies(self, event, labels):
        return event.is_request

    def modify(self, event, variant, ctx, rng):
        base, query = _split_path(str(event.path))
        return event.with_params(path=_join_path(base.rstrip("/") + "/" + ctx.payload("traversal"), query))


class SqlInjection(MutationOperator):
    slug = "sql-injection"
    name = "SQL Injection"
    sources = ("CWE-89", "CAPEC-66")
    description = "inject SQL code into input data"
    pass_guard = Guard(any_of=(status_in(400), body_contains("error")))
    payload_kind = "sql"

    def applies(self, event, labels):
        return bool(event.body)

    def modify(self, event, variant, ctx, rng):
        return inject(event, ctx.payload("sql"), ctx.token_names)


class SessionManagement(MutationOperator):
    slug = "session-mgmt"
    name = "Session Management"
    sources = ("CAPEC-61", "CWE-613")
    description = "wait longer than the session lifetime before the event"
    pass_guard = Guard(all_of=(status_in(401), body_contains("session terminated")))
    rejects = True

    def change(self, tc, variant=None, ctx=None, rng=None):
        step = marked_step(tc)
        # an existing quiescence branch at the same state would clash with the delay
        clash = [s for s in tc.outgoing.get(step.source, ()) if s.is_theta]
        if clash:
            drop = set(clash)
            for s in clash:
                drop.update(subtree_steps(tc, s.target))
            tc = tc.with_steps(s for s in tc.steps if s not in drop)
        return super().change(tc, variant or DEFAULT_VARIANT, ctx, rng)

    def rewrite(self, tc, step, chain, variant, ctx, rng):
        waiting = next(tc.fresh_state("w"))
        labels = {DELAY} | ({MOCK} if MOCK in step.labels else set())
        return [
            TestStep(step.source, None, frozenset(labels), waiting),
            TestStep(waiting, step.event, step.labels, step.target),
            *chain,
        ]


class InformationLeakage(MutationOperator):
    slug = "info-leakage"
    name = "Information Leakage"
    sources = ("CWE-200",)
    description = "redirect a request toward a sensitive resource"
    pass_guard = Guard(all_of=(status_in(401), NO_CRASH))
    rejects = True
    payload_kind = "sensitive"

    def applies(self, event, labels):
        return event.is_request

    def modify(self, event, variant, ctx, rng):
        base, query = _split_path(str(event.path))
        return event.with_params(path=_join_path(base.rstrip("/") + "/" + ctx.payload("sensitive"), query))


class DependeeServiceShutdown(MutationOperator):
    slug = "dependee-shutdown"
    name = "Dependee Service Shutdown"
    sources = ()
    description = "shut a mock component down once it has been requested"
    pass_guard = Guard(
        all_of=(NO_CRASH,),
        any_of=(body_contains("connexion timed out"), body_contains("connection timed out"), status_in(408)),
    )
    # later dependee interactions stay in the mutant; they are never reached and not verified
    keep_followups = True

    def applies(self, event, labels):
        return MOCK in labels and event.is_response

    def modify(self, event, variant, ctx, rng):
        return event.with_params(shutdown=True)


class BufferOverflow(MutationOperator):
    slug = "buffer-overflow"
    name = "Buffer Overflow"
    sources = ("CAPEC-100", "CWE-119")
    description = "oversize the input data"
    pass_guard = Guard(all_of=(status_in(400), NO_CRASH))
    rejects = True

    def modify(self, event, variant, ctx, rng):
        # expanded to the real body at concretization
        return event.with_params(body=None, oversize=ctx.overflow_size)


OPERATOR_TYPES: tuple[type[MutationOperator], ...] = (
    EventDuplication,
    HttpVerbChange,
    XssAttack,
    CryptographicFailures,
    TokenRemoval,
    TokenRemovalOnCreation,
    TokenAlteration,
    StressTesting,
    SsrfDenyByDefault,
    BodyDataManipulation,
    CookieManipulation,
    FailedLoginDuplication,
    PathManipulation,
    SqlInjection,
    SessionManagement,
    InformationLeakage,
    DependeeServiceShutdown,
    BufferOverflow,
)

DEFAULT_OPERATORS = ("verb-change", "path-manip", "session-mgmt", "token-removal")


def catalog() -> list[MutationOperator]:
    return [cls() for cls in OPERATOR_TYPES]


def get(slug: str) -> MutationOperator:
    for cls in OPERATOR_TYPES:
        if cls.slug == slug:
            return cls()
    raise KeyError(f"unknown operator {slug!r}; known: {', '.join(c.slug for c in OPERATOR_TYPES)}")


def resolve(selection: str | list[str] | None) -> list[MutationOperator]:
    """Operators from a comma list, ``"all"`` or ``None`` (the default four)."""
    if selection is None:
        names: list[str] = list(DEFAULT_OPERATORS)
    elif isinstance(selection, str):
        names = [s.strip() for s in selection.split(",") if s.strip()]
    else:
        names = list(selection)
    if names == ["all"]:
        return catalog()
    return [get(n) for n in names]
