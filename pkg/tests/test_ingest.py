from __future__ import annotations

import json

import pytest

from restmut import fixtures, iots
from restmut.ingest import (
    LogError,
    build_test_cases,
    collect_bindings,
    ingest,
    label_exchanges,
    parse_log,
    sessions,
)
from restmut.iots import CRASH, LOGIN, MOCK, TOKEN, TOKEN_CREATION, validate


def line(**doc) -> str:
    return json.dumps(doc)


def log(*lines: str) -> str:
    return "\n".join(lines) + "\n"


REQ = line(ts=0, kind="request", method="GET", path="/checkAccountRisk", headers=[["token", "1234"]],
           body='"acc"=99', **{"from": "Client", "to": "AccMan"})
RESP = line(ts=1, kind="response", status=200, body="LOWRISK", **{"from": "AccMan", "to": "Client"})


class TestParse:
    def test_pairs_request_and_response(self):
        xs = parse_log(log(REQ, RESP))
        assert len(xs) == 2
        assert xs[0].pair == 1 and xs[1].pair == 0
        assert xs[0].method == "GET" and xs[1].status == 200

    def test_empty(self):
        assert parse_log(b"") == []

    def test_orphan_response(self):
        with pytest.raises(LogError, match="no pending request") as err:
            parse_log(log(RESP))
        assert err.value.line == 1

    def test_malformed_line_reports_number(self):
        with pytest.raises(LogError) as err:
            parse_log(log(REQ, "{oops", RESP))
        assert err.value.line == 2

    def test_lenient_skips(self):
        assert len(parse_log(log(REQ, "{oops", RESP), lenient=True)) == 2

    def test_backwards_time(self):
        late = line(ts=5, kind="request", method="GET", path="/a", **{"from": "C", "to": "S"})
        early = line(ts=1, kind="request", method="GET", path="/b", **{"from": "C", "to": "S"})
        with pytest.raises(LogError, match="backwards"):
            parse_log(log(late, early))

    def test_missing_method(self):
        with pytest.raises(LogError, match="method"):
            parse_log(log(line(ts=0, kind="request", path="/a", **{"from": "C", "to": "S"})))


class TestLabels:
    def test_crash(self):
        r = line(ts=0, kind="request", method="GET", path="/a", **{"from": "C", "to": "S"})
        s = line(ts=1, kind="response", status=500, **{"from": "S", "to": "C"})
        xs = label_exchanges(parse_log(log(r, s)), "S")
        assert CRASH in xs[1].labels

    def test_mock(self, ):
        xs = label_exchanges(parse_log(fixtures.asset("accman.jsonl")), "AccMan")
        assert [MOCK in x.labels for x in xs] == [False, True, True, False]

    def test_no_rule(self):
        r = line(ts=0, kind="request", method="GET", path="/items", **{"from": "C", "to": "S"})
        s = line(ts=1, kind="response", status=200, body="[]", **{"from": "S", "to": "C"})
        assert [x.labels for x in label_exchanges(parse_log(log(r, s)), "S")] == [frozenset(), frozenset()]

    def test_login_and_token_tracking(self):
        xs = label_exchanges(parse_log(fixtures.asset("accman_session.jsonl")), "AccMan")
        assert LOGIN in xs[0].labels
        assert TOKEN_CREATION in xs[1].labels
        assert TOKEN in xs[2].labels

    def test_idempotent(self):
        once = label_exchanges(parse_log(fixtures.asset("accman_session.jsonl")), "AccMan")
        assert [x.labels for x in label_exchanges(once, "AccMan")] == [x.labels for x in once]


class TestBuild:
    def test_accman_log_matches_shipped_case(self, accman_tc):
        (tc,) = ingest(fixtures.asset("accman.jsonl"), "AccMan")
        assert len(tc.steps) == 4
        assert iots.store(tc.with_steps(tc.steps, name="accman-check")) == iots.store(accman_tc)

    def test_incomplete_session_dropped(self, caplog):
        assert ingest(log(REQ), "AccMan") == []
        assert "request without response" in caplog.text

    def test_two_interleaved_sessions(self):
        a = line(ts=0, kind="request", method="GET", path="/a", **{"from": "C1", "to": "S"})
        b = line(ts=1, kind="request", method="GET", path="/b", **{"from": "C2", "to": "S"})
        ra = line(ts=2, kind="response", status=200, **{"from": "S", "to": "C1"})
        rb = line(ts=3, kind="response", status=404, **{"from": "S", "to": "C2"})
        tcs = ingest(log(a, b, ra, rb), "S")
        assert len(tcs) == 2
        assert all(validate(tc) == [] for tc in tcs)
        assert sorted(tc.steps[0].event.path for tc in tcs) == ["/a", "/b"]

    def test_sessions_partition(self):
        xs = label_exchanges(parse_log(fixtures.asset("accman.jsonl")), "AccMan")
        groups = sessions(xs, "AccMan")
        flat = sorted(i for idxs in groups.values() for i in idxs)
        assert flat == list(range(len(xs)))

    def test_cookie_sessions(self):
        a = line(ts=0, kind="request", method="GET", path="/a", cookies={"sid": "x"}, **{"from": "C", "to": "S"})
        ra = line(ts=1, kind="response", status=200, **{"from": "S", "to": "C"})
        b = line(ts=2, kind="request", method="GET", path="/b", cookies={"sid": "y"}, **{"from": "C", "to": "S"})
        rb = line(ts=3, kind="response", status=200, **{"from": "S", "to": "C"})
        xs = label_exchanges(parse_log(log(a, ra, b, rb)), "S")
        assert len(build_test_cases(xs, "S", "cookie:sid")) == 2
        assert len(build_test_cases(xs, "S", "from")) == 1

    def test_bindings(self):
        xs = parse_log(fixtures.asset("accman.jsonl"))
        b = collect_bindings(xs)
        assert b["token"] == "1234" and b["acc"] == "99"
