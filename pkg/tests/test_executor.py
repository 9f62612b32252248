from __future__ import annotations

import http.client
import socket
import xml.etree.ElementTree as ET
from dataclasses import replace

import pytest

from restmut import engine, fixtures
from restmut.concretize import MockRule, Response, concretize
from restmut.executor import (
    ACCEPTED_ANYWAY,
    ENVIRONMENT,
    MOCK_VIOLATED,
    MockServer,
    TestResult,
    Timeouts,
    exit_code,
    junit_xml,
    run,
    run_suite,
    setup_via_url,
    summarize,
    verify_mocks,
)
from restmut.iots import FAIL, INC, PASS
from restmut.operators import get

QUICK = Timeouts(0.6)


@pytest.fixture
def removal_plan(accman_tc):
    rec = engine.mutate_one(accman_tc, "t2", get("token-removal"))
    return concretize(rec.mutant, {}, 0, rec.id)


def run_against(service, plan, timeouts=QUICK):
    with fixtures.serve(service) as url:
        return run(plan, url, timeouts, setup_via_url(fixtures.reset_url(url)))


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def get_from(url: str, path: str, headers=()):
    host, port = url.split("//")[1].split(":")
    conn = http.client.HTTPConnection(host, int(port), timeout=2)
    try:
        conn.request("GET", path, headers=dict(headers))
        r = conn.getresponse()
        return r.status, r.read().decode()
    finally:
        conn.close()


class TestVerdicts:
    def test_rejection_passes(self, removal_plan):
        res = run_against(fixtures.Scripted("403"), removal_plan)
        assert res.verdict == PASS
        assert res.mock_verification == {"ok": True, "mismatches": []}

    def test_acceptance_is_inconclusive_and_flagged(self, removal_plan):
        res = run_against(fixtures.Scripted("200"), removal_plan)
        assert res.verdict == INC
        assert res.reason == "reaction outside the expected behaviour"
        assert res.warnings == [ACCEPTED_ANYWAY]

    def test_silence_fails(self, removal_plan):
        res = run_against(fixtures.Scripted("silent", silence=1.5), removal_plan)
        assert res.verdict == FAIL
        assert "quiescence" in res.reason

    def test_mock_mismatch_forces_inc(self, removal_plan):
        plan = replace(removal_plan, rules=[replace(removal_plan.rules[0], times=2)])
        res = run_against(fixtures.Scripted("403"), plan)
        assert res.verdict == INC and res.reason == MOCK_VIOLATED
        assert res.mock_verification["mismatches"] == [
            {"rule": 0, "request": "GET /evaluateRisk", "expected": 2, "observed": 1}]

    def test_mock_mismatch_does_not_mask_fail(self, removal_plan):
        plan = replace(removal_plan, rules=[replace(removal_plan.rules[0], times=2)])
        res = run_against(fixtures.Scripted("silent", silence=1.5), plan)
        assert res.verdict == FAIL

    def test_unreachable_service(self, removal_plan):
        res = run(removal_plan, f"http://127.0.0.1:{free_port()}", QUICK)
        assert res.verdict == INC and res.reason.startswith(ENVIRONMENT)
        assert exit_code([res]) == 2

    def test_replay_is_identical(self, removal_plan):
        a = run_against(fixtures.Scripted("403"), removal_plan)
        b = run_against(fixtures.Scripted("403"), removal_plan)
        assert a.to_json(timestamps=False) == b.to_json(timestamps=False)

    def test_result_round_trip(self, removal_plan):
        res = run_against(fixtures.Scripted("200"), removal_plan)
        assert TestResult.from_json(res.to_json()) == res


class TestMockServer:
    RULE = MockRule("GET", "/evaluateRisk", (("acc", "99"),), Response(200, (("X", "1"),), "LOWRISK"), times=1)

    def test_matches_and_counts(self):
        with MockServer([self.RULE]) as mock:
            assert get_from(mock.url, "/evaluateRisk", [("acc", "99"), ("extra", "y")]) == (200, "LOWRISK")
            assert get_from(mock.url, "/evaluateRisk", [("acc", "99")]) == (200, "LOWRISK")
            assert get_from(mock.url, "/evaluateRisk", [("acc", "1")])[0] == 404
            assert mock.counts() == [2]
            assert len(mock.unexpected()) == 1

    def test_header_names_case_insensitive(self):
        with MockServer([self.RULE]) as mock:
            assert get_from(mock.url, "/evaluateRisk", [("ACC", "99")])[0] == 200

    def test_rules_consumed_in_order(self):
        second = replace(self.RULE, response=Response(200, (), "HIGHRISK"))
        with MockServer([self.RULE, second]) as mock:
            bodies = [get_from(mock.url, "/evaluateRisk", [("acc", "99")])[1] for _ in range(3)]
        assert bodies == ["LOWRISK", "HIGHRISK", "HIGHRISK"]

    def test_shutdown_drops_everything_after(self):
        down = replace(self.RULE, response=None, shutdown=True)
        with MockServer([down]) as mock:
            for _ in range(2):
                with pytest.raises((ConnectionError, http.client.HTTPException, OSError)):
                    get_from(mock.url, "/evaluateRisk", [("acc", "99")])
            assert mock.counts() == [1]

    def test_verify(self, removal_plan):
        assert verify_mocks(removal_plan, [1])["ok"]
        assert not verify_mocks(removal_plan, [0])["ok"]
        exempt = replace(removal_plan, rules=[replace(removal_plan.rules[0], exempt=True)])
        assert verify_mocks(exempt, [0])["ok"]


def result(verdict, op="x", **kw):
    return TestResult("m", "n", op, verdict, **kw)


class TestSuite:
    def test_summary(self):
        s = summarize([result(PASS), result(FAIL)])
        assert s["summary"] == {PASS: 1, FAIL: 1, INC: 0}

    def test_empty(self):
        assert summarize([]) == {"summary": {PASS: 0, FAIL: 0, INC: 0}, "perOperator": {}}
        assert run_suite([], "http://127.0.0.1:1")[0] == []

    def test_exit_codes(self):
        assert exit_code([result(PASS), result(INC)]) == 0
        assert exit_code([result(PASS), result(FAIL)]) == 1
        assert exit_code([result(FAIL), result(INC, reason=f"{ENVIRONMENT}: x")]) == 2

    def test_junit(self):
        root = ET.fromstring(junit_xml([result(PASS), result(FAIL, reason="r"), result(INC)]))
        assert (root.get("tests"), root.get("failures"), root.get("skipped")) == ("3", "1", "1")

    def test_run_suite_per_operator(self, accman_tc):
        plans = []
        for slug, sid in (("token-removal", "t2"), ("verb-change", "t0")):
            rec = engine.mutate_one(accman_tc, sid, get(slug))
            plans.append(concretize(rec.mutant, {}, 0, rec.id))
        with fixtures.serve(fixtures.Scripted("403")) as url:
            results, summary = run_suite(plans, url, QUICK, setup_via_url(fixtures.reset_url(url)))
        assert [r.verdict for r in results] == [PASS, INC]
        assert summary["perOperator"]["token-removal"][PASS] == 1
