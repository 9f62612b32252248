from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import req, resp, step, tc_of
from restmut import iots, synth
from restmut.iots import (
    ACYCLIC,
    DANGLING,
    DETERMINISTIC,
    EVENT_FORM,
    FAIL,
    INC,
    INPUT_RESTRICTED,
    MOCK,
    MOCK_RESTRICTED,
    PASS,
    VERDICT_EVENT,
    VERDICT_TERMINAL,
    Event,
    IOTSError,
    TestCase,
    TestStep,
    events_at,
    pass_sequences,
    validate,
    worst_verdict,
)


def clauses(tc: TestCase) -> set[str]:
    return {v.clause for v in validate(tc)}


class TestValidate:
    def test_accman_is_valid(self, accman_tc):
        assert validate(accman_tc) == []

    def test_two_inputs_violate_input_restriction(self):
        tc = tc_of(step("q0", req("/a"), "q1"), step("q0", req("/b"), "q2"),
                   step("q1", resp(200), "pass"), step("q2", resp(200), "pass"))
        report = validate(tc)
        assert [v.clause for v in report] == [INPUT_RESTRICTED]
        assert report[0].where == "q0"

    def test_input_with_theta_violates_input_restriction(self):
        tc = tc_of(step("q0", req("/a"), "q1"), step("q0", None, "fail"), step("q1", resp(200), "pass"))
        assert clauses(tc) == {INPUT_RESTRICTED}

    def test_two_mock_responses(self):
        tc = tc_of(
            step("q0", req("/a"), "q1"),
            step("q1", req("/dep", src="S", dst="D"), "q2", MOCK),
            step("q2", resp(200, src="D", dst="S"), "q3", MOCK),
            step("q2", resp(404, src="D", dst="S"), "q4", MOCK),
            step("q3", resp(200), "pass"),
            step("q4", resp(200), "pass"),
        )
        assert clauses(tc) == {MOCK_RESTRICTED}

    def test_nondeterministic(self):
        tc = tc_of(step("q0", req("/a"), "q1"), step("q1", resp(200), "q2"), step("q1", resp(200), "q3"),
                   step("q2", None, "pass"), step("q3", None, "fail"))
        assert DETERMINISTIC in clauses(tc)

    def test_cycle(self):
        tc = tc_of(step("q0", req("/a"), "q1"), step("q1", resp(200), "q0"))
        assert ACYCLIC in clauses(tc)

    def test_join_is_not_a_tree(self):
        tc = tc_of(step("q0", req("/a"), "q1"), step("q1", resp(200), "q3"), step("q1", resp(404), "q3"),
                   step("q3", resp(200), "pass"))
        assert ACYCLIC in clauses(tc)

    def test_input_into_verdict(self):
        tc = tc_of(step("q0", req("/a"), "pass"))
        assert clauses(tc) == {VERDICT_EVENT}

    def test_verdict_state_cannot_continue(self):
        tc = tc_of(step("q0", req("/a"), "q1"), step("q1", resp(200), "pass"), step("pass", resp(200), "fail"))
        assert VERDICT_TERMINAL in clauses(tc)

    def test_theta_self_loop_on_verdict_allowed(self):
        tc = tc_of(step("q0", req("/a"), "q1"), step("q1", resp(200), "pass"), step("pass", None, "pass"))
        assert validate(tc) == []

    def test_event_without_endpoints(self):
        ev = Event("?", "/a", {"method": "GET", "path": "/a", "to": "S"})
        tc = tc_of(step("q0", ev, "q1"), step("q1", resp(200), "pass"))
        assert clauses(tc) == {EVENT_FORM}

    def test_event_neither_request_nor_response(self):
        ev = Event("!", "/x", {"from": "S", "to": "C"})
        tc = tc_of(step("q0", req("/a"), "q1"), step("q1", ev, "pass"))
        assert clauses(tc) == {EVENT_FORM}

    def test_dangling_state(self, accman_tc):
        bad = TestCase("x", "S", "q0", frozenset({"q0"}), (step("q0", req("/a"), "q9"),))
        # states normally absorb step endpoints; construct one that does not
        object.__setattr__(bad, "states", frozenset({"q0", "pass", "fail", "inc"}))
        assert DANGLING in clauses(bad)

    def test_violation_per_clause(self):
        tc = tc_of(
            step("q0", req("/a"), "q1"), step("q0", req("/b"), "q2"),
            step("q1", req("/c"), "pass"), step("q2", resp(200), "pass"),
        )
        assert clauses(tc) == {INPUT_RESTRICTED, VERDICT_EVENT}

    def test_pure(self, accman_tc):
        assert validate(accman_tc) == validate(accman_tc)


class TestEventsAndSequences:
    def test_events_at_initial(self, accman_tc):
        (ev,) = events_at(accman_tc, accman_tc.initial)
        assert ev.is_input and ev.label == "/checkAccountRisk"

    def test_events_at_verdict(self, accman_tc):
        assert events_at(accman_tc, PASS) == set()

    def test_events_at_mixed(self):
        a, b = resp(200), resp(404)
        tc = tc_of(step("q0", req("/x"), "q1"), step("q1", a, "pass"), step("q1", b, "inc"), step("q1", None, "fail"))
        assert events_at(tc, "q1") == {a, b, None}

    def test_events_at_unknown(self, accman_tc):
        with pytest.raises(KeyError):
            events_at(accman_tc, "nowhere")

    def test_accman_single_sequence(self, accman_tc):
        seqs = pass_sequences(accman_tc)
        assert len(seqs) == 1 and len(seqs[0]) == 4

    def test_fail_only(self):
        tc = tc_of(step("q0", req("/a"), "q1"), step("q1", resp(500), "fail"))
        assert pass_sequences(tc) == []

    def test_binary_tree(self):
        tc = tc_of(step("q0", req("/a"), "q1"), step("q1", resp(200), "pass"), step("q1", resp(404), "q2"),
                   step("q2", req("/b"), "q3"), step("q3", resp(200), "pass"))
        two_leaves = tc_of(
            step("q0", req("/a"), "q1"),
            step("q1", resp(200), "q2"), step("q1", resp(404), "q3"),
            step("q2", resp(201), "pass"), step("q3", resp(202), "pass"),
        )
        assert len(pass_sequences(two_leaves)) == 2
        assert [len(s) for s in pass_sequences(tc)] == [2, 4]

    def test_worst_verdict(self):
        assert worst_verdict([PASS, INC, PASS]) == INC
        assert worst_verdict([INC, FAIL]) == FAIL
        assert worst_verdict([]) == PASS


class TestSerialization:
    def test_shipped_document_round_trips(self, accman_tc):
        from restmut import fixtures

        raw = fixtures.asset("accman_check.json").encode()
        assert iots.store(accman_tc) == raw == iots.canonicalize(raw)

    def test_degenerate(self):
        doc = {"schema": "iots/1", "sutId": "S", "initial": "pass", "states": ["pass"], "steps": []}
        tc = iots.load(json.dumps(doc))
        assert validate(tc) == [] and tc.steps == ()

    def test_undefined_state(self):
        doc = {"schema": "iots/1", "sutId": "S", "initial": "q0", "states": ["q0"],
               "steps": [{"from": "q0", "to": "q9", "event": None}]}
        with pytest.raises(IOTSError, match="q9"):
            iots.load(json.dumps(doc))

    def test_malformed_json(self):
        with pytest.raises(IOTSError, match="malformed"):
            iots.load(b"{not json")

    def test_schema_violation(self):
        with pytest.raises(IOTSError, match="schema"):
            iots.load(json.dumps({"schema": "iots/1", "initial": "q0"}))

    def test_theta_self_loops_are_normalised_away(self, accman_tc):
        doc = json.loads(iots.store(accman_tc))
        doc["steps"].append({"from": "pass", "to": "pass", "event": None, "labels": []})
        assert iots.load(json.dumps(doc)) == accman_tc
        assert iots.canonicalize(json.dumps(doc)) == iots.store(accman_tc)

    def test_canonicalize_is_order_insensitive(self, accman_tc):
        doc = json.loads(iots.store(accman_tc))
        doc["steps"].reverse()
        doc["states"].reverse()
        assert iots.canonicalize(json.dumps(doc, indent=1)) == iots.store(accman_tc)

    def test_wildcard_kept_verbatim(self):
        tc = tc_of(step("q0", req("/a", body="*"), "q1"), step("q1", resp(200), "pass"))
        assert iots.load(iots.store(tc)).steps[0].event.body == "*"


def _tc(seed: int) -> TestCase:
    return synth.random_test_case(random.Random(seed), f"h{seed}")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_generated_cases_are_valid_and_restricted(seed):
    tc = _tc(seed)
    assert validate(tc) == []
    assert len(tc.steps) <= 20
    for q in tc.states:
        evs = events_at(tc, q)
        inputs = [e for e in evs if e is not None and e.is_input]
        assert len(inputs) <= 1
        assert not (None in evs and inputs)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_store_load_round_trip(seed):
    tc = _tc(seed)
    data = iots.store(tc)
    assert iots.store(iots.load(data)) == data
    assert iots.canonicalize(data) == data


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_pass_sequences_are_connected(seed):
    tc = _tc(seed)
    steps = set(tc.steps)
    for seq in pass_sequences(tc):
        assert seq[0].source == tc.initial and seq[-1].target == tc.verdicts[PASS]
        assert all(s in steps for s in seq)
        assert all(a.target == b.source for a, b in zip(seq, seq[1:]))
    assert pass_sequences(tc) == pass_sequences(tc)


def test_steps_are_immutable(accman_tc):
    with pytest.raises(Exception):
        accman_tc.steps[0].labels = frozenset()  # type: ignore[misc]
    assert isinstance(accman_tc.steps[0], TestStep)
