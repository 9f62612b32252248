"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

from __future__ import annotations

import filecmp
import random
import statistics
import time
from collections import Counter

import pytest

from restmut import engine, fixtures, synth
from restmut.cli import pipeline
from restmut.concretize import MockRule, PlanOptions, Response, concretize
from restmut.config import RunConfig
from restmut.engine import S0, S1, S2, compl, mutate
from restmut.ingest import ingest
from restmut.executor import Timeouts, run, run_suite, setup_via_url
from restmut.iots import FAIL, INC, PASS, is_bare_wildcard, maximal_paths_end_in_verdict, pass_sequences, validate
from restmut.operators import OperatorContext, catalog, resolve
from restmut.report import build_report

CORPUS_SEED = 20240
CORPUS_SIZE = 1000
# exposes every operator variant (expired and other-session tokens included)
CTX = OperatorContext(expired_token="expired-0", known_tokens=("t-1", "t-77"))


@pytest.fixture
def verdict_line(capsys):
    def emit(n: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[acceptance {n}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def corpus():
    return synth.corpus(CORPUS_SEED, CORPUS_SIZE, max_steps=20)


@pytest.fixture(scope="module")
def s0_mutants(corpus):
    """S0 mutants per (test case, operator), with the time spent generating them."""
    start = time.perf_counter()
    out = {(tc.name, op.slug): mutate([tc], op, S0, 0, CTX) for tc in corpus for op in catalog()}
    return out, time.perf_counter() - start


def brute_force(tc, op) -> int:
    on_pass = {s for seq in pass_sequences(tc) for s in seq}
    n = 0
    for s in on_pass:
        ev = s.event
        if ev is None or ev.params.get("to") != tc.sut_id:
            continue
        if (ev.direction == "?" or "mock" in s.labels) and op.condition(s):
            n += len(op.variants(s, CTX))
    return n


@pytest.mark.slow
def test_1_structural_soundness(corpus, s0_mutants, verdict_line):
    mutants, generated = s0_mutants
    start = time.perf_counter()
    assert len(corpus) == CORPUS_SIZE and all(len(tc.steps) <= 20 and not validate(tc) for tc in corpus)
    total = violations = 0
    for recs in mutants.values():
        for r in recs:
            total += 1
            if validate(r.mutant) or not maximal_paths_end_in_verdict(r.mutant):
                violations += 1
    elapsed = generated + time.perf_counter() - start
    ok = violations == 0 and elapsed < 120
    verdict_line(1, "structural soundness", ok,
                 f"{total} mutants from {CORPUS_SIZE} cases x {len(catalog())} operators, "
                 f"{violations} violations, {elapsed:.1f}s")


@pytest.mark.slow
def test_2_count_oracle(corpus, s0_mutants, verdict_line):
    mutants, _ = s0_mutants
    ops = catalog()
    mismatches = over_s2 = s1_over_s0 = 0
    for tc in corpus:
        for op in ops:
            s0 = len(mutants[(tc.name, op.slug)])
            if s0 != brute_force(tc, op):
                mismatches += 1
            if s0 == 0:
                continue
            s1 = len(mutate([tc], op, S1, 0, CTX, check=False))
            s2 = len(mutate([tc], op, S2(2), 0, CTX, check=False))
            over_s2 += s2 > 2
            s1_over_s0 += s1 > s0
    ok = mismatches == 0 and over_s2 == 0 and s1_over_s0 == 0
    verdict_line(2, "count oracle", ok,
                 f"{mismatches} count mismatches, {over_s2} cases with |S2(2)|>2, {s1_over_s0} with |S1|>|S0|")


def test_3_token_removal_reproduction(accman_tc, verdict_line):
    op = resolve("token-removal")[0]
    (mock_ok,) = [sid for sid in engine.mutable_steps(op, accman_tc) if "mock" in accman_tc.step(sid).labels]
    assert accman_tc.step(mock_ok).event.label == "/ok"
    rec = engine.mutate_one(accman_tc, mock_ok, op)
    plan = concretize(rec.mutant, {}, 0, rec.id)
    (branch,) = plan.pass_matchers()
    statuses = [c for c in range(100, 600) if branch.matches(c, "", False)]
    expected_rule = MockRule("GET", "/evaluateRisk", (("acc", "99"), ("token", "1234")), Response(200, (), "LOWRISK"), times=1)
    ok = statuses == [401, 403] and plan.rules == [expected_rule] and len(plan.sends()) == 1
    verdict_line(3, "token removal reproduction", ok, f"pass statuses {statuses}, rules {[r.to_json() for r in plan.rules]}")


def _suite(service, tcs):
    ops = resolve(None)
    recs = engine.mutate_all(tcs, ops, S0)
    opts = PlanOptions(session_delay=0.6)
    plans = [concretize(r.mutant, {}, 0, r.id, opts) for r in recs]
    with fixtures.serve(service) as url:
        results, _ = run_suite(plans, url, Timeouts(0.6), setup_via_url(fixtures.reset_url(url)))
    return build_report(results, weaknesses=fixtures.WEAKNESSES)


@pytest.mark.slow
def test_4_seeded_weaknesses(accman_tc, verdict_line):
    (session,) = ingest(fixtures.asset("accman_session.jsonl"), "AccMan")
    tcs = [accman_tc, session]
    vulnerable = _suite(fixtures.AccMan(False, session_ttl=0.3, stall=2.0), tcs)
    secure = _suite(fixtures.AccMan(True, session_ttl=0.3), tcs)
    missed = [w for w, hits in vulnerable["weaknesses"].items() if not hits]
    ok = not missed and secure["summary"][FAIL] == 0 and vulnerable["summary"][FAIL] >= 1
    verdict_line(4, "seeded weaknesses", ok,
                 f"vulnerable {vulnerable['summary']}, missed {missed}; secure {secure['summary']}")


def _timed(tcs, ops, repeats=3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        engine.mutate_all(tcs, ops, S0)
        best = min(best, time.perf_counter() - start)
    return best


@pytest.mark.slow
def test_5_scaling_shape(verdict_line):
    ops = resolve(None)
    sizes = (10, 40, 70, 100)
    corpora = {n: synth.linear_corpus(5, n, 10) for n in sizes}
    start = time.perf_counter()
    for n in sizes:
        engine.mutate_all(corpora[n], ops, S0)
    total = time.perf_counter() - start
    times = [_timed(corpora[n], ops) for n in sizes]
    r2 = statistics.correlation(sizes, times) ** 2
    lengths = (4, 10, 25, 50, 100)
    by_length = [_timed(synth.linear_corpus(6, 20, n), ops, repeats=1 if n > 50 else 3) for n in lengths]
    monotone = all(a <= b for a, b in zip(by_length, by_length[1:]))
    ok = total < 5 and r2 >= 0.9 and monotone
    verdict_line(5, "scaling shape", ok,
                 f"{total:.2f}s total for {sizes}, R^2={r2:.3f}, by length {[round(t, 3) for t in by_length]}")


def test_6_determinism(tmp_path, verdict_line):
    log = fixtures.asset_path("accman.jsonl")
    for i in range(2):
        cfg = RunConfig(seed=42, logs=[log, fixtures.asset_path("accman_session.jsonl")], operators=["all"],
                        out_dir=str(tmp_path / f"run{i}"), dry_run=True)
        assert pipeline(cfg) == (0, None)
    compared = differ = 0
    same_names = True
    for sub in ("mutants", "plans"):
        a, b = tmp_path / "run0" / sub, tmp_path / "run1" / sub
        files = sorted(p.name for p in a.iterdir())
        same_names = same_names and files == sorted(p.name for p in b.iterdir())
        _, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
        compared += len(files)
        differ += len(mismatch) + len(errors)
    ok = same_names and differ == 0 and (tmp_path / "run0" / "mutants" / "manifest.json").exists() and compared > 2
    verdict_line(6, "determinism", ok, f"{compared} mutant, manifest and plan files compared, {differ} differ")


def test_7_compl_rules(verdict_line):
    rng = random.Random(707)
    bad = Counter()
    for i in range(200):
        tc = synth.random_incomplete(rng, f"inc{i}")
        out = compl(tc)
        if not set(tc.steps) <= set(out.steps):
            bad["r1"] += 1
        for q in out.states:
            if out.is_verdict(q):
                continue
            steps = out.outgoing.get(q, ())
            if not any(is_bare_wildcard(s.event) for s in steps):
                bad["r2"] += 1
            if not any(s.is_input for s in steps) and not any(s.is_theta for s in steps):
                bad["r3"] += 1
        if validate(out):
            bad["valid"] += 1
    verdict_line(7, "compl rules", not bad, f"200 incomplete cases, violations {dict(bad) or 0}")


def test_8_verdict_semantics(accman_tc, verdict_line):
    rec = engine.mutate_one(accman_tc, "t2", resolve("token-removal")[0])
    plan = concretize(rec.mutant, {}, 0, rec.id)
    got = []
    for service in (fixtures.Scripted("403"), fixtures.Scripted("200"), fixtures.Scripted("silent", silence=1.5)):
        with fixtures.serve(service) as url:
            got.append(run(plan, url, Timeouts(0.6), setup_via_url(fixtures.reset_url(url))).verdict)
    verdict_line(8, "verdict semantics", got == [PASS, INC, FAIL], f"403/200/silent -> {got}")
