"""Test-case mutation: mutable steps, ``mark``, ``compl``, selection strategies."""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .iots import (
    FAIL,
    INC,
    MOCK,
    MUTATION,
    PASS,
    TestCase,
    TestStep,
    Violation,
    event_key,
    is_bare_wildcard,
    to_document,
    validate,
    wildcard_output,
)
from .operators import DEFAULT_VARIANT, MutationOperator, OperatorContext, Variant


class InvalidTestCase(ValueError):
    def __init__(self, name: str, report: Sequence[Violation]):
        self.name = name
        self.report = list(report)
        super().__init__(f"test case {name!r} is invalid: " + "; ".join(map(str, report)))


# ---------------------------------------------------------------------------
# mutable steps and mark
# ---------------------------------------------------------------------------

def is_mutable(op: MutationOperator, tc: TestCase, step: TestStep) -> bool:
    ev = step.event
    if ev is None or ev.dest != tc.sut_id:
        return False
    return (ev.is_input or MOCK in step.labels) and op.condition(step)


def mutable_steps(op: MutationOperator, tc: TestCase) -> set[str]:
    """Ids of the steps of ``tc`` on which ``op`` may be applied."""
    return {tc.step_id(s) for s in tc.steps if is_mutable(op, tc, s)}


def pass_path_steps(tc: TestCase) -> list[TestStep]:
    """Steps lying on some sequence from the initial state to ``pass``, depth-first order."""
    goal = tc.verdicts[PASS]
    reaches: dict[str, bool] = {}

    def reach(q: str) -> bool:
        if q == goal:
            return True
        if tc.is_verdict(q):
            return False
        if q not in reaches:
            reaches[q] = False
            reaches[q] = any([reach(s.target) for s in tc.children(q)])
        return reaches[q]

    seq: list[TestStep] = []

    def dfs(q: str) -> None:
        for s in tc.children(q):
            if reach(s.target):
                seq.append(s)
                if not tc.is_verdict(s.target):
                    dfs(s.target)

    if not tc.is_verdict(tc.initial):
        dfs(tc.initial)
    return seq


def mark(tc: TestCase, step_id: str) -> TestCase:
    """Copy of ``tc`` where the given step also carries the ``mutation`` label."""
    target = tc.step(step_id)
    return tc.with_steps(s.relabel(MUTATION) if s is target else s for s in tc.steps)


# ---------------------------------------------------------------------------
# completion
# ---------------------------------------------------------------------------

def compl(tc: TestCase) -> TestCase:
    """Complete ``tc`` with ``!* -> inc`` and ``θ -> fail`` branches.

    Every original step is kept.  Each non-verdict state without an
    unconstrained wildcard output gains ``!* -> inc``; afterwards each
    non-verdict state whose steps are all outputs gains ``θ -> fail``.
    """
    inc = tc.verdicts[INC]
    fail = tc.verdicts[FAIL]
    star = wildcard_output()
    added: list[TestStep] = []
    live = sorted(q for q in tc.states if not tc.is_verdict(q))
    for q in live:
        if not any(is_bare_wildcard(s.event) for s in tc.outgoing.get(q, ())):
            added.append(TestStep(q, star, frozenset(), inc))
    for q in live:
        out = tc.outgoing.get(q, ())
        if not any(s.is_input or s.is_theta for s in out):
            added.append(TestStep(q, None, frozenset(), fail))
    if not added:
        return tc
    return tc.with_steps(list(tc.steps) + added)


# ---------------------------------------------------------------------------
# selection strategies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionStrategy:
    kind: str = "S0"
    n: int = 2

    def __post_init__(self) -> None:
        kind = self.kind.upper()
        if kind not in ("S0", "S1", "S2"):
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be positive")
        object.__setattr__(self, "kind", kind)

    @classmethod
    def parse(cls, text: str, n: int = 2) -> "SelectionStrategy":
        return cls(text, n)

    def __str__(self) -> str:
        return f"S2(n={self.n})" if self.kind == "S2" else self.kind


S0 = SelectionStrategy("S0")
S1 = SelectionStrategy("S1")


def S2(n: int = 2) -> SelectionStrategy:
    return SelectionStrategy("S2", n)


@dataclass
class SelectionContext:
    """Tallies for one (test case, operator) unit of Algorithm-style mutation."""

    tc_name: str
    per_event: Counter = field(default_factory=Counter)
    emitted: int = 0
    event: tuple = ()


def selection(strategy: SelectionStrategy, tcs: Sequence[TestCase], mutants: Sequence, ctx: SelectionContext) -> bool:
    """Whether another mutant of ``ctx.event`` may be generated for this test case."""
    if strategy.kind == "S0":
        return True
    if strategy.kind == "S1":
        return ctx.per_event[ctx.event] == 0
    return ctx.emitted < strategy.n


# ---------------------------------------------------------------------------
# mutation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Origin:
    source: str
    step: str
    operator: str
    variant: int
    seed: int
    variant_name: str = "default"

    def to_json(self) -> dict:
        return {
            "source": self.source,
            "step": self.step,
            "operator": self.operator,
            "variant": self.variant,
            "variantName": self.variant_name,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class MutantRecord:
    id: str
    mutant: TestCase
    origin: Origin

    def to_json(self) -> dict:
        return {"id": self.id, "name": self.mutant.name, "origin": self.origin.to_json()}


def mutant_id(origin: Origin, data: bytes) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(origin.to_json(), sort_keys=True).encode())
    h.update(data)
    return h.hexdigest()[:16]


def step_rng(seed: int, tc_name: str, step_id: str, variant: int) -> random.Random:
    return random.Random(f"{seed}:{tc_name}:{step_id}:{variant}")


def mutate_one(
    tc: TestCase,
    step_id: str,
    op: MutationOperator,
    variant: Variant = DEFAULT_VARIANT,
    seed: int = 0,
    ctx: OperatorContext | None = None,
    strategy: SelectionStrategy = S0,
) -> MutantRecord:
    """mark, change, expected and compl for a single (step, variant)."""
    ctx = ctx or OperatorContext()
    rng = step_rng(seed, tc.name, step_id, variant.index)
    marked = mark(tc, step_id)
    pre = op.change(marked, variant, ctx, rng)
    done = compl(op.expected(pre))
    origin = Origin(tc.name, step_id, op.slug, variant.index, seed, variant.name)
    meta = {
        "operator": op.slug,
        "source": tc.name,
        "step": step_id,
        "variant": variant.index,
        "variantName": variant.name,
        "seed": seed,
        "strategy": str(strategy),
    }
    name = f"{tc.name}--{op.slug}--{step_id}--v{variant.index}"
    done = done.with_steps(done.steps, name=name, meta=meta)
    # compact encoding: same content as the stored file, much cheaper to hash
    data = json.dumps(to_document(done), sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()
    return MutantRecord(mutant_id(origin, data), done, origin)


def mutate(
    tcs: Iterable[TestCase],
    op: MutationOperator,
    strategy: SelectionStrategy = S0,
    seed: int = 0,
    ctx: OperatorContext | None = None,
    check: bool = True,
) -> list[MutantRecord]:
    """Apply ``op`` to every mutable step on a pass-ending sequence, under ``strategy``.

    Output is deterministic for equal inputs and seed.  Duplicate mutants
    (same id) are emitted once.
    """
    ctx = ctx or OperatorContext()
    tcs = list(tcs)
    out: list[MutantRecord] = []
    ids: set[str] = set()
    for tc in tcs:
        if check:
            report = validate(tc)
            if report:
                raise InvalidTestCase(tc.name, report)
        sel = SelectionContext(tc.name)
        for step in pass_path_steps(tc):
            if not is_mutable(op, tc, step):
                continue
            sid = tc.step_id(step)
            sel.event = event_key(step.event)
            for variant in op.variants(step, ctx):
                if not selection(strategy, tcs, out, sel):
                    break
                rec = mutate_one(tc, sid, op, variant, seed, ctx, strategy)
                if rec.id in ids:
                    continue
                ids.add(rec.id)
                out.append(rec)
                sel.per_event[sel.event] += 1
                sel.emitted += 1
    return out


def mutate_all(
    tcs: Iterable[TestCase],
    ops: Iterable[MutationOperator],
    strategy: SelectionStrategy = S0,
    seed: int = 0,
    ctx: OperatorContext | None = None,
) -> list[MutantRecord]:
    tcs = list(tcs)
    out: list[MutantRecord] = []
    for op in ops:
        out.extend(mutate(tcs, op, strategy, seed, ctx))
    return out


def manifest(records: Sequence[MutantRecord], strategy: SelectionStrategy, seed: int,
             ops: Sequence[MutationOperator], sources: int) -> dict:
    counts: Counter = Counter(r.origin.operator for r in records)
    return {
        "schema": "manifest/1",
        "seed": seed,
        "strategy": strategy.kind,
        "n": strategy.n,
        "operators": [op.slug for op in ops],
        "sources": sources,
        "counts": {op.slug: counts.get(op.slug, 0) for op in ops},
        "total": len(records),
        "mutants": [dict(r.to_json(), file=f"{r.id}.json") for r in records],
    }
