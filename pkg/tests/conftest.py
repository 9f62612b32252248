from __future__ import annotations

import pytest

from restmut import fixtures, iots
from restmut.iots import INPUT, OUTPUT, Event, TestCase, TestStep

SUT = "S"


def req(path: str, method: str = "GET", src: str = "C", dst: str = SUT, **params) -> Event:
    direction = INPUT if dst == SUT else OUTPUT
    return Event(direction, path.split("?")[0], {"from": src, "to": dst, "method": method, "path": path, **params})


def resp(status: int, src: str = SUT, dst: str = "C", label: str | None = None, **params) -> Event:
    return Event(OUTPUT, label or f"/{status}", {"from": src, "to": dst, "status": status, **params})


def step(src: str, ev: Event | None, dst: str, *labels: str) -> TestStep:
    return TestStep(src, ev, frozenset(labels), dst)


def tc_of(*steps: TestStep, name: str = "t", sut: str = SUT) -> TestCase:
    return TestCase.build(name, sut, steps)


@pytest.fixture
def accman_tc() -> TestCase:
    return iots.load_file(fixtures.asset_path("accman_check.json"))


@pytest.fixture
def linear3() -> TestCase:
    """Three request/response pairs to the service, ending in pass."""
    return tc_of(
        step("q0", req("/a"), "q1"),
        step("q1", resp(200), "q2"),
        step("q2", req("/b", "POST", body="x=1"), "q3"),
        step("q3", resp(201), "q4"),
        step("q4", req("/c"), "q5"),
        step("q5", resp(200), "pass"),
    )
