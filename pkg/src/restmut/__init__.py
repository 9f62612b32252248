"""Security mutation testing for RESTful services.

Test cases are IOTS trees (:mod:`restmut.iots`), built from HTTP logs
(:mod:`restmut.ingest`), mutated by security operators
(:mod:`restmut.operators`, :mod:`restmut.engine`) and executed against the
service under test with mocked dependees (:mod:`restmut.concretize`,
:mod:`restmut.executor`).
"""

from .engine import S0, S1, S2, MutantRecord, SelectionStrategy, compl, mark, mutable_steps, mutate
from .iots import Event, TestCase, TestStep, load, store, validate

__all__ = [
    "Event",
    "MutantRecord",
    "S0",
    "S1",
    "S2",
    "SelectionStrategy",
    "TestCase",
    "TestStep",
    "compl",
    "load",
    "mark",
    "mutable_steps",
    "mutate",
    "store",
    "validate",
]

__version__ = "0.1.0"
