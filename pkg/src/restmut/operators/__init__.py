"""Mutation operators and their catalog."""

from .base import (
    DEFAULT_VARIANT,
    MutationError,
    MutationOperator,
    OperatorContext,
    Variant,
    default_payloads,
    load_dictionary,
    marked_step,
)
from .catalog import DEFAULT_OPERATORS, OPERATOR_TYPES, catalog, get, resolve

__all__ = [
    "DEFAULT_OPERATORS",
    "DEFAULT_VARIANT",
    "MutationError",
    "MutationOperator",
    "OPERATOR_TYPES",
    "OperatorContext",
    "Variant",
    "catalog",
    "default_payloads",
    "get",
    "load_dictionary",
    "marked_step",
    "resolve",
]
