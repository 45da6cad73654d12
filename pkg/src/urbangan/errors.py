"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class UrbanGanError(Exception):
    exit_code = 3


class ArgumentError(UrbanGanError, ValueError):
    """Invalid parameter value (usage error)."""

    exit_code = 2


class DomainError(UrbanGanError, ValueError):
    """Input data outside the domain an operation accepts."""


class ParseError(UrbanGanError, ValueError):
    pass


class ShapeError(UrbanGanError, ValueError):
    pass


class StateError(UrbanGanError, RuntimeError):
    pass


class CheckpointError(UrbanGanError):
    pass


class InsufficientSupportError(UrbanGanError):
    pass


class TrainingError(UrbanGanError, ArithmeticError):
    exit_code = 4


def with_context(err: UrbanGanError, context: str) -> UrbanGanError:
    """Return a copy of ``err`` (same class) with ``context`` prefixed to the message."""
    new = type(err)(f"{context}: {err}")
    new.__cause__ = err
    return new
