"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class LagcError(Exception):
    """Base class for all errors raised by lagc."""


class EvalError(LagcError):
    """Expression evaluation failed (unbound variable, bad operand)."""


class SortError(EvalError):
    pass


class ArithmeticOverflow(EvalError):
    pass


class DivisionByZero(EvalError):
    pass


class ConcretizationError(LagcError):
    """A mapping does not concretise the given state or trace."""


class ChopError(LagcError):
    pass


class TagError(LagcError):
    pass


class ParseError(LagcError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.message = message


class GateError(LagcError):
    """A construct is used outside the language variant that admits it."""


class UnknownMethod(LagcError):
    pass


class AtomicDivergence(LagcError):
    pass


class OwnershipError(LagcError):
    pass


class NoRuleMatches(LagcError):
    pass


class UnsupportedFormula(LagcError):
    pass


class Indeterminate(LagcError):
    """A bounded check could not decide the question."""
