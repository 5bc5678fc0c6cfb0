"""Exception hierarchy for the shredjoin engine.

Everything raised on purpose derives from ShredJoinError so callers (and the
CLI) can separate user-facing failures from genuine bugs.
"""

from __future__ import annotations


class ShredJoinError(Exception):
    """Base class for all engine errors."""


class OutOfRange(ShredJoinError):
    """A position vector entry points outside its target column (or is 0)."""


class SchemeError(ShredJoinError):
    """A nested scheme violates its construction rules."""


class ExprTypeError(ShredJoinError, TypeError):
    """An NSA expression violates a typing rule.

    Carries the name of the violated rule and the offending subexpression.
    """

    def __init__(self, rule: str, expr: object, detail: str = ""):
        self.rule = rule
        self.expr = expr
        self.detail = detail
        msg = f"typing rule '{rule}' violated at {expr!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class StructuralError(ShredJoinError):
    """A shredded representation failed validation when it had to be sound."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(
            "invalid shredded representation: "
            + "; ".join(str(v) for v in self.violations)
        )


class StoreClashError(ShredJoinError):
    """Two stores to be merged map the same nested scheme (a planner bug)."""


class NameClashError(ShredJoinError):
    """A rename would produce duplicate column or attribute names."""


class NotWellBehaved(ShredJoinError):
    """A binary plan lacks the left-most-leaf key property required here."""


class AssumptionViolated(ShredJoinError):
    """Plan repair ran on a join node without common-key witness atoms."""


class CapExceeded(ShredJoinError):
    """The deliberately naive reference evaluator outgrew its size cap."""


class ParseError(ShredJoinError):
    """Malformed textual input (CSV, schema, query, or plan).

    ``line``/``column`` are 1-based when known, else None.
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" at line {line}"
            if column is not None:
                where += f", column {column}"
        super().__init__(message + where)


class AcyclicityError(ShredJoinError):
    """A cyclic query reached a pipeline that requires a join tree."""
