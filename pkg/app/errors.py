"""
Exception hierarchy.

Bad input is a ValueError, failed processing is a RuntimeError. Numerical
outcomes (a failed certificate, a falsified assumption, a solve that did not
converge) are reported as data and never raised.
"""

from typing import Optional


class IntegrableError(Exception):
    """Root of every error raised by the package."""


# =========================
# INPUT / SPECIFICATION
# =========================
class InputError(IntegrableError, ValueError):
    pass


class SpecificationError(IntegrableError, ValueError):
    pass


class DefinitionError(IntegrableError, ValueError):
    """Problem definition could not be loaded."""


class ParseError(DefinitionError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class UnknownPrimitiveError(DefinitionError):
    pass


class ConstantRangeError(DefinitionError):
    def __init__(self, name: str, value: float, assumption: str, constraint: str):
        self.name = name
        self.value = value
        self.assumption = assumption
        super().__init__(f"{name}={value} violates {assumption}: {constraint}")


# =========================
# EVALUATION
# =========================
class EvaluationError(IntegrableError, RuntimeError):
    def __init__(self, message: str, t: Optional[float] = None, x: Optional[float] = None):
        self.t = t
        self.x = x
        where = f" at t={t!r}, x={x!r}" if t is not None else ""
        super().__init__(f"{message}{where}")


class TruncationError(IntegrableError, RuntimeError):
    pass
