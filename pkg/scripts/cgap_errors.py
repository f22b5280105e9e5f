# scripts/cgap_errors.py
"""Error hierarchy shared by every cGAP module; each class carries its CLI exit code."""
from typing import Optional, Sequence


class CgapError(RuntimeError):
    """Base class for all engine errors."""

    exit_code = 2


class ProgramSyntaxError(CgapError):
    """Malformed program or data file text."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}" if line else message)


class ValidationError(CgapError):
    """Well-formed input that breaks a structural rule."""


class UnknownAtomError(CgapError):
    """An atom that is not part of the ground atom index."""


class NotAModelError(CgapError):
    """The interpretation violates a rule, so coherence is not defined for it."""


class NotVicError(CgapError):
    """A VIC or VIC2-only operation was asked for a program outside that class."""

    def __init__(self, message: str, classification=None):
        self.classification = classification
        super().__init__(message)


class ResourceCapError(CgapError):
    """Enumeration, branching or grounding exceeded its configured cap."""

    exit_code = 3


class NonConvergenceError(CgapError):
    """Fixpoint iteration did not settle within its cap."""

    exit_code = 4

    def __init__(self, message: str, iterations: int = 0, residual: float = 0.0):
        self.iterations = iterations
        self.residual = residual
        super().__init__(message)


class UndefinedRangeError(CgapError):
    """A query range over an empty set of strong equilibria."""

    exit_code = 1


class NoEquilibriumError(CgapError):
    """No strong equilibrium exists for the requested computation."""

    exit_code = 1


class SolverError(CgapError):
    """External solver failed or produced unreadable output."""

    exit_code = 1

    def __init__(self, message: str, output: Optional[Sequence[str]] = None):
        self.output = list(output or [])
        super().__init__(message)
