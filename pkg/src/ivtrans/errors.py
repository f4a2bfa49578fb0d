"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`IVTransError`. The CLI maps the three families below onto exit codes:
validation problems (2), estimation that did not converge (3) and I/O (4).
"""

from __future__ import annotations


class IVTransError(Exception):
    """Base class for all package errors."""


class ValidationError(IVTransError, ValueError):
    """Inputs violate a documented precondition."""


class DomainError(ValidationError):
    """A scalar argument lies outside the domain of a function."""


class ShapeError(ValidationError):
    """Array dimensions do not line up."""


class InsufficientDataError(ValidationError):
    pass


class SingularDesignError(ValidationError):
    """The instrument Gram matrix W'W is rank deficient or ill-conditioned."""

    def __init__(self, message: str, rcond: float):
        super().__init__(message)
        self.rcond = rcond


class ParseError(ValidationError):
    """A delimited input file could not be turned into a dataset."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class MissingColumnError(ParseError):
    pass


class MissingValueError(ParseError):
    pass


class NonNumericError(ParseError):
    pass


class InvalidStatusError(ParseError):
    pass


class NonPositiveTimeError(ParseError):
    pass


class AllCensoredError(ParseError):
    pass


class ReportIOError(IVTransError, OSError):
    """A report or input file could not be read or written."""


class PreconditionError(ValidationError):
    pass


class DegenerateRiskSetError(IVTransError):
    def __init__(self, message: str, event_index: int):
        super().__init__(message)
        self.event_index = event_index


class BracketError(IVTransError):
    def __init__(self, message: str, event_time: float):
        super().__init__(message)
        self.event_time = event_time


class ConvergenceError(IVTransError):
    """Iterative estimation failed; subclasses carry diagnostics."""


class NonConvergenceError(ConvergenceError):
    """Outer iteration cap reached without meeting both stopping rules."""

    def __init__(self, message: str, beta, score_norm: float, iterations: int, result=None):
        super().__init__(message)
        self.beta = beta
        self.score_norm = score_norm
        self.iterations = iterations
        self.result = result


class SolverStallError(ConvergenceError):
    """Step halving could not reduce the score norm."""

    def __init__(self, message: str, beta, score_norm: float, iterations: int, result=None):
        super().__init__(message)
        self.beta = beta
        self.score_norm = score_norm
        self.iterations = iterations
        self.result = result


class SingularInformationError(ConvergenceError):
    pass


class InvalidCovarianceError(ConvergenceError):
    def __init__(self, message: str, components=None):
        super().__init__(message)
        self.components = components


class BootstrapInstabilityError(ConvergenceError):
    def __init__(self, message: str, failure_rate: float):
        super().__init__(message)
        self.failure_rate = failure_rate


class CalibrationError(IVTransError):
    pass


class StudyQualityError(ConvergenceError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
