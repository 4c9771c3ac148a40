"""Exception hierarchy shared by all modules."""


class ImpDmpError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ImpDmpError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ParseError(ImpDmpError, ValueError):
    """Malformed input file."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = str(path)
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ValidationError(ImpDmpError, ValueError):
    """Well-formed input that violates a precondition."""


class DegenerateDataError(ImpDmpError, RuntimeError):
    """A mixture component collapsed during EM."""


class DegenerateVarianceError(ImpDmpError, ValueError):
    """Standard-deviation series without spread; stiffness map is undefined."""


class IntegrationError(ImpDmpError, RuntimeError):
    """Numerical integration diverged or left its manifold."""


class ScalingWarning(UserWarning):
    """A DMP spatial scaling entry was near zero and has been replaced by 1."""


class DegenerateVarianceWarning(UserWarning):
    """An axis without variance signal was mapped to the midpoint stiffness."""
