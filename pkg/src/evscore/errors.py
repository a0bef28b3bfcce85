"""Exception hierarchy shared by all evscore modules."""


class EvScoreError(Exception):
    """Base class for every error raised by this package."""


class DomainError(EvScoreError, ValueError):
    """Argument outside the mathematical domain of a function."""


class PoleError(DomainError):
    """Evaluation at a pole (e.g. the gamma function at a non-positive integer)."""


class ConvergenceError(EvScoreError, ArithmeticError):
    """A series or continued fraction did not converge within its term budget."""


class ShapeRangeError(DomainError):
    """Shape parameter outside the range where a score is finite."""


class InfeasibleScaleError(DomainError):
    """A linear predictor produced a non-positive scale under the identity link."""


class InfeasibleStartError(EvScoreError):
    """No feasible starting point could be found for an optimizer."""


class SingularHessianError(EvScoreError, ArithmeticError):
    """The numerical Hessian of an objective is singular at the optimum."""


class DataError(EvScoreError):
    """Input data is malformed, incomplete or unusable."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RankDeficiencyError(DomainError):
    """A regression design matrix does not have full column rank."""
