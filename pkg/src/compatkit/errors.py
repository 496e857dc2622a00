"""Exception hierarchy shared by every module."""


class CompatkitError(Exception):
    """Base class for all library errors."""


class InvalidInputError(CompatkitError, ValueError):
    """Argument outside the domain of the operation."""


class SingularError(CompatkitError, ArithmeticError):
    """A matrix that must be positive definite or of full rank is not."""


class ConvergenceError(CompatkitError, RuntimeError):
    """An iterative fit failed to meet its stopping rule."""
