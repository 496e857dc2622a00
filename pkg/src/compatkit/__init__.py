"""Divergence P-values, decision P-values, S-values and compatibility intervals."""

from compatkit.errors import (
    CompatkitError,
    ConvergenceError,
    InvalidInputError,
    SingularError,
)

__version__ = "0.1.0"

__all__ = [
    "CompatkitError",
    "ConvergenceError",
    "InvalidInputError",
    "SingularError",
    "__version__",
]
