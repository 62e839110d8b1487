class DomainError(ValueError):
    """Raised when a parameter lies outside the domain of an operation."""


class ConvergenceError(RuntimeError):
    """Raised when a truncated sum does not settle within its term cap.

    Args:
        message (str): Human readable description.
        partial: The partial sum reached before giving up.
        terms (int): Number of terms that were added.
    """

    def __init__(self, message, partial=None, terms=0):
        super().__init__(message)
        self.partial = partial
        self.terms = terms


class OracleError(RuntimeError):
    """Raised when the brute-force Gram-Schmidt oracle becomes ill-conditioned."""


class UsageError(ValueError):
    """Raised for command-line misuse or mismatched evaluation requests."""
