"""Exception types shared across the package."""


class CountBPError(Exception):
    """Base class for all errors raised by countbp."""


class GraphError(CountBPError, ValueError):
    """Malformed factor graph (dimension mismatch, repeated or dangling argument)."""


class EvidenceError(CountBPError, ValueError):
    """Evidence refers to an unknown variable or an out-of-range state."""


class ParseError(CountBPError, ValueError):
    """Input text could not be parsed. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContradictionError(CountBPError):
    """Inference hit an all-zero message, belief or factor table."""


class CompressionError(CountBPError):
    """The requested signature mode cannot produce a sound compressed graph."""


class BudgetExceeded(CountBPError):
    """The exact counter was asked to count a formula larger than its budget."""


class Conflict(CountBPError):
    """Unit propagation derived the empty clause; the branch has no models."""
