"""Exception taxonomy shared by all modules."""


class ConvexLabError(Exception):
    """Base class for all package errors."""


class UsageError(ConvexLabError, ValueError):
    """A call violated an operation precondition (dimension mismatch, bad mode, ...)."""


class ConstructionError(ConvexLabError, ValueError):
    """A body or measure specification is invalid (singular matrix, asymmetry, ...)."""


class DomainError(ConvexLabError, ValueError):
    """A scalar argument lies outside the mathematical domain of the operation."""


class BudgetError(ConvexLabError, ValueError):
    """The request exceeds a hard computational cap, or the sample budget is too small.

    The message always names the offending cap or the minimal budget that
    would be accepted, so callers can retry deliberately.
    """


class UnsupportedOperationError(ConvexLabError, TypeError):
    """The operation is well defined but not available for this variant."""
