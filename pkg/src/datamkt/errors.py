"""Exception types shared across the package."""


class MarketError(Exception):
    """Base class for all datamkt errors."""


class DimensionMismatchError(MarketError):
    """Operands describe different numbers of sellers or buyers."""


class UnsupportedModelError(MarketError):
    """Operation is only defined for one externality model."""


class BudgetExceededError(MarketError):
    """Exhaustive enumeration would exceed the configured budget."""


class ParseError(MarketError):
    """A structured-text document is malformed."""


class GenerationError(MarketError):
    """A random generator could not satisfy its constraints."""


class LearnerStateError(MarketError):
    """A learner was driven outside its contract (e.g. updating an inactive arm)."""


class InvariantError(MarketError):
    """An internal invariant was breached at runtime."""
