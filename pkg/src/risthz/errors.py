"""Exception hierarchy shared by all modules."""


class RisThzError(Exception):
    """Base class for every error raised by the package."""


class DomainError(RisThzError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PoleError(DomainError):
    """Evaluation at a pole of a meromorphic function."""


class NonConvergenceError(RisThzError, ArithmeticError):
    """A series or quadrature did not reach the requested tolerance."""


class OverflowRangeError(RisThzError, OverflowError):
    """Intermediate values left the double-precision range."""


class ContourConflictError(RisThzError):
    """No vertical Mellin-Barnes contour separates the pole families."""


class CostGuardError(RisThzError):
    """A request exceeds the configured computational budget."""


class DivergenceError(NonConvergenceError):
    """Widening a quadrature window keeps changing the value."""


class DegeneracyError(RisThzError):
    """A residue formula hit coincident poles it does not cover."""


class ConfigError(RisThzError, ValueError):
    """Invalid run configuration."""
