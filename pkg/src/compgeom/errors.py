"""Exception hierarchy shared by the toolkit."""


class CompGeomError(Exception):
    """Base class for all toolkit errors."""


class DomainError(CompGeomError, ValueError):
    """Argument outside the coordinate domain of the operation."""


class PreconditionError(CompGeomError, ValueError):
    """A documented precondition of the operation does not hold."""


class ConvergenceError(CompGeomError, RuntimeError):
    """An iterative solver failed; ``bracket`` holds the best interval found."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class IntegrationError(CompGeomError, RuntimeError):
    """ODE integration failed to meet its tolerance."""


class ChartExceeded(CompGeomError, RuntimeError):
    """A geodesic left the coordinate chart of a test manifold."""


class NoCorrespondingTriangle(CompGeomError, ValueError):
    """The existence conditions for a model comparison triangle fail."""


class NotOnBoundary(CompGeomError, ValueError):
    """Reference point of a triangle is not on the boundary of the region R."""


class ConfigError(CompGeomError, ValueError):
    """A run configuration could not be parsed or validated."""
