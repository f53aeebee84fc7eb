"""Exception hierarchy shared by all solvers."""


class InfoAcqError(Exception):
    """Base class for package errors."""


class DomainError(InfoAcqError, ValueError):
    """An argument lies outside the domain of a function."""


class UnsupportedVariantError(InfoAcqError, TypeError):
    """The cost model does not support the requested operation."""


class ConfigurationError(InfoAcqError, ValueError):
    """Solver settings are inconsistent (CFL violation, bad grid, ...)."""


class NumericalFailure(InfoAcqError, ArithmeticError):
    """A non-finite value appeared during a computation."""


class IntegrationFailure(NumericalFailure):
    """An ODE integration lost a structural property it must preserve."""


class ShootingError(InfoAcqError, RuntimeError):
    """The characteristic flow could not be inverted at a point."""


class NoConvergence(InfoAcqError, RuntimeError):
    """An iterative method hit its cap without meeting its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DomainCapError(DomainError):
    """A state trajectory left the computational grid."""
