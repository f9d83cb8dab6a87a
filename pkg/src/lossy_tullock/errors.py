"""Exception hierarchy shared by all modules."""


class GameError(Exception):
    """Base class for every error raised by this package."""


class SpecificationError(GameError, ValueError):
    """Inputs with inconsistent dimensions or malformed fields."""


class InvalidSpecError(SpecificationError):
    """A game description that violates a modelling invariant."""


class InfeasibleError(GameError):
    """A constraint set with no feasible point."""


class UnboundedError(GameError):
    """A constraint set that is not bounded."""


class PreconditionError(GameError, ValueError):
    """An operation was called outside its documented domain."""


class NumericalError(GameError, ArithmeticError):
    """An iterative routine failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DomainError(GameError, ValueError):
    """A function was evaluated outside of its domain."""


class SamplingError(GameError):
    """Could not draw the requested feasible samples."""
