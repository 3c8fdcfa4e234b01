"""Exception hierarchy shared by every module."""


class RAEError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(RAEError, ValueError):
    """Invalid parameters (ranges, epsilon floors, orderings)."""


class ValidationError(RAEError, ValueError):
    """Input data with the wrong shape, non-finite entries or bad probabilities."""


class ParseError(RAEError, ValueError):
    """A file could not be parsed. Carries line/field context in the message."""


class NumericalIntegrityError(RAEError, ArithmeticError):
    """A quantity that must be non-negative came out clearly negative."""


class CapabilityError(RAEError):
    """The request is outside what the routine is able to do (e.g. grid too large)."""


class SolverError(RAEError):
    """Iterative solver failed to converge.

    Attributes:
        last_iterate: the final iterate reached.
        residual: the KKT residual at that iterate.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class OracleError(RAEError):
    """A best-response oracle produced non-finite values."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
