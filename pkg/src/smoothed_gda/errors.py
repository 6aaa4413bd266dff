"""Exception taxonomy shared by all modules."""


class SolverError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SolverError, ValueError):
    """An input value lies outside the operation's domain (non-finite, lo > hi, ...)."""


class ConfigurationError(SolverError, ValueError):
    """A problem or run is wired up inconsistently (dimension mismatch, missing blocks, ...)."""


class ParameterError(SolverError, ValueError):
    """Algorithm parameters violate a precondition (e.g. smoothing strength too small)."""


class OracleError(SolverError, RuntimeError):
    """A problem oracle returned a non-finite value."""


class RegionViolationError(SolverError, RuntimeError):
    """An iterate left the operating region over which the Lipschitz constant is certified."""


class ConvergenceFailureError(SolverError, RuntimeError):
    """An inner solve hit its iteration cap before reaching its tolerance."""

    def __init__(self, message, last_residual=None):
        super().__init__(message)
        self.last_residual = last_residual


class UsageError(SolverError, ValueError):
    """An operation was called on inconsistent arguments (non-adjacent states, missing columns)."""


class InsufficientDataError(SolverError, ValueError):
    """Too few usable data points for the requested fit."""


class GenerationError(SolverError, RuntimeError):
    """Random instance generation exhausted its attempt budget."""


class PreconditionError(SolverError, ValueError):
    """A checker's precondition failed; carries the offending report when available."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
