"""Exception types shared across the package."""


class AdaptRdError(Exception):
    """Base class for all package errors."""


class ConfigError(AdaptRdError):
    """Invalid configuration or parameters (CLI exit code 2)."""


class IngestionError(AdaptRdError):
    """A file row or field failed schema validation."""


class ValidationError(AdaptRdError):
    """A domain invariant was violated."""


class InsufficientDataError(AdaptRdError):
    """Not enough observations to perform the requested operation."""


class DegenerateSupportError(AdaptRdError):
    """Input values have too little spread (e.g. all equal)."""


class EffectiveSupportError(AdaptRdError):
    """No observations close enough to the evaluation point for kernel weighting."""


class NumericError(AdaptRdError):
    """Non-finite input or unstable numeric operation."""


class RankDeficiencyError(NumericError):
    """Information matrix remained singular after ridge jitter."""


class NonConvergenceError(NumericError):
    """Iterative fit did not converge; carries the last iterate in ``last_fit``."""

    def __init__(self, message, last_fit=None):
        super().__init__(message)
        self.last_fit = last_fit
