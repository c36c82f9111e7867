"""Exception types raised across the toolkit."""


class FraccapError(Exception):
    """Base class for toolkit errors."""


class PreconditionError(FraccapError, ValueError):
    """An operation was called outside its documented domain."""


class ValidationError(FraccapError, ValueError):
    """A space, file or scenario failed validation."""


class DegenerateError(FraccapError):
    """The quantity is undefined for this input (e.g. empty zero set)."""


class HypothesisViolation(FraccapError):
    """The assumption of a quantitative estimate fails on the given data.

    ``witness`` carries the offending value (a level ``s``, a pair, ...).
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class TooManyCandidates(FraccapError):
    """Set-cover candidate family too large for the requested mode."""
