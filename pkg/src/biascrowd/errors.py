"""Exception types raised by the library."""


class BiasCrowdError(Exception):
    """Base class for all library errors."""


class ParseError(BiasCrowdError):
    """A CSV/TSV row could not be parsed."""


class DuplicateObservationError(BiasCrowdError):
    """More than one label for the same (worker, task) pair."""


class DomainError(BiasCrowdError):
    """A value violates a domain invariant (label range, class count, ...)."""


class MissingGoldError(BiasCrowdError):
    """An operation requiring gold labels was called without them."""


class ZeroVarianceError(BiasCrowdError):
    """Correlation requested for a constant vector."""


class CoverageError(BiasCrowdError):
    """Predictions do not cover every gold-labeled task."""


class PropensityError(BiasCrowdError):
    """A propensity score is nonpositive or otherwise unusable."""


class PosteriorUnderflowError(BiasCrowdError):
    """Every class received a -inf log score for some task."""


class ConfigError(BiasCrowdError):
    """An experiment or solver configuration is invalid."""
