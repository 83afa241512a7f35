"""Exception types shared across the pipeline."""


class EquityError(Exception):
    """Base class for every error raised by this package."""


class InputValidationError(EquityError, ValueError):
    """A value failed validation; ``field`` names the offender when known."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DomainError(EquityError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(EquityError):
    """Bad configuration, missing columns, unknown names, empty facility lists."""


class RankDeficiencyError(EquityError):
    pass


class SeparationError(EquityError):
    """Fitted probabilities collapsed to 0 or 1; the MLE does not exist."""
