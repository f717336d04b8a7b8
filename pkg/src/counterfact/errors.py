"""Exception types raised across the package."""


class CounterfactError(Exception):
    """Base class for all package errors."""


class ContractError(CounterfactError, ValueError):
    """A caller broke a documented precondition (shapes, lengths, ranges)."""


class InvalidInputError(CounterfactError, ValueError):
    """Input data is unusable: non-finite values, empty sets, bad labels."""


class DeserializationError(CounterfactError, ValueError):
    """A model file could not be decoded.  ``field`` names the culprit."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DivergenceError(CounterfactError, RuntimeError):
    """The solver produced a non-finite objective."""


class SchemaError(CounterfactError, ValueError):
    """A tabular file is missing required columns or has duplicate names."""


class ParseError(CounterfactError, ValueError):
    """A tabular cell could not be parsed.  ``row`` and ``col`` are 1-based."""

    def __init__(self, message, row, col):
        super().__init__(message)
        self.row = row
        self.col = col


class RatingLookupError(CounterfactError, KeyError):
    """Unknown rating symbol or out-of-range ordinal."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DegenerateSampleError(CounterfactError, ValueError):
    """Paired differences have zero variance; the t statistic is undefined."""


class UndefinedRateError(CounterfactError, ValueError):
    """Match rate requested for an empty suggestion set."""


class DataIntegrityError(CounterfactError, ValueError):
    """Aggregated records disagree with the configuration that produced them."""


class ConfigError(CounterfactError, ValueError):
    """Unknown or malformed configuration key."""
