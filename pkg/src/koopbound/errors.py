"""Exception types shared across the toolkit."""


class KoopboundError(Exception):
    """Base class for all toolkit errors."""


class ParseError(KoopboundError):
    """Malformed input file; the message names the offending line."""


class DimensionMismatchError(KoopboundError):
    """Array or file dimensions disagree with the expected shape."""


class DataError(KoopboundError):
    """Input data violates a value constraint (non-finite entries, duplicate ids)."""


class EmptyInputError(KoopboundError):
    """An operation received an empty collection."""


class InsufficientDataError(KoopboundError):
    """Not enough samples or steps for the requested computation."""


class DegenerateInputError(KoopboundError):
    """Input is identically zero or otherwise too degenerate to factor."""


class PoleProximityError(KoopboundError):
    """Frequency evaluation requested too close to a system pole."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class ParameterError(KoopboundError):
    """A parameter lies outside its documented range."""


class DivergenceError(KoopboundError):
    """A geometric series bound diverges for the given discount factor."""


class SchemaError(KoopboundError):
    """A JSON document is missing a required field or holds a wrong type."""
