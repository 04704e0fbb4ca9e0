"""Exception hierarchy shared across the package."""


class OstdError(Exception):
    """Base class for all package errors."""


class ValidationError(OstdError):
    """Input data violates a documented precondition or schema."""


class UnknownTokenError(ValidationError):
    """A surface form is absent from a frozen vocabulary."""


class UndefinedScoreError(OstdError):
    """No n-grams / phrases survived filtering; the score has no value.

    Callers that need a number (the feature layer) catch this and
    substitute a documented default, recording the substitution.
    """


class IndexFileError(OstdError):
    """Base class for index (de)serialization failures."""


class BadMagicError(IndexFileError):
    pass


class VersionMismatchError(IndexFileError):
    pass


class ChecksumError(IndexFileError):
    pass


class CorruptIndexError(IndexFileError):
    """Truncated file or structurally invalid contents."""
