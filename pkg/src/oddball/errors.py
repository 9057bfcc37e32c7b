"""Exception hierarchy shared across the package.

Two coarse kinds matter to callers: ``UsageError`` covers misconfiguration
(bad flag combinations, thresholds outside a method's domain, unsupported
operations) and maps to CLI exit code 2; every other ``OddballError`` is a
data failure (malformed dumps, broken invariants, evaluation mismatches)
and maps to exit code 1.
"""


class OddballError(Exception):
    """Base class for all domain errors raised by this package."""


class UsageError(OddballError):
    """Invalid configuration or request, independent of the data."""


class InvalidInputError(OddballError):
    """Non-finite or out-of-range probability input."""


class NormalizationError(OddballError):
    """Distribution mass deviates from 1 beyond the accepted tolerance."""


class InvalidTruncationError(OddballError):
    """Truncated distribution with residual mass but a zero smallest entry."""


class DumpParseError(OddballError):
    """Malformed dump line; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.reason = message


class DumpValidationError(OddballError):
    """A dump record violates a type invariant; carries sentence id and field."""

    def __init__(self, sentence_id: str, field: str, message: str, line: int | None = None):
        super().__init__(f"sentence {sentence_id!r}, field {field!r}: {message}")
        self.sentence_id = sentence_id
        self.field = field
        self.reason = message
        self.line = line


class AlignmentError(OddballError):
    """Model tokens and dataset tokens cannot be reconciled by char spans."""

    def __init__(self, message: str, span: tuple[int, int] | None = None):
        super().__init__(message)
        self.span = span


class ScoringError(OddballError):
    """Scoring could not produce one score per dataset token."""


class CombinationError(OddballError):
    """Two score lists do not cover the same dataset tokens."""


class UnsupportedMethodError(UsageError):
    """Operation not defined for the requested method (e.g. top-K combine)."""


class InvalidThresholdError(UsageError):
    """Threshold outside the method's score domain."""


class DatasetParseError(OddballError):
    """Malformed labeled-dataset TSV; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.reason = message


class EvalError(OddballError):
    """Scores and gold labels cannot be paired up."""
