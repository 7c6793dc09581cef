"""Shared exception types.

All of these subclass ValueError so callers that only care about
"bad input" can catch one thing; the subclasses exist for callers
that need to tell the cases apart (the service maps them to
different HTTP statuses, the CLI to exit codes).
"""


class InsufficientDataError(ValueError):
    """A computation was asked of an empty or too-small input."""


class UndefinedMetricError(ValueError):
    """The metric has no defined value for this input (e.g. zero denominator)."""


class ParseError(ValueError):
    """A file or record could not be parsed; the message names the location."""
