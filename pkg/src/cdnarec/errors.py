"""Exception hierarchy.

Every domain failure carries a short machine-readable ``code`` which the
command line prints as ``error:<code>:<message>``.
"""


class CdnaError(Exception):
    code = "domain"


class ParseError(CdnaError, ValueError):
    code = "parse"


class MalformedHeaderError(ParseError):
    code = "malformed-header"


class TruncatedPayloadError(ParseError):
    code = "truncated-payload"


class MultiChannelError(ParseError):
    code = "multi-channel"


class GriddingError(CdnaError):
    code = "gridding"

    def __init__(self, message, axis=None):
        if axis is not None:
            message = f"{axis}: {message}"
        super().__init__(message)
        self.axis = axis


class NoPeriodicityError(GriddingError):
    code = "no-periodicity"


class InsufficientPeaksError(GriddingError):
    code = "insufficient-peaks"


class DegenerateThresholdError(CdnaError):
    code = "degenerate-threshold"


class NonFiniteError(CdnaError):
    """Raised when training produces NaN/inf; ``trace`` holds the epochs so far."""

    code = "non-finite"

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NotConvergedError(CdnaError):
    code = "not-converged"


class GridCountMismatchError(CdnaError):
    code = "count-mismatch"

    def __init__(self, axis, expected, found):
        super().__init__(f"{axis}: ground truth has {expected} lines, estimate has {found}")
        self.axis = axis
        self.expected = expected
        self.found = found
