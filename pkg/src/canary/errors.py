"""Exception hierarchy shared by all modules."""


class CanaryError(Exception):
    """Base class for library errors."""


class InvalidParameterError(CanaryError, ValueError):
    pass


class SupportMismatchError(CanaryError):
    pass


class SearchExhaustedError(CanaryError):
    pass


class ZeroSampleError(CanaryError, ValueError):
    pass


class PreconditionError(CanaryError):
    """Analysis preconditions are not met.

    ``failed`` lists the names of the clauses that did not hold.
    """

    def __init__(self, message, failed=()):
        super().__init__(message)
        self.failed = list(failed)


class InvalidScalingError(CanaryError, ValueError):
    pass


class DiscretizationError(CanaryError):
    pass


class UnreachableTargetError(CanaryError):
    pass


class SampleTooLargeError(CanaryError, ValueError):
    pass


class TooLargeForExactError(CanaryError, ValueError):
    pass


class CaseDataError(CanaryError):
    """Malformed or inconsistent case-count input.

    ``kind`` is ``"parse"`` for unreadable values and ``"invariant"`` for
    well-formed rows that violate series constraints.
    """

    def __init__(self, message, kind="parse", rows=()):
        super().__init__(message)
        self.kind = kind
        self.rows = list(rows)
