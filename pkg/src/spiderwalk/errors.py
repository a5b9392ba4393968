"""Exception hierarchy shared by all modules."""


class SpiderError(Exception):
    """Base class for every error raised by spiderwalk."""


class ValidationError(SpiderError):
    """An input violates one of the model conditions."""


# environment
class ProbabilityMassError(ValidationError):
    pass


class EllipticityError(ValidationError):
    pass


class NoRootError(SpiderError):
    pass


class EmptyRangeError(SpiderError):
    pass


class WindowTooSmallError(SpiderError):
    pass


# local configuration set
class NotAnchoredError(ValidationError):
    pass


class DisconnectedError(ValidationError):
    pass


class NoForwardEdgeError(ValidationError):
    pass


class InvalidStateError(SpiderError):
    pass


# simulation
class DeadlockError(SpiderError):
    pass


class InsufficientDataError(SpiderError):
    pass


class TimedOut(SpiderError):
    """Jump budget exhausted before the stopping event.

    ``partial`` holds whatever the caller recorded up to that point.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# analysis
class PathFailure(SpiderError):
    pass


class TooLargeError(SpiderError):
    pass


class DisconnectedWindowError(SpiderError):
    pass
