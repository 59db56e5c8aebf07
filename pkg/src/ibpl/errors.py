"""Exception hierarchy shared by every module.

The CLI maps :class:`ValidationError` to exit status 2 and every other
:class:`IBPLError` to exit status 1.
"""


class IBPLError(Exception):
    """Base class for all library errors."""


class ValidationError(IBPLError, ValueError):
    """Malformed input: bad shapes, unnormalized weights, out-of-range flags."""


class DomainError(IBPLError, ValueError):
    """Well-formed input on which the requested quantity is undefined."""


class ConstructionError(IBPLError):
    """A world specification that cannot be realized."""


class CapacityError(IBPLError):
    """Problem size beyond what an exact method supports."""


class TrainingError(IBPLError):
    """Training diverged."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
