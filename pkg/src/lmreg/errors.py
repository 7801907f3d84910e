"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An input violates a documented precondition."""


class RegistrationDivergedError(RuntimeError):
    """The registration loss became non-finite.

    Attributes
    ----------
    iteration : int
        One-based index of the iteration at which the loss blew up.
    """

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"loss became non-finite at iteration {iteration}")


class CaseRejectedError(RuntimeError):
    """A synthetic case projects a landmark too far outside the detector."""
