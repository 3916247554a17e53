"""Exception types shared across the package."""


class SConcaveError(Exception):
    """Base class for every error raised by sconcave."""


class RegimeError(SConcaveError, ValueError):
    """Parameters fall outside the range where a formula is defined.

    ``condition`` names the violated inequality, e.g. ``"s >= -1/(2n+3)"``.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class BetaDomainError(RegimeError):
    """A beta-function argument is not strictly positive."""


class DivergentMomentError(RegimeError):
    """A requested moment of a heavy-tailed density is infinite."""


class PreconditionError(SConcaveError, ValueError):
    """An argument violates a documented precondition."""


class InfeasibleError(SConcaveError):
    """The feasible set of an optimisation problem is empty."""


class NonSeparableError(SConcaveError):
    """No halfspace through the origin is consistent with the labels."""


class BandStarvationError(SConcaveError):
    """Rejection sampling into a band accepts too few points."""


class StreamExhaustedError(SConcaveError):
    """A filtered sample stream rejected too many points in a row."""


class ConfigError(SConcaveError, ValueError):
    """An experiment configuration failed validation.

    ``violations`` lists every problem found, not only the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
