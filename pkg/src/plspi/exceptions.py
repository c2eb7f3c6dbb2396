"""Exception types raised by the library.

Every error derives from :class:`PLSPIError`.  The CLI maps configuration-type
errors (bad config, shapes, domains, unusable priors) to exit code 1 and any
other :class:`PLSPIError` to exit code 2.
"""


class PLSPIError(Exception):
    pass


class ConfigError(PLSPIError):
    pass


class DimensionError(PLSPIError, ValueError):
    pass


class DivergenceError(PLSPIError):
    """An iterative solver did not converge within its iteration budget."""


class ConditioningError(PLSPIError):
    """A matrix that must be inverted is singular to working precision."""


class InstabilityError(PLSPIError):
    """A closed loop is not (discounted-)stable, so its cost series diverges."""


class DomainError(PLSPIError, ValueError):
    pass


class NumericalError(PLSPIError):
    pass


class ExcitationError(PLSPIError):
    """The data do not excite every quadratic feature; H is not identifiable."""


class DataError(PLSPIError):
    """Non-finite values reached a least-squares system."""


class ImprovementError(PLSPIError):
    """The input block of a Q-matrix is singular or indefinite."""


class PriorError(PLSPIError):
    """The partial model cannot be stabilized and is unusable as a prior."""


class ExplosionError(PLSPIError):
    def __init__(self, message, episode=None):
        super().__init__(message)
        self.episode = episode
