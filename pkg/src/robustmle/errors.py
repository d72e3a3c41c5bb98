"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: configuration/infeasibility problems
exit with 1, numeric failures with 2.
"""


class RobustMLEError(Exception):
    """Base class for all package errors."""


class DomainError(RobustMLEError, ValueError):
    """An observation lies outside the support, or a parameter outside Theta."""


class ConfigurationError(RobustMLEError, ValueError):
    """A model or run is configured in a way the method cannot handle."""


class UsageError(RobustMLEError, ValueError):
    """A function was called with arguments of the wrong kind or regime."""


class InfeasibleError(RobustMLEError, ValueError):
    """A closed-form bound or tuning rule has no valid value for these inputs."""


class NumericError(RobustMLEError, ArithmeticError):
    """A computation produced a non-finite value."""


class MomentNonexistenceError(NumericError):
    """A required moment is infinite.

    Attributes
    ----------
    order : float or None
        The first moment order found to diverge.
    """

    def __init__(self, message, order=None):
        super().__init__(message)
        self.order = order


class NoRootError(NumericError):
    """The estimating equation has no sign change on Theta."""

    def __init__(self, message, lower_value=None, upper_value=None):
        super().__init__(message)
        self.lower_value = lower_value
        self.upper_value = upper_value


class MonotonicityWarning(RuntimeWarning):
    """The estimating equation changed sign more than once on a probe grid."""


class BoundaryWarning(RuntimeWarning):
    """An estimate was projected onto the boundary of Theta."""


class HighVarianceWarning(RuntimeWarning):
    """An empirical high-order moment is too noisy to be trusted."""
