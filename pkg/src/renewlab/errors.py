"""Exception hierarchy shared across the package."""


class RenewLabError(Exception):
    """Base class for all package errors."""


class DomainError(RenewLabError, ValueError):
    """An argument lies outside the domain of a function."""


class NumericalAccuracyError(RenewLabError, ArithmeticError):
    """A numerical routine missed its accuracy target.

    ``achieved`` carries the value that failed the check.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class TruncationError(RenewLabError):
    """An excursion exceeded ``max_iter`` before returning to the inducing set.

    The partial state is attached so callers can resume or discard it.
    """

    def __init__(self, message, x=None, sigma=None, tau=None):
        super().__init__(message)
        self.x = x
        self.sigma = sigma
        self.tau = tau


class SpectralError(RenewLabError):
    """Eigen-solver did not converge; ``residual`` is the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ResolventError(RenewLabError):
    """Linear solve for the resolvent was ill-conditioned or failed."""


class FitError(RenewLabError):
    """A statistical fit had too little usable data."""


class ConfigError(RenewLabError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
