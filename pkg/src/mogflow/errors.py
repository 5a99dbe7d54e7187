"""Exception types raised across the package."""


class MogflowError(Exception):
    """Base class for every error raised by mogflow."""


class UnsupportedDimension(MogflowError, ValueError):
    pass


class ResolutionTooSmall(MogflowError, ValueError):
    pass


class GridMismatch(MogflowError, ValueError):
    pass


class NotUnitVector(MogflowError, ValueError):
    pass


class NonpositiveExponent(MogflowError, ValueError):
    pass


class ClassViolation(MogflowError, ValueError):
    pass


class EpsilonOutOfRange(MogflowError, ValueError):
    pass


class DeltaSearchFailed(MogflowError, RuntimeError):
    pass


class OutOfRange(MogflowError, ValueError):
    pass


class NotMonotone(MogflowError, ValueError):
    pass


class NotPositive(MogflowError, ValueError):
    pass


class NotConvex(MogflowError, ValueError):
    """Raised when b = Hess u + u I fails to be positive definite.

    ``node`` is the offending node index, ``direction`` its unit normal and
    ``eigenvalue`` the smallest eigenvalue found there.
    """

    def __init__(self, message, node=None, direction=None, eigenvalue=None):
        super().__init__(message)
        self.node = node
        self.direction = direction
        self.eigenvalue = eigenvalue


class NotInteriorBody(MogflowError, ValueError):
    pass


class ZeroPsi(MogflowError, ValueError):
    pass


class DegenerateDenominator(MogflowError, ArithmeticError):
    pass


class InversionOutOfRange(MogflowError, ValueError):
    pass


class HemisphereConcentration(MogflowError, ValueError):
    """The data measure puts (almost) no mass on one side of some great sphere."""

    def __init__(self, message, direction=None, margin=None):
        super().__init__(message)
        self.direction = direction
        self.margin = margin


class StepCollapse(MogflowError, RuntimeError):
    """Step size fell below dt_min while trial states kept being rejected."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(MogflowError, ValueError):
    pass
