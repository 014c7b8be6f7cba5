"""Exception types shared across the package."""


class TorusGPEError(Exception):
    """Base class for all package errors."""


class InvalidModulus(TorusGPEError, ValueError):
    pass


class MassTooSmall(TorusGPEError, ValueError):
    pass


class DegenerateBranch(TorusGPEError, ValueError):
    pass


class OutOfDomain(TorusGPEError, ValueError):
    pass


class GridTooCoarse(TorusGPEError, ValueError):
    pass


class NoConvergence(TorusGPEError, RuntimeError):
    pass


class NotConverged(NoConvergence):
    pass


class ConstraintActive(TorusGPEError, RuntimeError):
    pass


class StepSizeError(TorusGPEError, RuntimeError):
    pass


class LinearSolveFailed(TorusGPEError, RuntimeError):
    pass


class NormExplosion(TorusGPEError, RuntimeError):
    pass


class NonPositiveValue(TorusGPEError, ValueError):
    pass


class ConfigError(TorusGPEError, ValueError):
    pass
