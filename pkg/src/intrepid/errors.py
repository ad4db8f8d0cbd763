"""Exception and warning types shared across the package."""


class IntrepidError(Exception):
    pass


class DimensionMismatch(IntrepidError, ValueError):
    pass


class ZeroRadius(IntrepidError, ValueError):
    """Point coincides with the anchor, so its angles are undefined."""


class SingularJacobian(IntrepidError, ArithmeticError):
    pass


class RtfUnavailable(IntrepidError):
    pass


class InversionFailure(IntrepidError, ArithmeticError):
    pass


class InvalidStart(IntrepidError, ValueError):
    pass


class NonPhysical(IntrepidError, ValueError):
    pass


class GridMismatch(IntrepidError, ValueError):
    pass


class EmptySample(IntrepidError, ValueError):
    pass


class DegenerateVariance(IntrepidError, ArithmeticError):
    pass


class BoundViolation(IntrepidError, ArithmeticError):
    pass


class ConfigError(IntrepidError, ValueError):
    pass


class NonterminatingWarning(RuntimeWarning):
    pass


class BoundaryMassWarning(RuntimeWarning):
    pass
