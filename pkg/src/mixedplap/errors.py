"""Exception hierarchy shared by every module."""


class MixedPLapError(Exception):
    """Base class; CLI maps subclasses onto exit codes."""


class InvalidSpec(MixedPLapError, ValueError):
    pass


class EmptyMask(MixedPLapError, ValueError):
    pass


class ZeroField(MixedPLapError, ValueError):
    pass


class GridMismatch(MixedPLapError, ValueError):
    pass


class PaddingTooSmall(MixedPLapError, ValueError):
    pass


class InvalidOrder(MixedPLapError, ValueError):
    pass


class TooLarge(MixedPLapError, ValueError):
    pass


class NotSymmetric(MixedPLapError, ArithmeticError):
    pass


class NotNested(MixedPLapError, ValueError):
    pass


class NotConverged(MixedPLapError, RuntimeError):
    pass


class DegenerateProbe(MixedPLapError, ValueError):
    pass


class CollapsedPath(MixedPLapError, RuntimeError):
    pass


class NotSignChanging(MixedPLapError, ValueError):
    pass


class NotTwoComponent(MixedPLapError, ValueError):
    pass


class KernelNotDecreasing(MixedPLapError, ValueError):
    pass


class ConstraintViolated(MixedPLapError, ValueError):
    pass


class NegativeInput(MixedPLapError, ValueError):
    pass


class NonPositiveU(MixedPLapError, ValueError):
    pass


class MeasureMismatch(MixedPLapError, ValueError):
    pass


class OverlapError(MixedPLapError, ValueError):
    pass


class InequalityViolated(MixedPLapError, AssertionError):
    """An inequality the theory guarantees failed numerically."""


class ConfigError(MixedPLapError, ValueError):
    pass
