"""Exception hierarchy shared by every module in the package."""


class MGIoUError(ValueError):
    """Base class for invalid-input errors."""


class InvalidShape(MGIoUError):
    pass


class EllipseHasNoVertices(MGIoUError):
    pass


class DimensionMismatch(MGIoUError):
    pass


class DegenerateEdge(MGIoUError):
    pass


class TooFewVertices(MGIoUError):
    pass


class NotPlanar(MGIoUError):
    pass


class ModeShapeMismatch(MGIoUError):
    pass


class ShapeMismatch(MGIoUError):
    pass


class EmptyBatch(MGIoUError):
    pass


class ZeroAreaInput(MGIoUError):
    pass


class KinkDetected(RuntimeError):
    """Finite differences kept straddling a non-differentiable point."""


class DivergenceDetected(RuntimeError):
    """Loss stayed far above its starting value during a fit."""
