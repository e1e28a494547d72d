from __future__ import annotations


class FreeCLTError(Exception):
    """Base class for every error raised by the library.

    ``module`` names the computational module the error originates from; the CLI prints it
    in front of the class name so failures can be traced without a stack trace.
    """

    module = "freeclt"

    @property
    def qualified_name(self) -> str:
        return f"{self.module}.{type(self).__name__}"


# measure_core


class MeasureError(FreeCLTError):
    module = "measure_core"


class InvalidMeasure(MeasureError, ValueError):
    pass


class UnsupportedMoment(MeasureError, ValueError):
    pass


class NonIntegrable(MeasureError, ValueError):
    pass


class DegenerateMeasure(MeasureError, ValueError):
    pass


class AtomicDensity(MeasureError, ValueError):
    pass


# transforms


class TransformError(FreeCLTError):
    module = "transforms"


class LowerHalfPlane(TransformError, ValueError):
    pass


class PrecisionLoss(TransformError, RuntimeError):
    pass


class EmptyTau(TransformError, ValueError):
    pass


class TauReconstructionError(TransformError, RuntimeError):
    pass


# subordination


class SubordinationError(FreeCLTError):
    module = "subordination"


class NoConvergence(SubordinationError, RuntimeError):
    def __init__(self, message: str, *, max_iter: int, residual: float) -> None:
        super().__init__(message)
        self.max_iter = max_iter
        self.residual = residual


class PathAmbiguity(SubordinationError, RuntimeError):
    pass


# density


class DensityError(FreeCLTError):
    module = "density"


class GridTooCoarse(DensityError, ValueError):
    pass


class DisjointGrids(DensityError, ValueError):
    pass


class EmptyWindow(DensityError, ValueError):
    pass


# expansion


class MomentInconsistency(FreeCLTError, ValueError):
    module = "expansion"


# entropy


class EntropyError(FreeCLTError):
    module = "entropy"


class UnboundedSupport(EntropyError, ValueError):
    pass


class NonIntegrableCube(EntropyError, ValueError):
    pass


class OutsideSupport(EntropyError, ValueError):
    pass


class NonphysicalProfile(UserWarning):
    """Emitted when a profile's free entropy is implausibly low (collapsed or spiky profile)."""


# cli


class ParseError(FreeCLTError, ValueError):
    module = "cli"

    def __init__(self, message: str, *, offset: int, expected: str) -> None:
        super().__init__(f"{message} at byte {offset} (expected {expected})")
        self.offset = offset
        self.expected = expected
