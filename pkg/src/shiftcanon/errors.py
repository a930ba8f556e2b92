"""Exception types raised across the package."""


class ShiftCanonError(Exception):
    """Base class for all package errors."""


class InvalidTimeSeries(ShiftCanonError, ValueError):
    pass


class DegeneratePhase(ShiftCanonError, ValueError):
    """The reference harmonic is (numerically) zero, so its angle is undefined."""


class ConstantChannel(ShiftCanonError, ValueError):
    pass


class NotAShiftVariant(ShiftCanonError, ValueError):
    pass


class ShapeMismatch(ShiftCanonError, ValueError):
    pass


class DegenerateBatch(ShiftCanonError, ValueError):
    pass


class NonFiniteLoss(ShiftCanonError, FloatingPointError):
    pass


class UnsupportedLength(ShiftCanonError, ValueError):
    pass


class EmptyDataset(ShiftCanonError, ValueError):
    pass


class LengthMismatch(ShiftCanonError, ValueError):
    pass


class InsufficientSamples(ShiftCanonError, ValueError):
    pass


class IoFailure(ShiftCanonError, OSError):
    pass


class MalformedRecord(ShiftCanonError, ValueError):
    """A dataset line could not be parsed; carries the 1-based line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason
