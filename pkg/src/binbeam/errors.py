"""Exception hierarchy.

Two families matter to callers: :class:`PreconditionError` (bad inputs,
CLI exit code 2) and :class:`NumericalError` (degenerate numerics, exit
code 3).
"""


class BinbeamError(Exception):
    """Base class for all package errors."""


class PreconditionError(BinbeamError, ValueError):
    pass


class NumericalError(BinbeamError, ArithmeticError):
    pass


class DimensionMismatch(PreconditionError):
    pass


class NotHermitian(PreconditionError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class DegenerateConstraints(NumericalError):
    """Desired and interferer steering vectors are (numerically) collinear."""


class ZeroAtf(PreconditionError):
    pass


class ZeroReferenceEntry(NumericalError):
    pass


class ZeroDenominator(NumericalError):
    pass


class ZeroBeta(ZeroDenominator):
    pass


class ZeroPowerChannel(ZeroDenominator):
    pass


class ZeroDelta(ZeroDenominator):
    pass


class EtaOne(PreconditionError):
    pass


class EtaOneDeltaNotOne(EtaOne):
    pass


class InvalidGeometry(PreconditionError):
    pass


class ParseError(PreconditionError):
    pass


class ChannelMismatch(PreconditionError):
    pass


class EmptyDatabase(PreconditionError):
    pass


class SilentComponent(PreconditionError):
    pass


class TooShort(PreconditionError):
    pass


class ConfigMismatch(PreconditionError):
    pass


class LengthMismatch(PreconditionError):
    pass


class InsufficientFrames(PreconditionError):
    pass


class UnsupportedFormat(PreconditionError):
    pass
