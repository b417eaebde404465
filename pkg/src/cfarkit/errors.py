"""Exception hierarchy shared by all cfarkit modules."""


class CfarError(Exception):
    """Base class for every error raised by cfarkit."""


class DataError(CfarError):
    """Input data cannot be processed (maps to CLI exit code 3)."""


class FormatError(DataError):
    pass


class SizeMismatch(DataError):
    pass


class NonPositivePixel(DataError, ValueError):
    pass


class DomainMismatch(DataError):
    pass


class DimMismatch(DataError, ValueError):
    pass


class KernelTooLarge(DataError, ValueError):
    pass


class OutOfSupport(CfarError, ValueError):
    pass


class ConvergenceFailure(CfarError, RuntimeError):
    pass


class EmptyInput(CfarError, ValueError):
    pass


class InsufficientSamples(CfarError, ValueError):
    pass


class InvalidPfa(CfarError, ValueError):
    pass


class NonPositiveBackground(CfarError, ValueError):
    pass


class ZeroSigma(CfarError, ValueError):
    pass


class DegenerateCdf(CfarError, ValueError):
    pass


class NotTabulated(CfarError, KeyError):
    pass


def check_pfa(pfa: float) -> float:
    pfa = float(pfa)
    if not 0.0 < pfa < 1.0:
        raise InvalidPfa("pfa must be in (0,1)")
    return pfa
