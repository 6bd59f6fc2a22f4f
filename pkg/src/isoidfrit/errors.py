"""Exception and warning types raised across the package."""


class IsoFritError(Exception):
    """Base class for every error raised by this package."""


# -- transfer-function algebra -------------------------------------------------
class DegenerateLoop(IsoFritError):
    """``1 + L`` is identically zero, so the unity-feedback loop is undefined."""


class NonInvertible(IsoFritError):
    """Inverse requested for a transfer function with a zero numerator."""


class NonProperResult(IsoFritError):
    """An operation would produce an improper discrete-time transfer function."""


class PoleHit(IsoFritError):
    """Evaluation point coincides with a pole."""


# -- fractional order / discretization ----------------------------------------
class AlphaOutOfRange(IsoFritError):
    """Oustaloup filters only cover exponents strictly inside (-1, 1)."""


class ReferenceModelUnstable(IsoFritError):
    """The discretized reference model has a pole on or outside the unit circle."""

    def __init__(self, message, poles=()):
        super().__init__(message)
        self.poles = list(poles)


class DegenerateDenominator(IsoFritError):
    """Bilinear substitution collapsed the denominator to zero."""


# -- simulation / deconvolution -----------------------------------------------
class SingularLeadingSample(IsoFritError):
    """The first sample of a triangular Toeplitz factor is (numerically) zero."""


class ControllerNotInvertible(IsoFritError):
    """The controller is not biproper, so its inverse is not causal."""


class AlgebraicLoopSingular(IsoFritError):
    """Direct feedthroughs of plant and controller give ``1 + d_p d_c = 0``."""


# -- tuning / frequency analysis ----------------------------------------------
class NotBiproper(IsoFritError):
    """A controller parameter vector produced a non-biproper controller."""


class NoCrossing(IsoFritError):
    """The open-loop magnitude never crosses unity inside the search band."""


# -- CLI / data ingestion ------------------------------------------------------
class BadData(IsoFritError, ValueError):
    """Experiment data violates a precondition (NaN, lengths, r_0 = 0, ...)."""


class ConfigError(IsoFritError, ValueError):
    """Malformed or inconsistent configuration."""


class NotSettled(UserWarning):
    """Step response still moving at the end of the record."""


class MultipleCrossings(UserWarning):
    """More than one gain crossover found; the lowest one was returned."""
