"""Exception hierarchy shared by all dspider modules."""


class DSpiderError(Exception):
    """Base class for every error raised by this package."""


# topology
class TopologyError(DSpiderError, ValueError):
    pass


class NotSymmetric(TopologyError):
    pass


class NotDoublyStochastic(TopologyError):
    pass


class SpectralGapViolation(TopologyError):
    pass


# problems
class InvalidDimension(DSpiderError, ValueError):
    pass


class IndexOutOfRange(DSpiderError, IndexError):
    pass


class EmptyBatch(DSpiderError, ValueError):
    pass


class TooManyWorkers(DSpiderError, ValueError):
    pass


class MissingLabels(DSpiderError, ValueError):
    pass


# algorithms
class DimensionMismatch(DSpiderError, ValueError):
    pass


class CalledBeforeFirstStep(DSpiderError, RuntimeError):
    pass


# theory
class InadmissibleSpectrum(DSpiderError, ValueError):
    pass


class NonpositiveD(DSpiderError, ValueError):
    pass


# harness
class NonFiniteIterate(DSpiderError, FloatingPointError):
    """Raised when an iterate picks up a NaN or inf.

    ``record`` holds the metrics collected up to the divergence.
    """

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class EmptyWindow(DSpiderError, ValueError):
    pass


# cli
class ConfigParseError(DSpiderError, ValueError):
    pass
