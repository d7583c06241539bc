"""Exception hierarchy shared across the engine.

Everything raised on purpose derives from EngineError so callers can
catch engine failures without swallowing programming errors.
"""


class EngineError(Exception):
    """Base class for all engine-raised errors."""


class ArgumentError(EngineError, ValueError):
    """An argument violated a documented precondition."""


class DimensionMismatch(ArgumentError):
    """Parameter vector or array shape does not match the expected dimensionality."""


class ImageIOError(EngineError, OSError):
    """Reading or writing an image file failed at the I/O level."""


class FormatError(EngineError, ValueError):
    """File contents are not in a supported format."""


class DatasetError(EngineError):
    """A dataset manifest or one of its entries is unusable."""


class EmptyLogits(ArgumentError):
    """A logit vector with zero entries was supplied."""


class MissingNormPrompt(ArgumentError):
    """Normalized scoring requested without a normalizing prompt."""


class BothWeightsZero(ArgumentError):
    """Combined energy requested with every term weighted to zero."""


class BackendError(EngineError):
    """A scoring backend failed to produce a value."""


class EvaluationError(EngineError):
    """Objective evaluation failed; message names the failing candidate point."""


class SingularKernel(EngineError):
    """Kernel matrix could not be factorized even after jitter escalation."""


class OptimizerError(EngineError):
    """Search loop could not continue."""


class ConfigError(EngineError):
    """Run configuration is missing, malformed, or references absent files."""


class Timeout(BackendError):
    """Remote call did not complete within the configured budget."""


class ProtocolError(BackendError):
    """Remote payload violated the wire schema."""


class ServerError(BackendError):
    """Remote server reported an internal failure."""


class RangeError(BackendError):
    """Remote call used a value outside the server's accepted range."""
