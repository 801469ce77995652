"""Exception types raised by the library."""


class DnnpError(Exception):
    """Base class for all library errors."""


class ZeroExtent(DnnpError):
    """A tensor or filter extent is < 1."""


class AliasingStrides(DnnpError):
    """Two distinct coordinates map to the same buffer offset."""


class ShapeMismatch(DnnpError):
    """Operand shapes (or element types) are inconsistent."""


class OverlappingBuffers(DnnpError):
    """Source and destination buffers share memory."""


class IncompatibleBroadcast(DnnpError):
    """Bias extent is neither 1 nor equal to the output extent."""


class ZeroDivisor(DnnpError):
    """Divider requested for d < 1."""


class DimMismatch(DnnpError):
    """Matrix dimensions do not agree."""


class EmptyOutput(DnnpError):
    """Convolution output extent would be < 1."""


class AllocTooLarge(DnnpError):
    """Explicitly lowered data matrix exceeds the configured byte limit."""


class EmptyWindow(DnnpError):
    """A pooling window contains no in-image elements."""


class MissingArgmax(DnnpError):
    """Max-pooling backward called without the forward argmax buffer."""


class ParseError(DnnpError):
    """Suite file could not be parsed."""


class ConfigInvalid(DnnpError):
    """Layer configuration violates convolution preconditions."""


class VerifyFailed(DnnpError):
    """Benchmark verification error above tolerance.

    Carries the completed result list so callers can still emit it.
    """

    def __init__(self, message, results=None):
        super().__init__(message)
        self.results = results if results is not None else []
