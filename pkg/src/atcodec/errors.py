"""Exception types shared across the library."""


class AtcodecError(Exception):
    """Base class for all library errors."""


class InvalidInput(AtcodecError):
    """An argument violates a documented precondition."""


class NumericalFailure(AtcodecError):
    """An iterative numerical routine failed to converge."""


class CorruptStream(AtcodecError):
    """A bitstream is truncated or malformed."""


class CorruptModel(AtcodecError):
    """A model file failed its integrity check."""


class ModelMismatch(AtcodecError):
    """A stream was produced under a different model."""


class UnsupportedVersion(AtcodecError):
    """A file carries a format version this build does not read."""
