class ObtainError(Exception):
    """Base class for all errors raised by this package."""


class DecodeError(ObtainError):
    """Malformed audio container."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(ObtainError):
    """Well-formed container holding an encoding we do not decode."""

    def __init__(self, message, codec_tag=None):
        super().__init__(message)
        self.codec_tag = codec_tag


class InputError(ObtainError, ValueError):
    """Bad array shapes or non-finite input samples."""


class ParameterError(ObtainError, ValueError):
    """Configuration value outside its allowed range."""


class EvaluationError(ObtainError, ValueError):
    """Metric undefined for the given beat sequences."""
