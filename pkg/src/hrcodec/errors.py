"""Exception hierarchy shared across the codec."""


class CodecError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(CodecError):
    """An input file or config is unreadable, unsupported or malformed."""


class CorruptBitstreamError(CodecError):
    """A compressed stream failed validation (bad magic, truncation, garbage)."""
