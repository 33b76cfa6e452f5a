"""Exception taxonomy for the calibration toolkit.

Each class maps to one failure mode so the CLI can translate them into
stable exit codes (see ``cli.EXIT_CODES``).
"""


class EmccdCalError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameterError(EmccdCalError, ValueError):
    """A physical or numerical parameter is outside its valid domain."""


class WrongKindError(EmccdCalError, TypeError):
    """A frame stack of the wrong kind was passed (e.g. clicks where counts expected)."""


class EmptyStackError(EmccdCalError, ValueError):
    """An operation requires at least one frame."""


class EmptyRegionError(EmccdCalError, ValueError):
    """A region selection contains no pixels."""


class DegenerateInputError(EmccdCalError, ValueError):
    """Input data admits no estimate (e.g. zero mean in a ratio)."""


class FitFailureError(EmccdCalError, RuntimeError):
    """A histogram fit did not converge or had too few usable bins."""


class FrameFormatError(EmccdCalError, IOError):
    """Base class for frame-file format violations."""


class BadMagicError(FrameFormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FrameFormatError):
    """File declares a format version this reader does not understand."""


class TruncatedPayloadError(FrameFormatError):
    """File payload is shorter than the header promises."""


class EmptyDataError(EmccdCalError, ValueError):
    """A plot or report was requested for empty data."""


class ConfigError(EmccdCalError, ValueError):
    """Run configuration is malformed or violates the schema."""


class ParseError(EmccdCalError, ValueError):
    """A result file (CSV, JSON) could not be parsed."""


class ContractViolationError(EmccdCalError, ValueError):
    """An operating contract was violated (e.g. counting mode too bright)."""
