"""Exception hierarchy shared by the pipeline stages."""


class CoughGanError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(CoughGanError):
    pass


class ParseError(CoughGanError):
    pass


class EmptyInputError(CoughGanError):
    pass


class DomainError(CoughGanError, ValueError):
    pass


class InsufficientClassError(CoughGanError):
    pass


class FormatError(CoughGanError):
    """Malformed binary container (WAV, NPY, checkpoint)."""


class ShapeError(CoughGanError, ValueError):
    pass


class ConfigError(CoughGanError, ValueError):
    pass


class TrainingError(CoughGanError):
    """Non-finite loss or gradient during training."""
