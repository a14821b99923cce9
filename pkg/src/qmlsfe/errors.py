"""Exception hierarchy shared by every module."""


class QmlError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QmlError, ValueError):
    """Invalid parameters, degenerate inputs or unsupported options."""


class ShapeError(QmlError, ValueError):
    """Array or vector dimensions do not agree."""


class NumericError(QmlError, ArithmeticError):
    """A numerical precondition (e.g. kernel PSD-ness) is violated."""


class IngestionError(QmlError, ValueError):
    """A data file could not be parsed."""


class TrainingError(QmlError, RuntimeError):
    """Training diverged or produced non-finite values."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class MetricError(QmlError, ValueError):
    """A metric is undefined for the given inputs."""
