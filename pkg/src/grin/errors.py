"""Exception types shared across the package."""


class GrinError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(GrinError, ValueError):
    """Shapes of the operands are incompatible."""


class ValidationError(GrinError, ValueError):
    """Input data violates a documented precondition."""


class ContractError(GrinError, ValueError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


class ParameterError(GrinError, ValueError):
    """A configuration or hyperparameter value is out of range."""


class IngestionError(GrinError, ValueError):
    """A file could not be parsed; the message carries row/column context."""


class CheckpointError(GrinError, ValueError):
    """A checkpoint is malformed or incompatible with the given graph."""


class ConfigurationError(GrinError, ValueError):
    """A run configuration is inconsistent or incomplete."""


class NothingToEvaluateError(GrinError, ValueError):
    """The evaluation mask selects no entries."""
