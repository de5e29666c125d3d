"""Exception types shared across the package."""


class GPTransError(Exception):
    """Base class for all errors raised by this package."""


class MalformedGraphError(GPTransError, ValueError):
    """A graph record violates the input format or its invariants."""


class EmptyBatchError(GPTransError, ValueError):
    """batch_graphs was called with no graphs."""


class ShapeError(GPTransError, ValueError):
    """Tensor operands have incompatible shapes."""


class VocabularyError(GPTransError, ValueError):
    """An id tensor indexes outside its embedding table."""


class TapeError(GPTransError, RuntimeError):
    """backward was invoked without a usable tape or recorded loss."""


class ConfigurationError(GPTransError, ValueError):
    """Model/training configuration is inconsistent with the data or itself."""


class EmptyLossError(GPTransError, ValueError):
    """Every position in the batch is masked out of the loss."""
