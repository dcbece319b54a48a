"""Exception hierarchy shared across the package."""


class SsmNoiseError(Exception):
    """Base class for all package errors."""


class ShapeError(SsmNoiseError, ValueError):
    """Operand dimensions do not conform."""


class ConfigError(SsmNoiseError, ValueError):
    """Invalid configuration value (noise spec, selector, CLI flag)."""


class NumericError(SsmNoiseError, ArithmeticError):
    """Numeric failure: non-convergence or non-finite intermediate."""


class CheckpointError(SsmNoiseError, ValueError):
    """Base class for checkpoint/corpus file problems."""


class BadMagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class TruncatedFileError(CheckpointError):
    pass


class SchemaError(CheckpointError):
    """Tensor set or tensor shape does not match the layer schema."""


class NonFiniteError(CheckpointError):
    """A loaded tensor contains NaN or Inf."""


class CorpusError(SsmNoiseError, ValueError):
    """Token corpus validation failure."""


class SelectorError(SsmNoiseError, ValueError):
    """A perturbation selector matched no tensors."""
