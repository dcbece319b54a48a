class ExportError(Exception):
    """Base class for exporter failures."""


class SourceError(ExportError):
    """Source file unreadable or in an unrecognized format."""


class MissingTensorError(ExportError):
    """A schema tensor has no resolvable source tensor."""


class ShapeMismatchError(ExportError):
    """Source tensor shape disagrees with the schema shape."""


class TokenizerError(ExportError):
    """Unknown tokenizer id or untokenizable input."""


class TokenRangeError(ExportError):
    """Token id does not fit the 32-bit storage width."""
