"""Checkpoint and corpus exporter for the SSMW v1 / TOKS v1 formats."""
from .errors import (
    ExportError,
    MissingTensorError,
    ShapeMismatchError,
    SourceError,
    TokenRangeError,
    TokenizerError,
)
from .export import CorpusSummary, ExportSummary, export_checkpoint, export_corpus, infer_config
from .formats import read_ssmw, write_ssmw, write_toks
from .manifest import ExportManifest, schema_shapes
from .tokenizers import get_tokenizer

__version__ = "0.1.0"

__all__ = [
    "CorpusSummary",
    "ExportError",
    "ExportManifest",
    "ExportSummary",
    "MissingTensorError",
    "ShapeMismatchError",
    "SourceError",
    "TokenRangeError",
    "TokenizerError",
    "export_checkpoint",
    "export_corpus",
    "get_tokenizer",
    "infer_config",
    "read_ssmw",
    "schema_shapes",
    "write_ssmw",
    "write_toks",
]
