"""Model and corpus export entry points."""
from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import MissingTensorError, ShapeMismatchError, SourceError, TokenRangeError
from .formats import read_ssmw, write_ssmw, write_toks
from .manifest import ExportManifest, schema_shapes
from .sources import load_state_dict
from .tokenizers import get_tokenizer

_U32_MAX = 2**32 - 1


@dataclass(frozen=True)
class ExportSummary:
    out_path: str
    n_tensors: int
    n_params: int
    config: dict


def infer_config(source: dict[str, np.ndarray], manifest: ExportManifest) -> dict:
    """Derive the model config from source tensor shapes."""
    table = {schema: src for schema, src in manifest.top_map}
    emb_name = table["embedding.weight"]
    if emb_name not in source:
        raise MissingTensorError(f"cannot infer config: source lacks {emb_name!r}")
    vocab_size, d_model = source[emb_name].shape

    layer_ids = set()
    probe = re.compile(re.escape(manifest.layer_map[0][1]).replace(r"\{i\}", r"(\d+)"))
    for name in source:
        m = probe.fullmatch(name)
        if m:
            layer_ids.add(int(m.group(1)))
    if not layer_ids or layer_ids != set(range(max(layer_ids) + 1)):
        raise SourceError(f"cannot infer layer count: found layer indices {sorted(layer_ids)}")
    n_layers = max(layer_ids) + 1

    def layer0(schema_suffix: str) -> np.ndarray:
        for schema_t, source_t in manifest.layer_map:
            if schema_t == "layers.{i}." + schema_suffix:
                name = source_t.format(i=0)
                if name not in source:
                    raise MissingTensorError(f"cannot infer config: source lacks {name!r}")
                return source[name]
        raise SourceError(f"manifest lacks a mapping for {schema_suffix!r}")

    a_log = layer0("A_log")
    d_inner, d_state = a_log.shape
    if d_inner % d_model != 0:
        raise SourceError(f"d_inner {d_inner} is not a multiple of d_model {d_model}")
    return {
        "d_model": int(d_model),
        "n_layers": int(n_layers),
        "d_state": int(d_state),
        "d_conv": int(layer0("conv1d.weight").shape[-1]),
        "expand": int(d_inner // d_model),
        "dt_rank": int(layer0("dt_proj.weight").shape[1]),
        "vocab_size": int(vocab_size),
    }


def _adapt(schema_name: str, arr: np.ndarray) -> np.ndarray:
    # torch depthwise conv stores (d_inner, 1, d_conv); the schema is 2-D
    if schema_name.endswith("conv1d.weight") and arr.ndim == 3 and arr.shape[1] == 1:
        return arr[:, 0, :]
    return arr


def export_checkpoint(source_path, manifest: ExportManifest, out_path) -> ExportSummary:
    """Convert a source checkpoint to an SSMW v1 file.

    An SSMW source is rewritten verbatim (same tensor order and metadata), so
    re-export is bit-exact.  Other sources go through the manifest mapping
    with config inferred from tensor shapes.
    """
    if str(source_path).endswith(".ssmw"):
        config, tensors, metadata = read_ssmw(source_path)
        write_ssmw(out_path, config, tensors, metadata)
    else:
        source = load_state_dict(source_path)
        config = infer_config(source, manifest)
        shapes = schema_shapes(config)
        table = manifest.resolve(config["n_layers"])
        missing = sorted(s for s in shapes if table[s] not in source)
        if missing:
            raise MissingTensorError(
                f"source lacks tensors for {missing} (looked for {[table[s] for s in missing]})"
            )
        tensors = {}
        for schema_name, shape in shapes.items():
            arr = _adapt(schema_name, source[table[schema_name]])
            if tuple(arr.shape) != shape:
                raise ShapeMismatchError(
                    f"{schema_name!r}: source tensor {table[schema_name]!r} has shape "
                    f"{tuple(arr.shape)}, schema requires {shape}"
                )
            tensors[schema_name] = arr
        metadata = {"provenance": f"export({manifest.source_id})"}
        if manifest.tie_embeddings:
            metadata["tied_embeddings"] = "true"
        write_ssmw(out_path, config, tensors, metadata)
    n_params = int(sum(int(np.prod(t.shape)) for t in tensors.values()))
    return ExportSummary(str(out_path), len(tensors), n_params, config)


@dataclass(frozen=True)
class CorpusSummary:
    out_path: str
    vocab_size: int
    n_tokens: int


def export_corpus(text_path, tokenizer_id: str, out_path) -> CorpusSummary:
    """Tokenize a text file and write a TOKS v1 corpus."""
    if not os.path.exists(text_path):
        raise SourceError(f"{text_path}: no such file")
    with open(text_path, "rb") as fh:
        raw = fh.read()
    tokens, vocab_size = get_tokenizer(tokenizer_id)(raw)
    if tokens.size and (int(tokens.max()) > _U32_MAX or int(tokens.min()) < 0):
        raise TokenRangeError(f"token id {int(tokens.max())} exceeds 32-bit storage")
    if vocab_size > _U32_MAX:
        raise TokenRangeError(f"vocab size {vocab_size} exceeds 32-bit storage")
    write_toks(out_path, vocab_size, tokens)
    return CorpusSummary(str(out_path), vocab_size, int(tokens.size))
