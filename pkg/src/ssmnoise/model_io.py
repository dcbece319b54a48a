"""Checkpoint (SSMW v1) and token corpus (TOKS v1) file formats, plus
deterministic toy-model generation.

Weights are stored as little-endian float32 and widened to float64 on load.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (
    BadMagicError,
    CorpusError,
    NonFiniteError,
    SchemaError,
    TruncatedFileError,
    VersionError,
)
from .rand import normal_draw, stream_for, uniform_draw

SSMW_MAGIC = b"SSMW"
TOKS_MAGIC = b"TOKS"
FORMAT_VERSION = 1
_DATA_ALIGN = 64

CONFIG_FIELDS = (
    "d_model",
    "n_layers",
    "d_state",
    "d_conv",
    "expand",
    "dt_rank",
    "vocab_size",
)


@dataclass(frozen=True)
class ModelConfig:
    d_model: int
    n_layers: int
    d_state: int
    d_conv: int
    expand: int
    dt_rank: int
    vocab_size: int

    def __post_init__(self):
        for name in CONFIG_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise SchemaError(f"config field {name} must be a positive int, got {value!r}")

    @property
    def d_inner(self) -> int:
        return self.expand * self.d_model


@dataclass
class Checkpoint:
    """Named-tensor container.  Treated as immutable after construction;
    transformations (perturbation, HPD rewrite) return new instances."""

    config: ModelConfig
    tensors: dict[str, np.ndarray]
    metadata: dict[str, str] = field(default_factory=dict)

    def copy(self) -> "Checkpoint":
        return Checkpoint(
            config=self.config,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            metadata=dict(self.metadata),
        )


def layer_tensor_schema(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Required tensor names and shapes for the plain (non-HPD) model."""
    c = config
    schema: dict[str, tuple[int, ...]] = {}
    for i in range(c.n_layers):
        p = f"layers.{i}."
        schema[p + "in_proj.weight"] = (2 * c.d_inner, c.d_model)
        schema[p + "conv1d.weight"] = (c.d_inner, c.d_conv)
        schema[p + "conv1d.bias"] = (c.d_inner,)
        schema[p + "x_proj.weight"] = (c.dt_rank + 2 * c.d_state, c.d_inner)
        schema[p + "dt_proj.weight"] = (c.d_inner, c.dt_rank)
        schema[p + "dt_proj.bias"] = (c.d_inner,)
        schema[p + "A_log"] = (c.d_inner, c.d_state)
        schema[p + "D"] = (c.d_inner,)
        schema[p + "out_proj.weight"] = (c.d_model, c.d_inner)
        schema[p + "norm.weight"] = (c.d_model,)
    schema["embedding.weight"] = (c.vocab_size, c.d_model)
    schema["norm_f.weight"] = (c.d_model,)
    schema["lm_head.weight"] = (c.vocab_size, c.d_model)
    return schema


def expected_schema(config: ModelConfig, metadata: dict[str, str]) -> dict[str, tuple[int, ...] | None]:
    """Schema after accounting for an HPD rewrite recorded in metadata.

    The rewritten target is replaced by "hpd.w_cim" (in x r) and "hpd.v"
    (out x r); r is not fixed by the config, so those shapes are validated
    separately (None here means shape checked by validate_checkpoint).
    """
    schema: dict[str, tuple[int, ...] | None] = dict(layer_tensor_schema(config))
    target = metadata.get("hpd.target")
    if target is not None:
        if target not in schema:
            raise SchemaError(f"hpd.target {target!r} is not a schema tensor")
        del schema[target]
        schema["hpd.w_cim"] = None
        schema["hpd.v"] = None
    return schema


def validate_checkpoint(ckpt: Checkpoint) -> None:
    """Check tensor-set completeness and per-tensor shapes; raise SchemaError
    listing every missing/extra name."""
    schema = expected_schema(ckpt.config, ckpt.metadata)
    missing = sorted(set(schema) - set(ckpt.tensors))
    extra = sorted(set(ckpt.tensors) - set(schema))
    if missing or extra:
        raise SchemaError(f"tensor set mismatch: missing={missing} extra={extra}")
    for name, shape in schema.items():
        got = tuple(ckpt.tensors[name].shape)
        if shape is not None and got != shape:
            raise SchemaError(f"tensor {name!r} has shape {got}, schema requires {shape}")
    target = ckpt.metadata.get("hpd.target")
    if target is not None:
        out_dim, in_dim = layer_tensor_schema(ckpt.config)[target]
        w_cim = ckpt.tensors["hpd.w_cim"]
        v = ckpt.tensors["hpd.v"]
        if w_cim.ndim != 2 or w_cim.shape[0] != in_dim:
            raise SchemaError(f"tensor 'hpd.w_cim' has shape {w_cim.shape}, expected ({in_dim}, r)")
        if v.ndim != 2 or v.shape[0] != out_dim or v.shape[1] != w_cim.shape[1]:
            raise SchemaError(f"tensor 'hpd.v' has shape {v.shape}, expected ({out_dim}, {w_cim.shape[1]})")


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    validate_checkpoint(ckpt)
    config_blob = dict(asdict(ckpt.config))
    config_blob["metadata"] = dict(ckpt.metadata)
    blob = json.dumps(config_blob, sort_keys=True).encode("utf-8")

    names = list(ckpt.tensors)
    table = bytearray()
    payloads = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(ckpt.tensors[name], dtype="<f4")
        raw = arr.tobytes()
        nb = name.encode("utf-8")
        table += struct.pack("<H", len(nb)) + nb
        table += struct.pack("<BB", 0, arr.ndim)
        table += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        table += struct.pack("<QQ", offset, len(raw))
        payloads.append(raw)
        offset += len(raw)

    header = SSMW_MAGIC + struct.pack("<II", FORMAT_VERSION, len(blob)) + blob
    header += struct.pack("<I", len(names)) + bytes(table)
    pad = (-len(header)) % _DATA_ALIGN
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(b"\x00" * pad)
        for raw in payloads:
            fh.write(raw)


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(f"{self.path}: truncated while reading {what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf, path)
    magic = r.take(4, "magic")
    if magic != SSMW_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {SSMW_MAGIC!r}")
    (version, blob_len) = r.unpack("<II", "header")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported format version {version}")
    blob = json.loads(r.take(blob_len, "config blob").decode("utf-8"))
    metadata = {str(k): str(v) for k, v in blob.pop("metadata", {}).items()}
    try:
        config = ModelConfig(**{k: blob[k] for k in CONFIG_FIELDS})
    except KeyError as exc:
        raise SchemaError(f"{path}: config blob missing field {exc}") from exc

    (n_tensors,) = r.unpack("<I", "tensor count")
    entries = []
    for _ in range(n_tensors):
        (name_len,) = r.unpack("<H", "tensor name length")
        name = r.take(name_len, "tensor name").decode("utf-8")
        dtype_code, ndim = r.unpack("<BB", f"tensor {name} header")
        if dtype_code != 0:
            raise SchemaError(f"{path}: tensor {name!r} has unknown dtype code {dtype_code}")
        dims = r.unpack(f"<{ndim}Q", f"tensor {name} dims")
        offset, nbytes = r.unpack("<QQ", f"tensor {name} extent")
        entries.append((name, dims, offset, nbytes))

    data_start = (r.pos + _DATA_ALIGN - 1) // _DATA_ALIGN * _DATA_ALIGN
    tensors: dict[str, np.ndarray] = {}
    for name, dims, offset, nbytes in entries:
        count = math.prod(dims) if dims else 1
        if nbytes != 4 * count:
            raise SchemaError(
                f"{path}: tensor {name!r} byte length {nbytes} does not match dims {dims}"
            )
        lo = data_start + offset
        if lo + nbytes > len(buf):
            raise TruncatedFileError(f"{path}: truncated payload for tensor {name!r}")
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=lo).reshape(dims)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{path}: tensor {name!r} contains non-finite values")
        tensors[name] = arr.astype(np.float64)

    ckpt = Checkpoint(config=config, tensors=tensors, metadata=metadata)
    validate_checkpoint(ckpt)
    return ckpt


@dataclass(frozen=True)
class TokenCorpus:
    vocab_size: int
    tokens: np.ndarray

    def __post_init__(self):
        if self.tokens.ndim != 1 or self.tokens.size < 2:
            raise CorpusError("corpus needs at least 2 tokens")


def save_corpus(corpus: TokenCorpus, path) -> None:
    with open(path, "wb") as fh:
        fh.write(TOKS_MAGIC)
        fh.write(struct.pack("<IIQ", FORMAT_VERSION, corpus.vocab_size, corpus.tokens.size))
        fh.write(np.ascontiguousarray(corpus.tokens, dtype="<u4").tobytes())


def load_corpus(path) -> TokenCorpus:
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf, path)
    magic = r.take(4, "magic")
    if magic != TOKS_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {TOKS_MAGIC!r}")
    version, vocab_size, count = r.unpack("<IIQ", "corpus header")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported corpus version {version}")
    raw = r.take(4 * count, "token payload")
    tokens = np.frombuffer(raw, dtype="<u4").astype(np.int64)
    bad = np.nonzero(tokens >= vocab_size)[0]
    if bad.size:
        raise CorpusError(
            f"{path}: token {tokens[bad[0]]} at index {bad[0]} >= vocab_size {vocab_size}"
        )
    return TokenCorpus(vocab_size=vocab_size, tokens=tokens)


def _softplus_inv(y: np.ndarray) -> np.ndarray:
    # log(exp(y) - 1), stable for small y
    return np.log(np.expm1(y))


def generate_toy(config: ModelConfig, seed: int) -> Checkpoint:
    """Deterministic random checkpoint for property testing.

    Inner projections are i.i.d. normal scaled by 1/sqrt(fan_in).  A is kept
    negative by storing A_log with A = -exp(A_log), A_log[c, n] = ln(n + 1).
    dt_proj biases are set so softplus(bias) spans [1e-3, 1e-1] log-uniformly.
    Embedding and head rows carry a heavy-tailed per-row scale, mimicking the
    norm spread of trained token embeddings (frequent tokens learn larger
    rows); a flat-spectrum head would misrepresent how range-scaled analog
    noise interacts with the output projection.
    """
    c = config

    def normals(name: str, shape: tuple[int, ...], scale: float) -> np.ndarray:
        draws = normal_draw(stream_for(seed, "toy:" + name), math.prod(shape))
        return (draws * scale).reshape(shape)

    def row_scaled_embedding(name: str) -> np.ndarray:
        w = normals(name, (c.vocab_size, c.d_model), 1.0 / math.sqrt(c.d_model))
        ranks = np.arange(1, c.vocab_size + 1, dtype=np.float64)
        return w * (0.25 + 8.0 / np.sqrt(ranks))[:, None]

    tensors: dict[str, np.ndarray] = {}
    for i in range(c.n_layers):
        p = f"layers.{i}."
        tensors[p + "in_proj.weight"] = normals(
            p + "in_proj.weight", (2 * c.d_inner, c.d_model), 1.0 / math.sqrt(c.d_model)
        )
        tensors[p + "conv1d.weight"] = normals(
            p + "conv1d.weight", (c.d_inner, c.d_conv), 1.0 / math.sqrt(c.d_conv)
        )
        tensors[p + "conv1d.bias"] = np.zeros(c.d_inner)
        tensors[p + "x_proj.weight"] = normals(
            p + "x_proj.weight", (c.dt_rank + 2 * c.d_state, c.d_inner), 1.0 / math.sqrt(c.d_inner)
        )
        tensors[p + "dt_proj.weight"] = normals(
            p + "dt_proj.weight", (c.d_inner, c.dt_rank), 1.0 / math.sqrt(c.dt_rank)
        )
        u = uniform_draw(stream_for(seed, "toy:" + p + "dt_proj.bias"), c.d_inner)
        dt = np.exp(np.log(1e-3) + u * (np.log(1e-1) - np.log(1e-3)))
        tensors[p + "dt_proj.bias"] = _softplus_inv(dt)
        tensors[p + "A_log"] = np.tile(np.log(np.arange(1, c.d_state + 1.0)), (c.d_inner, 1))
        tensors[p + "D"] = np.ones(c.d_inner)
        tensors[p + "out_proj.weight"] = normals(
            p + "out_proj.weight", (c.d_model, c.d_inner), 1.0 / math.sqrt(c.d_inner)
        )
        tensors[p + "norm.weight"] = np.ones(c.d_model)
    tensors["embedding.weight"] = row_scaled_embedding("embedding.weight")
    tensors["norm_f.weight"] = np.ones(c.d_model)
    tensors["lm_head.weight"] = row_scaled_embedding("lm_head.weight")

    # toy tensors round-trip through the storage dtype so in-memory and
    # saved/loaded checkpoints are bit-identical
    tensors = {k: v.astype(np.float32).astype(np.float64) for k, v in tensors.items()}
    metadata = {"provenance": f"toy(seed={seed})", "format": f"SSMW v{FORMAT_VERSION}"}
    return Checkpoint(config=config, tensors=tensors, metadata=metadata)
