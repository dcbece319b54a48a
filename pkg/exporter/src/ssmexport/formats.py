"""Writers (and a reader used for re-export) for the SSMW v1 checkpoint
format and the TOKS v1 corpus format.

SSMW v1 layout, all fields little-endian:
  magic "SSMW" | u32 version=1 | u32 blob length | JSON config blob
  (model config fields plus a "metadata" string map) | u32 tensor count |
  per tensor: u16 name length, name bytes, u8 dtype code (0 = float32),
  u8 ndim, ndim x u64 dims, u64 payload offset, u64 payload length |
  zero padding to the next 64-byte boundary | concatenated payloads.

TOKS v1 layout: magic "TOKS" | u32 version=1 | u32 vocab size |
u64 token count | count x u32 token ids.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .errors import SourceError

SSMW_MAGIC = b"SSMW"
TOKS_MAGIC = b"TOKS"
FORMAT_VERSION = 1
_DATA_ALIGN = 64

CONFIG_FIELDS = ("d_model", "n_layers", "d_state", "d_conv", "expand", "dt_rank", "vocab_size")


def write_ssmw(path, config: dict, tensors: dict[str, np.ndarray], metadata: dict[str, str]) -> None:
    blob_dict = {k: int(config[k]) for k in CONFIG_FIELDS}
    blob_dict["metadata"] = {str(k): str(v) for k, v in metadata.items()}
    blob = json.dumps(blob_dict, sort_keys=True).encode("utf-8")

    table = bytearray()
    payloads = []
    offset = 0
    for name, arr in tensors.items():
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        nb = name.encode("utf-8")
        table += struct.pack("<H", len(nb)) + nb
        table += struct.pack("<BB", 0, arr.ndim)
        table += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        table += struct.pack("<QQ", offset, len(raw))
        payloads.append(raw)
        offset += len(raw)

    header = SSMW_MAGIC + struct.pack("<II", FORMAT_VERSION, len(blob)) + blob
    header += struct.pack("<I", len(tensors)) + bytes(table)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(b"\x00" * ((-len(header)) % _DATA_ALIGN))
        for raw in payloads:
            fh.write(raw)


def read_ssmw(path) -> tuple[dict, dict[str, np.ndarray], dict[str, str]]:
    """Read an SSMW file back, preserving tensor order (needed so re-export
    is bit-exact)."""
    with open(path, "rb") as fh:
        buf = fh.read()

    def need(n: int, pos: int) -> int:
        if pos + n > len(buf):
            raise SourceError(f"{path}: truncated SSMW file")
        return pos + n

    if buf[:4] != SSMW_MAGIC:
        raise SourceError(f"{path}: not an SSMW file (magic {buf[:4]!r})")
    pos = need(8, 4)
    version, blob_len = struct.unpack_from("<II", buf, 4)
    if version != FORMAT_VERSION:
        raise SourceError(f"{path}: unsupported SSMW version {version}")
    end = need(blob_len, pos)
    blob = json.loads(buf[pos:end].decode("utf-8"))
    pos = end
    metadata = {str(k): str(v) for k, v in blob.pop("metadata", {}).items()}
    config = {k: int(blob[k]) for k in CONFIG_FIELDS}

    pos_end = need(4, pos)
    (n_tensors,) = struct.unpack_from("<I", buf, pos)
    pos = pos_end
    entries = []
    for _ in range(n_tensors):
        pos_end = need(2, pos)
        (name_len,) = struct.unpack_from("<H", buf, pos)
        pos = need(name_len, pos_end)
        name = buf[pos_end:pos].decode("utf-8")
        pos_end = need(2, pos)
        dtype_code, ndim = struct.unpack_from("<BB", buf, pos)
        if dtype_code != 0:
            raise SourceError(f"{path}: tensor {name!r} has unknown dtype code {dtype_code}")
        pos = pos_end
        pos_end = need(8 * ndim + 16, pos)
        dims = struct.unpack_from(f"<{ndim}Q", buf, pos)
        offset, nbytes = struct.unpack_from("<QQ", buf, pos + 8 * ndim)
        pos = pos_end
        entries.append((name, dims, offset, nbytes))

    data_start = (pos + _DATA_ALIGN - 1) // _DATA_ALIGN * _DATA_ALIGN
    tensors: dict[str, np.ndarray] = {}
    for name, dims, offset, nbytes in entries:
        lo = data_start + offset
        need(nbytes, lo)
        tensors[name] = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=lo).reshape(dims)
    return config, tensors, metadata


def write_toks(path, vocab_size: int, tokens: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(TOKS_MAGIC)
        fh.write(struct.pack("<IIQ", FORMAT_VERSION, vocab_size, tokens.size))
        fh.write(np.ascontiguousarray(tokens, dtype="<u4").tobytes())
