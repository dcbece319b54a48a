"""Built-in deterministic tokenizers.

A tokenizer takes raw file bytes and returns (token id array, vocab size).
"""
from __future__ import annotations

import numpy as np

from .errors import TokenizerError


def _byte_tokenizer(raw: bytes) -> tuple[np.ndarray, int]:
    if len(raw) < 2:
        raise TokenizerError("corpus needs at least 2 tokens")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64), 256


def _whitespace_tokenizer(raw: bytes) -> tuple[np.ndarray, int]:
    """Word ids assigned by sorted vocabulary order, so the mapping depends
    only on the word set, not on word positions."""
    words = raw.decode("utf-8", errors="replace").split()
    if len(words) < 2:
        raise TokenizerError("corpus needs at least 2 tokens")
    vocab = {w: i for i, w in enumerate(sorted(set(words)))}
    return np.array([vocab[w] for w in words], dtype=np.int64), len(vocab)


def _id_tokenizer(raw: bytes) -> tuple[np.ndarray, int]:
    """Pre-tokenized input: whitespace-separated integer token ids, for
    corpora tokenized by an external tokenizer."""
    fields = raw.decode("ascii", errors="strict").split()
    if len(fields) < 2:
        raise TokenizerError("corpus needs at least 2 tokens")
    try:
        tokens = np.array([int(f) for f in fields], dtype=np.int64)
    except ValueError as exc:
        raise TokenizerError(f"id tokenizer expects integer fields: {exc}") from exc
    if tokens.min() < 0:
        raise TokenizerError("token ids must be nonnegative")
    return tokens, int(tokens.max()) + 1


_TOKENIZERS = {
    "byte": _byte_tokenizer,
    "whitespace": _whitespace_tokenizer,
    "ids": _id_tokenizer,
}


def get_tokenizer(tokenizer_id: str):
    try:
        return _TOKENIZERS[tokenizer_id]
    except KeyError:
        raise TokenizerError(
            f"unknown tokenizer {tokenizer_id!r}, available: {sorted(_TOKENIZERS)}"
        ) from None
