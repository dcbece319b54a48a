"""Hybrid projection decomposition of an output projection.

The projection y = W h (+ b) is split into an analog stage z = (Q S)^T h that
stays on perturbable hardware and a digital stage y = P z + b that never sees
noise, where W = P diag(S) Q^T is the SVD.  The analog array shrinks from
out x in cells to in x r cells, which is what reduces range-scaled noise
exposure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SchemaError, ShapeError
from .model_io import Checkpoint, layer_tensor_schema
from .numerics import svd
from .perturb import NoiseSpec, perturb_tensor


@dataclass(frozen=True)
class HpdLayer:
    """w_cim: in x r analog factor (= Q diag(S)); v: out x r digital factor;
    bias: out or None; rank r <= min(out, in)."""

    w_cim: np.ndarray
    v: np.ndarray
    bias: np.ndarray | None
    rank: int


@dataclass(frozen=True)
class HpdPlacement:
    target: str = "lm_head.weight"
    rank: int | None = None  # None = full rank


def decompose(w: np.ndarray, bias: np.ndarray | None = None, rank: int | None = None) -> HpdLayer:
    """Factor a projection W (out x in) into analog and digital stages,
    optionally truncating to the largest `rank` singular values."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError(f"decompose expects a 2-D projection, got shape {w.shape}")
    full = min(w.shape)
    r = full if rank is None else int(rank)
    if not 1 <= r <= full:
        raise ConfigError(f"rank must be in [1, {full}], got {rank}")
    result = svd(w)
    q = result.vt[:r].T  # in x r
    return HpdLayer(
        # C-contiguous so the noise-free path and a sigma=0 perturbation copy
        # take the same matmul path bit for bit
        w_cim=np.ascontiguousarray(q * result.s[:r]),
        v=result.u[:, :r].copy(),
        bias=None if bias is None else np.asarray(bias, dtype=np.float64),
        rank=r,
    )


def hybrid_forward(layer: HpdLayer, h: np.ndarray, noise: NoiseSpec | None = None) -> np.ndarray:
    """Two-stage projection: analog z = w_cim'^T h (w_cim perturbed when a
    noise spec is given), then exact digital y = v z + bias."""
    w_cim = layer.w_cim if noise is None else perturb_tensor(layer.w_cim, "hpd.w_cim", noise)
    z = np.asarray(h, dtype=np.float64) @ w_cim
    y = z @ layer.v.T
    if layer.bias is not None:
        y = y + layer.bias
    return y


def apply_hpd(ckpt: Checkpoint, placement: HpdPlacement | None = None) -> Checkpoint:
    """Rewrite a checkpoint: the target projection tensor is replaced by
    "hpd.w_cim" and "hpd.v", and metadata records the placement so the engine
    dispatches the hybrid path."""
    placement = placement or HpdPlacement()
    if placement.target not in ckpt.tensors:
        raise SchemaError(f"hpd target {placement.target!r} not present in checkpoint")
    w = ckpt.tensors[placement.target]
    if w.ndim != 2:
        raise SchemaError(f"hpd target {placement.target!r} is not a 2-D projection")
    if placement.target not in layer_tensor_schema(ckpt.config):
        raise SchemaError(f"hpd target {placement.target!r} is not a schema projection")
    layer = decompose(w, rank=placement.rank)
    tensors = {k: v.copy() for k, v in ckpt.tensors.items() if k != placement.target}
    # round through the storage dtype so in-memory and saved/loaded rewrites
    # produce bit-identical hybrid outputs
    tensors["hpd.w_cim"] = layer.w_cim.astype(np.float32).astype(np.float64)
    tensors["hpd.v"] = layer.v.astype(np.float32).astype(np.float64)
    metadata = dict(ckpt.metadata)
    metadata["hpd.target"] = placement.target
    metadata["hpd.rank"] = str(layer.rank)
    return Checkpoint(config=ckpt.config, tensors=tensors, metadata=metadata)


def checkpoint_hybrid_layer(ckpt: Checkpoint) -> HpdLayer:
    """Reassemble the HpdLayer stored in a rewritten checkpoint."""
    if "hpd.target" not in ckpt.metadata:
        raise SchemaError("checkpoint carries no hpd rewrite")
    w_cim = ckpt.tensors["hpd.w_cim"]
    return HpdLayer(w_cim=w_cim, v=ckpt.tensors["hpd.v"], bias=None, rank=w_cim.shape[1])
