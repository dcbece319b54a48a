"""Loading source checkpoints into flat name -> float32 array dicts."""
from __future__ import annotations

import os

import numpy as np

from .errors import SourceError


def load_state_dict(path) -> dict[str, np.ndarray]:
    """Read a source checkpoint (.pt/.pth/.bin torch pickle, .safetensors,
    or .npz) as a flat name -> float32 numpy dict, preserving key order."""
    ext = os.path.splitext(str(path))[1].lower()
    if not os.path.exists(path):
        raise SourceError(f"{path}: no such file")
    if ext in (".pt", ".pth", ".bin"):
        try:
            import torch
        except ImportError as exc:
            raise SourceError("reading torch checkpoints requires the torch package") from exc
        state = torch.load(path, map_location="cpu", weights_only=True)
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
        return {k: v.to(torch.float32).numpy() for k, v in state.items()}
    if ext == ".safetensors":
        try:
            from safetensors.numpy import load_file
        except ImportError as exc:
            raise SourceError("reading .safetensors requires the safetensors package") from exc
        return {k: np.asarray(v, dtype=np.float32) for k, v in load_file(str(path)).items()}
    if ext == ".npz":
        with np.load(path) as data:
            return {k: np.asarray(data[k], dtype=np.float32) for k in data.files}
    raise SourceError(f"{path}: unrecognized source format {ext!r}")
