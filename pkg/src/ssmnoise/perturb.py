"""Deterministic analog-CIM weight perturbation.

Noise for each tensor comes from a lane keyed by (seed, tensor name, trial),
so perturbing one tensor or a whole checkpoint, serially or in parallel,
yields bit-identical results.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SelectorError
from .model_io import Checkpoint
from .rand import normal_draw, stream_for

DISTRIBUTIONS = ("gaussian", "lognormal")
MODES = ("additive-range", "additive-std", "multiplicative")

LAYER_CLASSES = (
    "A_log",
    "conv1d",
    "x_proj",
    "dt_proj",
    "in_proj",
    "out_proj",
    "lm_head",
    "embedding",
    "norm",
)


def default_mode(distribution: str) -> str:
    return "multiplicative" if distribution == "lognormal" else "additive-range"


@dataclass(frozen=True)
class NoiseSpec:
    """Distribution, scaling mode, sigma, and stream identity of one injection."""

    sigma: float
    distribution: str = "gaussian"
    mode: str | None = None
    seed: int = 0
    trial: int = 0

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"unknown distribution {self.distribution!r}")
        if self.mode is None:
            object.__setattr__(self, "mode", default_mode(self.distribution))
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.distribution == "lognormal" and self.mode != "multiplicative":
            raise ConfigError("lognormal noise is multiplicative by definition")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.trial < 0:
            raise ConfigError(f"trial must be >= 0, got {self.trial}")

    def describe(self) -> str:
        return f"{self.distribution}/{self.mode} sigma={self.sigma} seed={self.seed} trial={self.trial}"


def perturb_tensor(w: np.ndarray, name: str, spec: NoiseSpec) -> np.ndarray:
    """Apply one noise realization to a tensor.  sigma = 0 returns the input
    unchanged (bit-exact)."""
    w = np.asarray(w, dtype=np.float64)
    if spec.sigma == 0.0:
        return w.copy()
    eps = normal_draw(stream_for(spec.seed, name, spec.trial), w.size).reshape(w.shape)
    if spec.distribution == "lognormal":
        return w * np.exp(spec.sigma * eps)
    if spec.mode == "additive-range":
        scale = float(np.max(np.abs(w))) if w.size else 0.0
        return w + spec.sigma * scale * eps
    if spec.mode == "additive-std":
        return w + spec.sigma * float(np.std(w)) * eps
    return w * (1.0 + spec.sigma * eps)


def tensor_class(name: str, hpd_target: str | None = None) -> str | None:
    """Layer class of a checkpoint tensor; None for tensors that are never
    perturbation targets (the digital HPD factor)."""
    if name == "hpd.w_cim":
        return tensor_class(hpd_target) if hpd_target else None
    if name == "hpd.v":
        return None
    if name in ("embedding.weight",):
        return "embedding"
    if name in ("lm_head.weight",):
        return "lm_head"
    if name == "norm_f.weight":
        return "norm"
    if name.startswith("layers."):
        rest = name.split(".", 2)[2]
        head = rest.split(".")[0]
        if head in ("A_log", "D"):
            return "A_log" if head == "A_log" else None
        if head in ("conv1d", "x_proj", "dt_proj", "in_proj", "out_proj", "norm"):
            return head
    return None


def tensor_block(name: str) -> int | None:
    if name.startswith("layers."):
        return int(name.split(".")[1])
    return None


@dataclass(frozen=True)
class TargetSelector:
    """Which tensors to perturb: intersection of layer classes and block
    indices (block_indices=None means all blocks; top-level tensors match
    any block selection)."""

    layer_classes: frozenset = field(default_factory=lambda: frozenset(LAYER_CLASSES))
    block_indices: frozenset | None = None

    def __post_init__(self):
        classes = frozenset(self.layer_classes)
        unknown = classes - frozenset(LAYER_CLASSES)
        if unknown:
            raise ConfigError(f"unknown layer classes: {sorted(unknown)}")
        if not classes:
            raise ConfigError("selector needs at least one layer class")
        object.__setattr__(self, "layer_classes", classes)
        if self.block_indices is not None:
            object.__setattr__(self, "block_indices", frozenset(int(b) for b in self.block_indices))

    def matches(self, name: str, hpd_target: str | None = None) -> bool:
        cls = tensor_class(name, hpd_target)
        if cls is None or cls not in self.layer_classes:
            return False
        if self.block_indices is None:
            return True
        block = tensor_block(name if name != "hpd.w_cim" else (hpd_target or ""))
        return block is None or block in self.block_indices

    def describe(self) -> str:
        classes = "+".join(sorted(self.layer_classes))
        blocks = "all" if self.block_indices is None else "+".join(map(str, sorted(self.block_indices)))
        return f"{classes}@{blocks}"


def perturb_checkpoint(ckpt: Checkpoint, sel: TargetSelector, spec: NoiseSpec) -> Checkpoint:
    """New checkpoint with exactly the selected tensors perturbed."""
    hpd_target = ckpt.metadata.get("hpd.target")
    targeted = [n for n in ckpt.tensors if sel.matches(n, hpd_target)]
    if not targeted:
        raise SelectorError(f"selector {sel.describe()} matched no tensors")
    tensors = {}
    for name, w in ckpt.tensors.items():
        tensors[name] = perturb_tensor(w, name, spec) if name in targeted else w.copy()
    metadata = dict(ckpt.metadata)
    metadata["perturb"] = json.dumps(
        {"selector": sel.describe(), "spec": spec.describe()}, sort_keys=True
    )
    return Checkpoint(config=ckpt.config, tensors=tensors, metadata=metadata)
