"""SSM inference with deterministic analog-CIM noise injection and hybrid
projection decomposition."""

from .engine import discretize_zoh, lti_conv, lti_kernel, mamba_block_forward, model_forward, nll, selective_scan
from .harness import EvalResult, RatioInput, SweepReport, perplexity, robustness_ratio, sweep
from .hpd import HpdLayer, HpdPlacement, apply_hpd, decompose, hybrid_forward
from .model_io import (
    Checkpoint,
    ModelConfig,
    TokenCorpus,
    generate_toy,
    load_checkpoint,
    load_corpus,
    save_checkpoint,
    save_corpus,
)
from .numerics import SvdResult, log_sum_exp, matmul, softmax, svd
from .perturb import NoiseSpec, TargetSelector, perturb_checkpoint, perturb_tensor
from .rand import RngStream, hash_label, normal_draw, stream_for, uniform_draw

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "EvalResult",
    "HpdLayer",
    "HpdPlacement",
    "ModelConfig",
    "NoiseSpec",
    "RatioInput",
    "RngStream",
    "SvdResult",
    "SweepReport",
    "TargetSelector",
    "TokenCorpus",
    "apply_hpd",
    "decompose",
    "discretize_zoh",
    "generate_toy",
    "hash_label",
    "hybrid_forward",
    "load_checkpoint",
    "load_corpus",
    "log_sum_exp",
    "lti_conv",
    "lti_kernel",
    "mamba_block_forward",
    "matmul",
    "model_forward",
    "nll",
    "normal_draw",
    "perplexity",
    "perturb_checkpoint",
    "perturb_tensor",
    "robustness_ratio",
    "save_checkpoint",
    "save_corpus",
    "selective_scan",
    "softmax",
    "stream_for",
    "svd",
    "sweep",
    "uniform_draw",
]
