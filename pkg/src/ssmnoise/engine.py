"""Forward inference: discretization, LTI reference path, selective scan,
Mamba block, and full-model logits / negative log-likelihoods."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .model_io import Checkpoint
from .numerics import log_sum_exp, silu, softplus

DELTA_FLOOR = 1e-12
RMSNORM_EPS = 1e-5


@dataclass(frozen=True)
class SsmParams:
    """Per-sequence selective-scan inputs.

    a: d_inner x d_state (negative reals); b_t, c_t: L x d_state;
    d: d_inner; delta: L x d_inner (positive)."""

    a: np.ndarray
    b_t: np.ndarray
    c_t: np.ndarray
    d: np.ndarray
    delta: np.ndarray


@dataclass(frozen=True)
class LtiKernel:
    k: np.ndarray


def discretize_zoh(a: float, b: float, delta: float) -> tuple[float, float]:
    """Zero-order-hold discretization of a scalar (diagonal) system.

    a_bar = exp(a * delta); b_bar = ((exp(a * delta) - 1) / a) * b, with the
    small-|a*delta| branch replaced by the series limit delta*b*(1 + a*delta/2).
    """
    if delta <= 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    ad = a * delta
    a_bar = np.exp(ad)
    if abs(ad) < 1e-8:
        b_bar = delta * b * (1.0 + ad / 2.0)
    else:
        b_bar = np.expm1(ad) / a * b  # expm1 keeps the exact branch accurate near the switch
    return float(a_bar), float(b_bar)


def lti_kernel(a_bar: np.ndarray, b_bar: np.ndarray, c: np.ndarray, length: int) -> LtiKernel:
    """Convolution kernel k[j] = sum_n c_n * a_bar_n^j * b_bar_n of a diagonal
    discrete LTI system, materialized to `length` taps."""
    if length < 1:
        raise ShapeError(f"kernel length must be >= 1, got {length}")
    a_bar = np.atleast_1d(np.asarray(a_bar, dtype=np.float64))
    b_bar = np.atleast_1d(np.asarray(b_bar, dtype=np.float64))
    c = np.atleast_1d(np.asarray(c, dtype=np.float64))
    k = np.empty(length)
    power = np.ones_like(a_bar)
    for j in range(length):
        k[j] = float(np.sum(c * power * b_bar))
        power = power * a_bar
    return LtiKernel(k=k)


def lti_conv(kernel: LtiKernel, x: np.ndarray) -> np.ndarray:
    """Causal direct convolution y[t] = sum_{j<=t} k[j] * x[t-j], O(L^2)."""
    x = np.asarray(x, dtype=np.float64)
    return np.convolve(x, kernel.k)[: x.shape[0]]


def lti_recurrence(a_bar: np.ndarray, b_bar: np.ndarray, c: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Step the diagonal recurrence h_t = a_bar*h_{t-1} + b_bar*x_t,
    y_t = <c, h_t>; the independent reference for lti_conv."""
    a_bar = np.atleast_1d(np.asarray(a_bar, dtype=np.float64))
    b_bar = np.atleast_1d(np.asarray(b_bar, dtype=np.float64))
    c = np.atleast_1d(np.asarray(c, dtype=np.float64))
    h = np.zeros_like(a_bar)
    y = np.empty(x.shape[0])
    for t, xt in enumerate(x):
        h = a_bar * h + b_bar * xt
        y[t] = float(np.sum(c * h))
    return y


def selective_scan(params: SsmParams, x: np.ndarray) -> np.ndarray:
    """Input-dependent scan over time.

    h_t = exp(delta_t * a) * h_{t-1} + (delta_t * b_t) * x_t  (Euler rule for
    the input matrix, matching common Mamba inference code); y_t is the inner
    product of c_t with h_t over the state dimension, plus d * x_t.
    """
    x = np.asarray(x, dtype=np.float64)
    length, d_inner = x.shape
    delta = np.maximum(params.delta, DELTA_FLOOR)
    if delta.shape != (length, d_inner):
        raise ShapeError(f"delta shape {params.delta.shape} != {(length, d_inner)}")
    da = np.exp(delta[:, :, None] * params.a[None, :, :])  # L x d_inner x d_state
    dbx = delta[:, :, None] * params.b_t[:, None, :] * x[:, :, None]
    h = np.zeros((d_inner, params.a.shape[1]))
    y = np.empty((length, d_inner))
    for t in range(length):
        h = da[t] * h + dbx[t]
        y[t] = h @ params.c_t[t]
        if not np.all(np.isfinite(y[t])):
            raise NumericError(f"non-finite scan output at timestep {t}")
    return y + params.d[None, :] * x


def rms_norm(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    scale = np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + RMSNORM_EPS)
    return x / scale * weight


def causal_depthwise_conv(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Per-channel causal convolution of width d_conv over L x d_inner input."""
    length, d_inner = x.shape
    d_conv = weight.shape[1]
    padded = np.vstack([np.zeros((d_conv - 1, d_inner)), x])
    out = np.zeros_like(x)
    for j in range(d_conv):
        out += weight[:, j][None, :] * padded[j : j + length]
    return out + bias[None, :]


def mamba_block_forward(weights: dict[str, np.ndarray], prefix: str, u: np.ndarray,
                        hybrid_out=None) -> np.ndarray:
    """One residual block: norm, in-projection and gate split, causal conv +
    SiLU, input-dependent SSM parameters, selective scan, gated output
    projection, residual add.

    hybrid_out, when given, is a callable replacing the out_proj matmul
    (used for an HPD-rewritten block projection).
    """
    g = lambda name: weights[prefix + name]
    d_inner = g("A_log").shape[0]
    d_state = g("A_log").shape[1]
    dt_rank = g("dt_proj.weight").shape[1]

    xn = rms_norm(u, g("norm.weight"))
    xz = xn @ g("in_proj.weight").T
    x, z = xz[:, :d_inner], xz[:, d_inner:]
    x = silu(causal_depthwise_conv(x, g("conv1d.weight"), g("conv1d.bias")))

    proj = x @ g("x_proj.weight").T
    dt_low = proj[:, :dt_rank]
    b_t = proj[:, dt_rank : dt_rank + d_state]
    c_t = proj[:, dt_rank + d_state :]
    delta = softplus(dt_low @ g("dt_proj.weight").T + g("dt_proj.bias")[None, :])

    params = SsmParams(a=-np.exp(g("A_log")), b_t=b_t, c_t=c_t, d=g("D"), delta=delta)
    y = selective_scan(params, x) * silu(z)
    if hybrid_out is not None:
        out = hybrid_out(y)
    else:
        out = y @ g("out_proj.weight").T
    return u + out


def model_forward(ckpt: Checkpoint, tokens: np.ndarray) -> np.ndarray:
    """Logits (L x vocab_size) for a token sequence.

    Dispatches the two-stage hybrid projection for a tensor rewritten by
    apply_hpd (metadata key "hpd.target")."""
    from .hpd import checkpoint_hybrid_layer, hybrid_forward  # cycle with hpd module

    c = ckpt.config
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1:
        raise ShapeError("tokens must be a 1-D sequence")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= c.vocab_size):
        bad = int(np.nonzero((tokens < 0) | (tokens >= c.vocab_size))[0][0])
        raise ConfigError(f"token {tokens[bad]} at position {bad} out of range for vocab {c.vocab_size}")

    target = ckpt.metadata.get("hpd.target")
    layer = checkpoint_hybrid_layer(ckpt) if target is not None else None

    x = ckpt.tensors["embedding.weight"][tokens]
    for i in range(c.n_layers):
        prefix = f"layers.{i}."
        hybrid_out = None
        if target == prefix + "out_proj.weight":
            hybrid_out = lambda y: hybrid_forward(layer, y)
        x = mamba_block_forward(ckpt.tensors, prefix, x, hybrid_out=hybrid_out)
    x = rms_norm(x, ckpt.tensors["norm_f.weight"])
    if target == "lm_head.weight":
        return hybrid_forward(layer, x)
    return x @ ckpt.tensors["lm_head.weight"].T


def nll(logits: np.ndarray, tokens: np.ndarray) -> np.ndarray:
    """Per-position next-token negative log-likelihoods (natural log);
    length is len(tokens) - 1."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if logits.shape[0] != tokens.shape[0]:
        raise ShapeError(f"logits rows {logits.shape[0]} != token count {tokens.shape[0]}")
    out = np.empty(tokens.shape[0] - 1)
    for t in range(tokens.shape[0] - 1):
        out[t] = log_sum_exp(logits[t]) - logits[t, tokens[t + 1]]
    return out
