"""Cross-implementation parity: a torch reference forward in the source
ecosystem's conventions vs the primary engine on an exported checkpoint."""
import numpy as np
import pytest

torch = pytest.importorskip("torch")

from ssmexport.export import export_checkpoint
from ssmexport.manifest import ExportManifest

from ssmnoise.engine import model_forward
from ssmnoise.model_io import load_checkpoint

from test_exporter import CONFIG, make_source_state


def torch_reference_forward(state, config, tokens):
    """Independent float32 forward following the upstream inference recipe:
    RMSNorm, in-projection split, causal depthwise conv + SiLU, selective
    scan with Euler-discretized B, SiLU gate, residual blocks, final norm
    and head."""
    F = torch.nn.functional
    t = {k: torch.from_numpy(v) for k, v in state.items()}
    c = config
    d_inner = c["expand"] * c["d_model"]

    def rmsnorm(x, w):
        return x * torch.rsqrt(x.pow(2).mean(-1, keepdim=True) + 1e-5) * w

    x = t["backbone.embedding.weight"][torch.from_numpy(tokens)]
    for i in range(c["n_layers"]):
        p = f"backbone.layers.{i}."
        xn = rmsnorm(x, t[p + "norm.weight"])
        xz = xn @ t[p + "mixer.in_proj.weight"].T
        u, z = xz.split(d_inner, dim=-1)
        conv = F.conv1d(
            u.T.unsqueeze(0), t[p + "mixer.conv1d.weight"], t[p + "mixer.conv1d.bias"],
            padding=c["d_conv"] - 1, groups=d_inner,
        )[0, :, : u.shape[0]].T
        u = F.silu(conv)
        proj = u @ t[p + "mixer.x_proj.weight"].T
        dt_low, b, cc = proj.split([c["dt_rank"], c["d_state"], c["d_state"]], dim=-1)
        delta = F.softplus(dt_low @ t[p + "mixer.dt_proj.weight"].T + t[p + "mixer.dt_proj.bias"])
        a = -torch.exp(t[p + "mixer.A_log"])
        h = torch.zeros(d_inner, c["d_state"])
        ys = []
        for step in range(u.shape[0]):
            h = torch.exp(delta[step].unsqueeze(-1) * a) * h \
                + (delta[step].unsqueeze(-1) * b[step]) * u[step].unsqueeze(-1)
            ys.append(h @ cc[step])
        y = torch.stack(ys) + t[p + "mixer.D"] * u
        x = x + (y * F.silu(z)) @ t[p + "mixer.out_proj.weight"].T
    x = rmsnorm(x, t["backbone.norm_f.weight"])
    return (x @ t["lm_head.weight"].T).numpy()


def test_torch_parity_128_tokens(tmp_path):
    state = make_source_state(11)
    src = tmp_path / "model.pt"
    torch.save({k: torch.from_numpy(v) for k, v in state.items()}, src)
    out = tmp_path / "model.ssmw"
    export_checkpoint(src, ExportManifest(), out)
    ckpt = load_checkpoint(out)

    rng = np.random.default_rng(42)
    tokens = rng.integers(0, CONFIG["vocab_size"], 128).astype(np.int64)
    ref = torch_reference_forward(state, CONFIG, tokens)
    got = model_forward(ckpt, tokens)
    # 1e-3 covers 32-bit source arithmetic vs the engine's 64-bit path
    assert np.max(np.abs(got - ref)) <= 1e-3
