import numpy as np
import pytest

from ssmnoise.engine import model_forward
from ssmnoise.errors import ConfigError, SchemaError
from ssmnoise.hpd import HpdPlacement, apply_hpd, decompose, hybrid_forward
from ssmnoise.model_io import ModelConfig, generate_toy, load_checkpoint, save_checkpoint
from ssmnoise.perturb import NoiseSpec, TargetSelector, perturb_checkpoint


@pytest.fixture(scope="module")
def toy():
    config = ModelConfig(d_model=16, n_layers=2, d_state=4, d_conv=3, expand=2, dt_rank=2, vocab_size=64)
    return generate_toy(config, seed=21)


def test_identity_decomposition():
    layer = decompose(np.eye(4))
    h = np.arange(4.0)
    assert np.allclose(hybrid_forward(layer, h), h, atol=1e-12)


def test_full_rank_reconstruction():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(12, 8))
    layer = decompose(w)
    rec = layer.v @ layer.w_cim.T
    assert np.linalg.norm(rec - w) <= 1e-9 * np.linalg.norm(w)


def test_rank_one_truncation_drops_second_direction():
    layer = decompose(np.diag([5.0, 1.0]), rank=1)
    y = hybrid_forward(layer, np.array([0.0, 1.0]))
    assert np.max(np.abs(y)) <= 1e-12


def test_rank_validation():
    with pytest.raises(ConfigError):
        decompose(np.eye(3), rank=4)
    with pytest.raises(ConfigError):
        decompose(np.eye(3), rank=0)


def test_zero_noise_equivalence_random_cases():
    rng = np.random.default_rng(1)
    for _ in range(20):
        out_dim = int(rng.integers(2, 30))
        in_dim = int(rng.integers(2, 30))
        w = rng.normal(size=(out_dim, in_dim))
        h = rng.normal(size=in_dim)
        layer = decompose(w)
        y = hybrid_forward(layer, h)
        ref = w @ h
        assert np.max(np.abs(y - ref)) <= 1e-5 * max(1.0, np.max(np.abs(ref)))


def test_sigma_zero_spec_matches_noise_absent():
    rng = np.random.default_rng(2)
    layer = decompose(rng.normal(size=(6, 4)))
    h = rng.normal(size=4)
    a = hybrid_forward(layer, h)
    b = hybrid_forward(layer, h, noise=NoiseSpec(sigma=0.0))
    assert np.array_equal(a, b)


def test_bias_applied_after_digital_stage():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(5, 4))
    bias = rng.normal(size=5)
    layer = decompose(w, bias=bias)
    h = rng.normal(size=4)
    assert np.allclose(hybrid_forward(layer, h), w @ h + bias, atol=1e-10)


def test_digital_stage_immune_to_noise():
    rng = np.random.default_rng(4)
    layer = decompose(rng.normal(size=(8, 6)))
    v_before = layer.v.copy()
    hybrid_forward(layer, rng.normal(size=6), noise=NoiseSpec(sigma=0.5, seed=1))
    assert np.array_equal(layer.v, v_before)


def test_rank_monotone_reconstruction():
    rng = np.random.default_rng(5)
    w = rng.normal(size=(10, 7))
    errors = []
    for r in range(1, 8):
        layer = decompose(w, rank=r)
        errors.append(np.linalg.norm(layer.v @ layer.w_cim.T - w))
    assert all(b <= a + 1e-12 for a, b in zip(errors, errors[1:]))


def test_energy_identity_full_rank():
    rng = np.random.default_rng(6)
    w = rng.normal(size=(9, 5))
    layer = decompose(w)
    assert np.linalg.norm(layer.w_cim) == pytest.approx(np.linalg.norm(w), rel=1e-12)


def test_apply_then_forward_equivalence(toy):
    tokens = np.arange(24) % 64
    ref = model_forward(toy, tokens)
    hybrid = apply_hpd(toy)
    got = model_forward(hybrid, tokens)
    scale = np.max(np.abs(ref))
    assert np.max(np.abs(got - ref)) <= 1e-5 * scale


def test_apply_out_proj_target(toy):
    tokens = np.arange(16) % 64
    ref = model_forward(toy, tokens)
    hybrid = apply_hpd(toy, HpdPlacement(target="layers.1.out_proj.weight"))
    got = model_forward(hybrid, tokens)
    assert np.max(np.abs(got - ref)) <= 1e-5 * np.max(np.abs(ref))


def test_apply_rejects_bad_target(toy):
    with pytest.raises(SchemaError):
        apply_hpd(toy, HpdPlacement(target="layers.0.D"))
    with pytest.raises(SchemaError):
        apply_hpd(toy, HpdPlacement(target="nope.weight"))


def test_perturb_targets_cim_stage_only(toy):
    hybrid = apply_hpd(toy)
    sel = TargetSelector(layer_classes=frozenset({"lm_head"}))
    noisy = perturb_checkpoint(hybrid, sel, NoiseSpec(sigma=0.1, seed=2))
    assert not np.array_equal(noisy.tensors["hpd.w_cim"], hybrid.tensors["hpd.w_cim"])
    assert np.array_equal(noisy.tensors["hpd.v"], hybrid.tensors["hpd.v"])


def test_rewritten_checkpoint_round_trip(toy, tmp_path):
    hybrid = apply_hpd(toy)
    path = tmp_path / "hybrid.ssmw"
    save_checkpoint(hybrid, path)
    loaded = load_checkpoint(path)
    assert loaded.metadata["hpd.target"] == "lm_head.weight"
    tokens = np.arange(10) % 64
    assert np.array_equal(model_forward(loaded, tokens), model_forward(hybrid, tokens))


def test_noise_advantage_on_toy_head():
    config = ModelConfig(d_model=64, n_layers=1, d_state=8, d_conv=4, expand=2, dt_rank=4, vocab_size=1024)
    toy = generate_toy(config, seed=0)
    w = toy.tensors["lm_head.weight"]
    layer = decompose(w)
    rng = np.random.default_rng(0)
    h = rng.normal(size=64)
    ref = w @ h
    mse_full = mse_hpd = 0.0
    from ssmnoise.perturb import perturb_tensor

    for trial in range(64):
        spec = NoiseSpec(sigma=0.03, seed=1, trial=trial)
        mse_full += np.mean((perturb_tensor(w, "lm_head.weight", spec) @ h - ref) ** 2)
        mse_hpd += np.mean((hybrid_forward(layer, h, noise=spec) - ref) ** 2)
    assert mse_hpd <= 0.5 * mse_full
