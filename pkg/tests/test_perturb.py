import numpy as np
import pytest

from ssmnoise.errors import ConfigError, SelectorError
from ssmnoise.model_io import ModelConfig, generate_toy
from ssmnoise.perturb import (
    NoiseSpec,
    TargetSelector,
    perturb_checkpoint,
    perturb_tensor,
    tensor_class,
)


@pytest.fixture(scope="module")
def toy():
    config = ModelConfig(d_model=8, n_layers=6, d_state=4, d_conv=3, expand=2, dt_rank=2, vocab_size=32)
    return generate_toy(config, seed=3)


def test_spec_defaults():
    assert NoiseSpec(sigma=0.1).mode == "additive-range"
    assert NoiseSpec(sigma=0.1, distribution="lognormal").mode == "multiplicative"


def test_spec_validation():
    with pytest.raises(ConfigError):
        NoiseSpec(sigma=-1.0)
    with pytest.raises(ConfigError):
        NoiseSpec(sigma=0.1, distribution="cauchy")
    with pytest.raises(ConfigError):
        NoiseSpec(sigma=0.1, mode="subtractive")
    with pytest.raises(ConfigError):
        NoiseSpec(sigma=0.1, distribution="lognormal", mode="additive-range")


def test_sigma_zero_identity():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(5, 7))
    for dist, mode in [("gaussian", "additive-range"), ("gaussian", "additive-std"),
                       ("gaussian", "multiplicative"), ("lognormal", "multiplicative")]:
        out = perturb_tensor(w, "w", NoiseSpec(sigma=0.0, distribution=dist, mode=mode))
        assert np.array_equal(out, w)


def test_lognormal_preserves_sign():
    rng = np.random.default_rng(1)
    w = rng.normal(size=1000)
    out = perturb_tensor(w, "w", NoiseSpec(sigma=0.5, distribution="lognormal"))
    assert np.array_equal(np.sign(out), np.sign(w))


def test_multiplicative_keeps_zeros():
    w = np.array([0.0, 1.0, -2.0, 0.0])
    for dist in ("gaussian", "lognormal"):
        out = perturb_tensor(w, "w", NoiseSpec(sigma=0.3, distribution=dist, mode="multiplicative"))
        assert out[0] == 0.0 and out[3] == 0.0


def test_additive_range_scaling_statistics():
    rng = np.random.default_rng(2)
    w = rng.uniform(-2.0, 2.0, 10**6)
    w[0] = 2.0  # pin the range
    out = perturb_tensor(w, "w", NoiseSpec(sigma=0.05, seed=9))
    target = 0.05 * 2.0
    noise = out - w
    assert abs(noise.std() - target) <= 0.01 * target
    assert abs(noise.mean()) <= 0.01 * target


def test_additive_std_scaling_statistics():
    rng = np.random.default_rng(3)
    w = rng.normal(size=10**6) * 3.0
    out = perturb_tensor(w, "w", NoiseSpec(sigma=0.1, mode="additive-std", seed=9))
    target = 0.1 * w.std()
    noise = out - w
    assert abs(noise.std() - target) <= 0.01 * target


def test_perturbation_deterministic():
    w = np.ones((4, 4))
    spec = NoiseSpec(sigma=0.1, seed=5, trial=2)
    assert np.array_equal(perturb_tensor(w, "a", spec), perturb_tensor(w, "a", spec))
    assert not np.array_equal(perturb_tensor(w, "a", spec), perturb_tensor(w, "b", spec))


def test_tensor_classes():
    assert tensor_class("layers.3.out_proj.weight") == "out_proj"
    assert tensor_class("layers.0.A_log") == "A_log"
    assert tensor_class("layers.0.D") is None
    assert tensor_class("lm_head.weight") == "lm_head"
    assert tensor_class("norm_f.weight") == "norm"
    assert tensor_class("hpd.v") is None
    assert tensor_class("hpd.w_cim", "lm_head.weight") == "lm_head"


def test_selector_validation():
    with pytest.raises(ConfigError):
        TargetSelector(layer_classes=frozenset())
    with pytest.raises(ConfigError):
        TargetSelector(layer_classes=frozenset({"bogus"}))


def test_targeting_single_block(toy):
    sel = TargetSelector(layer_classes=frozenset({"out_proj"}), block_indices=frozenset({5}))
    spec = NoiseSpec(sigma=0.1, seed=1)
    out = perturb_checkpoint(toy, sel, spec)
    for name in toy.tensors:
        same = np.array_equal(out.tensors[name], toy.tensors[name])
        assert same == (name != "layers.5.out_proj.weight"), name


def test_sigma_zero_checkpoint_identity(toy):
    sel = TargetSelector()
    out = perturb_checkpoint(toy, sel, NoiseSpec(sigma=0.0))
    for name in toy.tensors:
        assert np.array_equal(out.tensors[name], toy.tensors[name])


def test_checkpoint_perturbation_deterministic(toy):
    sel = TargetSelector()
    spec = NoiseSpec(sigma=0.05, seed=7, trial=3)
    a = perturb_checkpoint(toy, sel, spec)
    b = perturb_checkpoint(toy, sel, spec)
    for name in a.tensors:
        assert np.array_equal(a.tensors[name], b.tensors[name])


def test_compositional_determinism(toy):
    """One tensor at a time vs all at once: identical noise (lane keying)."""
    spec = NoiseSpec(sigma=0.05, seed=7)
    all_at_once = perturb_checkpoint(toy, TargetSelector(), spec)
    one = perturb_checkpoint(
        toy, TargetSelector(layer_classes=frozenset({"in_proj"}), block_indices=frozenset({2})), spec
    )
    name = "layers.2.in_proj.weight"
    assert np.array_equal(all_at_once.tensors[name], one.tensors[name])


def test_empty_selection_raises(toy):
    sel = TargetSelector(layer_classes=frozenset({"out_proj"}), block_indices=frozenset({99}))
    with pytest.raises(SelectorError):
        perturb_checkpoint(toy, sel, NoiseSpec(sigma=0.1))


def test_metadata_records_injection(toy):
    sel = TargetSelector(layer_classes=frozenset({"lm_head"}))
    out = perturb_checkpoint(toy, sel, NoiseSpec(sigma=0.02, seed=4))
    assert "perturb" in out.metadata
    assert "lm_head" in out.metadata["perturb"]
