import math

import numpy as np
import pytest

from rcan import gradcheck, layers, metrics, network
from rcan.errors import InconsistentCheckpointError, ShapeError
from rcan.layers import Conv2dParams
from rcan.network import RcanConfig


def hand_count(G, B, C, r, scale, learned=True):
    """Closed-form layer-by-layer parameter sum, written independently of param_shapes."""
    conv3 = lambda cin, cout: cout * cin * 9 + cout  # noqa: E731
    conv1 = lambda cin, cout: cout * cin + cout  # noqa: E731
    rcab = 2 * conv3(C, C) + (conv1(C, C // r) + conv1(C // r, C) if learned else 0)
    group = B * rcab + conv3(C, C)
    stages = {2: [2], 3: [3], 4: [2, 2], 8: [2, 2, 2]}[scale]
    ups = sum(conv3(C, C * u * u) for u in stages)
    return conv3(3, C) + G * group + conv3(C, C) + ups + conv3(C, 3)


# --- configuration ---------------------------------------------------------------

def test_full_size_defaults():
    cfg = RcanConfig()
    assert (cfg.G, cfg.B, cfg.C, cfg.r, cfg.scale) == (10, 20, 64, 16, 4)
    assert cfg.use_lsc and cfg.use_ssc and cfg.ca_mode == "learned"


@pytest.mark.parametrize("bad", [dict(C=64, r=5), dict(scale=5), dict(G=0), dict(ca_mode="none")])
def test_invalid_config(bad):
    with pytest.raises(ValueError):
        RcanConfig(**bad)


def test_ca_mode_parsing():
    assert network.parse_ca_mode("learned") is None
    assert network.parse_ca_mode("constant(1)") == 1.0
    assert network.parse_ca_mode("constant( 0.1 )") == 0.1


def test_config_items_round_trip():
    cfg = RcanConfig(G=3, B=1, C=12, r=3, scale=3, use_lsc=False, ca_mode="constant(0.1)", mean_shift=None)
    assert RcanConfig.from_items(cfg.to_items()) == cfg


# --- parameter count -------------------------------------------------------------

def test_full_size_count():
    n = network.param_count(RcanConfig())
    assert n == hand_count(10, 20, 64, 16, 4) == 15_592_355
    assert 15.0e6 <= n <= 16.5e6


def test_smallest_config_by_hand():
    # head 28, one RCAB 10 + 10 + 2 + 2 (CA), group tail 10, trunk tail 10, upsampler 40, tail 30
    assert network.param_count(RcanConfig(G=1, B=1, C=1, r=1, scale=2)) == 142


@pytest.mark.parametrize("scale", [2, 3, 4, 8])
def test_count_matches_hand_sum(scale):
    for G, B, C, r in [(2, 2, 8, 4), (3, 1, 16, 16), (1, 4, 12, 3)]:
        assert network.param_count(RcanConfig(G=G, B=B, C=C, r=r, scale=scale)) == hand_count(G, B, C, r, scale)


def test_count_linear_in_blocks():
    counts = [network.param_count(RcanConfig(G=2, B=b, C=8, r=4, scale=2)) for b in range(1, 5)]
    assert len(set(np.diff(counts))) == 1


def test_constant_ca_drops_attention_parameters():
    cfg = RcanConfig(G=2, B=3, C=8, r=4, scale=2, ca_mode="constant(1)")
    assert network.param_count(cfg) == hand_count(2, 3, 8, 4, 2, learned=False)
    assert not any(".ca." in name for name in network.param_shapes(cfg))


# --- initialization --------------------------------------------------------------

def test_build_is_deterministic_and_seed_dependent(tiny):
    a, b, c = network.build(tiny, 0), network.build(tiny, 0), network.build(tiny, 1)
    assert list(a) == list(network.param_shapes(tiny))
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not np.array_equal(a["head.weight"], c["head.weight"])


def test_build_bounds_and_zero_biases(tiny):
    params = network.build(tiny, 3)
    assert params["head.weight"].shape == (8, 3, 3, 3)
    for name, arr in params.items():
        if name.endswith(".bias"):
            assert not arr.any()
        else:
            bound = math.sqrt(6.0 / np.prod(arr.shape[1:]))
            assert np.abs(arr).max() <= bound
            assert np.abs(arr).max() > 0.5 * bound


def test_full_size_head_shape():
    assert network.param_shapes(RcanConfig())["head.weight"] == (64, 3, 3, 3)


def test_validate_params(tiny):
    params = network.build(tiny, 0)
    network.validate_params(params, tiny)
    params["tail.weight"] = np.zeros((3, 8, 1, 1))
    with pytest.raises(InconsistentCheckpointError, match="tail.weight"):
        network.validate_params(params, tiny)


# --- forward ---------------------------------------------------------------------

@pytest.mark.parametrize("scale", [2, 3, 4, 8])
def test_output_shape(scale, rng):
    cfg = RcanConfig(G=1, B=1, C=4, r=2, scale=scale)
    y = network.predict(rng.uniform(size=(2, 3, 5, 3)), network.build(cfg, 0), cfg)
    assert y.shape == (2, 3, 5 * scale, 3 * scale)


def test_rejects_wrong_channel_count(tiny):
    with pytest.raises(ShapeError):
        network.predict(np.zeros((1, 1, 4, 4)), network.build(tiny, 0), tiny)


def test_zero_tail_outputs_the_mean(tiny, rng):
    params = network.build(tiny, 0)
    params["tail.weight"][...] = 0
    y = network.predict(rng.uniform(size=(1, 3, 4, 4)), params, tiny)
    for c, m in enumerate(network.DIV2K_MEAN):
        assert np.all(y[0, c] == m)


def test_forward_is_deterministic(tiny, rng):
    params = network.build(tiny, 0)
    x = rng.uniform(size=(1, 3, 6, 6))
    assert np.array_equal(network.predict(x, params, tiny), network.predict(x, params, tiny))


def test_float32_forward_keeps_dtype(tiny, rng):
    params = network.build(tiny, 0, dtype=np.float32)
    assert network.predict(rng.uniform(size=(1, 3, 4, 4)), params, tiny).dtype == np.float32


def _plain_residual_net(x, params, cfg):
    """Oracle: the same network with the attention gate deleted, composed from primitive layers."""
    conv = lambda v, n: layers.conv2d(v, Conv2dParams(params[n + ".weight"], params[n + ".bias"]))[0]  # noqa: E731
    mean = np.asarray(cfg.mean_shift).reshape(1, 3, 1, 1)
    f0 = conv(x - mean, "head")
    f = f0
    for g in range(cfg.G):
        h = f
        for b in range(cfg.B):
            pre = f"rir.groups.{g}.blocks.{b}"
            h = h + conv(layers.relu(conv(h, pre + ".conv1"))[0], pre + ".conv2")
        h = conv(h, f"rir.groups.{g}.tail")
        f = f + h if cfg.use_ssc else h
    f = conv(f, "rir.tail")
    f = f0 + f if cfg.use_lsc else f
    for i, u in enumerate(network.UPSCALE_STAGES[cfg.scale]):
        f = layers.pixel_shuffle(conv(f, f"upsample.{i}"), u)
    return conv(f, "tail") + mean


@pytest.mark.parametrize("scale", [2, 3, 4])
def test_constant_one_ca_is_bitwise_plain_residual(scale, rng):
    cfg = RcanConfig(G=2, B=2, C=8, r=4, scale=scale, ca_mode="constant(1)")
    params = network.build(cfg, 5)
    for name, arr in params.items():
        if name.endswith(".bias"):
            arr[...] = rng.uniform(-0.1, 0.1, arr.shape)
    x = rng.uniform(size=(1, 3, 6, 7))
    assert np.array_equal(network.predict(x, params, cfg), _plain_residual_net(x, params, cfg))


def test_learned_ca_differs_from_constant(tiny, rng):
    params = network.build(tiny, 0)
    x = rng.uniform(size=(1, 3, 6, 6))
    off = tiny.replace(ca_mode="constant(1)")
    stripped = {k: v for k, v in params.items() if ".ca." not in k}
    assert not np.allclose(network.predict(x, params, tiny), network.predict(x, stripped, off))


# --- self-ensemble ---------------------------------------------------------------

def test_self_ensemble_of_equivariant_map_is_identity(rng):
    x = rng.uniform(size=(2, 3, 5, 7))
    up = metrics.bicubic_upscaler(2)
    np.testing.assert_allclose(network.self_ensemble(up, x), up(x), rtol=0, atol=1e-10)
    np.testing.assert_allclose(network.self_ensemble(lambda v: v * 2.0, x), 2.0 * x, rtol=0, atol=1e-15)


def test_self_ensemble_network_shape(tiny, rng):
    params = network.build(tiny, 0)
    y = network.self_ensemble_forward(rng.uniform(size=(1, 3, 4, 6)), params, tiny)
    assert y.shape == (1, 3, 8, 12)


# --- backward --------------------------------------------------------------------

def test_backward_covers_every_parameter(tiny, rng):
    params = network.build(tiny, 0)
    y, tape = network.forward(rng.uniform(size=(1, 3, 4, 4)), params, tiny)
    grads, gx = network.backward(np.ones_like(y), tape)
    assert set(grads) == set(params)
    assert all(grads[k].shape == params[k].shape for k in params)
    assert gx.shape == (1, 3, 4, 4)


@pytest.mark.parametrize("seed", [0, 1])
def test_tiny_network_gradient(seed):
    r = gradcheck.network_check(seed=seed, per_tensor=8)
    assert r.checked > 100 and r.max_rel_err <= 1e-4, r


def test_gradient_with_skips_off_and_constant_ca():
    cfg = RcanConfig(G=2, B=1, C=4, r=2, scale=3, use_lsc=False, use_ssc=False, ca_mode="constant(0.1)")
    r = gradcheck.network_check(cfg, seed=4, per_tensor=8, input_shape=(1, 3, 4, 5))
    assert r.checked > 50 and r.max_rel_err <= 1e-4, r
