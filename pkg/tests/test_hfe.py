import numpy as np
import pytest

from wdfqdet import backbone, gradcheck, hfe, pipeline
from wdfqdet import tensor as T
from wdfqdet.errors import ConfigError, DimensionError
from wdfqdet.params import ParamStore

import oracles

CH, EMBED = (4, 6, 8), 4


def _params(seed, repblocks=1, channels=CH, embed=EMBED, biases=True):
    store = ParamStore(seed)
    hfe.init_params(store, "e", channels, embed, repblocks)
    rng = np.random.default_rng(seed)
    if biases:
        for name in store.names():
            if name.endswith(".b"):
                store[name] = rng.standard_normal(store[name].shape) * 0.1
    return dict(store.tensors)


def _pyramids(rng, channels=CH, extents=(8, 4, 2)):
    make = lambda: [rng.standard_normal((1, c, s, s)) for c, s in zip(channels, extents)]  # noqa: E731
    return make(), make()


def _conv_b(x, params, name, stride=1, pad=0):
    return oracles.conv2d(x, params[f"{name}.w"], stride=stride, pad=pad) + params[f"{name}.b"][None, :, None, None]


def _fusion(parts, params, name, repblocks):
    x = parts[0] + parts[1] + parts[2]
    for r in range(repblocks):
        x = x + np.maximum(_conv_b(x, params, f"{name}.rep{r}", pad=1), 0)
    return x


def _up(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


# level-5 attention -----------------------------------------------------------

def test_level5_loop_oracle():
    rng = np.random.default_rng(13)
    store = ParamStore(13)
    hfe.init_attention(store, "sa", 16)
    params = dict(store.tensors)
    for name in params:
        if name.endswith(".b") or name.endswith(".g"):
            params[name] = rng.standard_normal(params[name].shape)
    f5 = rng.standard_normal((1, 16, 2, 2))
    got, weights = hfe.level5_self_attention(f5, params, "sa", 4, return_weights=True)
    want, want_w = oracles.level5_self_attention(f5, params, "sa", 4)
    assert np.max(np.abs(T.value_of(got) - want)) <= 1e-12
    assert np.max(np.abs(T.value_of(weights) - np.array(want_w))) <= 1e-12


def test_level5_zero_attention_is_layer_norm(rng):
    store = ParamStore(0)
    hfe.init_attention(store, "sa", 8)
    params = dict(store.tensors)
    params["sa.o.w"] = np.zeros((8, 8))
    f5 = rng.standard_normal((1, 8, 2, 3))
    out = T.value_of(hfe.level5_self_attention(f5, params, "sa", 2))
    tok = f5[0].reshape(8, 6).T
    want = np.array([oracles.layer_norm(list(t), np.ones(8), np.zeros(8)) for t in tok]).T.reshape(8, 2, 3)
    assert np.max(np.abs(out[0] - want)) <= 1e-12
    # already-standardised tokens pass through up to the epsilon inside the normaliser
    std = (tok - tok.mean(1, keepdims=True)) / tok.std(1, keepdims=True)
    f5s = std.T.reshape(1, 8, 2, 3)
    assert np.max(np.abs(T.value_of(hfe.level5_self_attention(f5s, params, "sa", 2)) - f5s)) <= 1e-4


def test_level5_single_token(rng):
    store = ParamStore(4)
    hfe.init_attention(store, "sa", 6)
    params = dict(store.tensors)
    f5 = rng.standard_normal((1, 6, 1, 1))
    out, w = hfe.level5_self_attention(f5, params, "sa", 3, return_weights=True)
    assert np.array_equal(T.value_of(w), np.ones((1, 3, 1, 1)))
    x = f5[0, :, 0, 0]
    v = x @ params["sa.v.w"] + params["sa.v.b"]
    want = oracles.layer_norm(list(x + v @ params["sa.o.w"] + params["sa.o.b"]), np.ones(6), np.zeros(6))
    assert np.max(np.abs(T.value_of(out)[0, :, 0, 0] - want)) <= 1e-12


def test_level5_heads_must_divide():
    store = ParamStore(0)
    hfe.init_attention(store, "sa", 6)
    with pytest.raises(ConfigError):
        hfe.level5_self_attention(np.zeros((1, 6, 2, 2)), dict(store.tensors), "sa", 4)


# top-down / bottom-up ---------------------------------------------------------

def test_fpn_spatial_passthrough(rng):
    params = {k: np.zeros_like(v) for k, v in _params(0, channels=(4, 4, 4), embed=4).items()}
    params["e.fpn4.in2.w"] = np.eye(4)[:, :, None, None]
    (f3, f4, f5), (s3, s4, s5) = _pyramids(rng, (4, 4, 4))
    p4, _ = hfe.fpn_topdown(f5, f4, s4, f3, s3, params, "e", 1)
    assert np.array_equal(T.value_of(p4), s4)


def test_zero_inputs_give_zero_outputs():
    params = _params(1, biases=False)
    (f3, f4, f5), (s3, s4, s5) = [[np.zeros(p.shape) for p in pyr] for pyr in _pyramids(np.random.default_rng(0))]
    for out in hfe.run_hfe([f3, f4, f5], [s3, s4, s5], params, "e", 2, 1):
        assert not np.any(T.value_of(out))


def test_fpn_composition_oracle():
    rng = np.random.default_rng(17)
    params = _params(17, repblocks=2)
    (f3, f4, f5), (s3, s4, s5) = _pyramids(rng)
    p4, p3 = hfe.fpn_topdown(f5, f4, s4, f3, s3, params, "e", 2)
    w4 = _fusion([_conv_b(_up(f5), params, "e.fpn4.in0"), _conv_b(f4, params, "e.fpn4.in1"),
                  _conv_b(s4, params, "e.fpn4.in2")], params, "e.fpn4", 2)
    w3 = _fusion([_conv_b(_up(w4), params, "e.fpn3.in0"), _conv_b(f3, params, "e.fpn3.in1"),
                  _conv_b(s3, params, "e.fpn3.in2")], params, "e.fpn3", 2)
    assert np.max(np.abs(T.value_of(p4) - w4)) <= 1e-12
    assert np.max(np.abs(T.value_of(p3) - w3)) <= 1e-12


def test_pan_composition_oracle():
    rng = np.random.default_rng(19)
    params = _params(19, repblocks=1)
    p3, p4 = rng.standard_normal((1, EMBED, 8, 8)), rng.standard_normal((1, EMBED, 4, 4))
    f5s = rng.standard_normal((1, CH[2], 2, 2))
    s4, s5 = rng.standard_normal((1, CH[1], 4, 4)), rng.standard_normal((1, CH[2], 2, 2))
    n4, n5 = hfe.pan_bottomup(p3, p4, f5s, s4, s5, params, "e", 1)
    w4 = _fusion([_conv_b(p3, params, "e.pan4.in0", 2, 1), _conv_b(p4, params, "e.pan4.in1"),
                  _conv_b(s4, params, "e.pan4.in2")], params, "e.pan4", 1)
    w5 = _fusion([_conv_b(w4, params, "e.pan5.in0", 2, 1), _conv_b(f5s, params, "e.pan5.in1"),
                  _conv_b(s5, params, "e.pan5.in2")], params, "e.pan5", 1)
    assert np.max(np.abs(T.value_of(n4) - w4)) <= 1e-12
    assert np.max(np.abs(T.value_of(n5) - w5)) <= 1e-12


def test_pan_delta_kernel_downsamples(rng):
    params = {k: np.zeros_like(v) for k, v in _params(0).items()}
    delta = np.zeros((EMBED, EMBED, 3, 3))
    delta[np.arange(EMBED), np.arange(EMBED), 1, 1] = 1.0
    params["e.pan4.in0.w"] = delta
    p3 = rng.standard_normal((1, EMBED, 8, 8))
    n4, _ = hfe.pan_bottomup(p3, np.zeros((1, EMBED, 4, 4)), np.zeros((1, CH[2], 2, 2)),
                             np.zeros((1, CH[1], 4, 4)), np.zeros((1, CH[2], 2, 2)), params, "e", 1)
    assert np.array_equal(T.value_of(n4), p3[:, :, ::2, ::2])


def test_resolution_mismatch(rng):
    (f3, f4, f5), (s3, s4, s5) = _pyramids(rng)
    with pytest.raises(DimensionError):
        hfe.run_hfe([f3, f4[:, :, :2], f5], [s3, s4, s5], _params(0), "e", 2, 1)
    with pytest.raises(DimensionError):
        hfe.run_hfe([f3, f4], [s3, s4], _params(0), "e", 2, 1)


def test_fusion_relabeling_invariance(rng):
    params = _params(3)
    (f3, f4, f5), (s3, s4, s5) = _pyramids(rng, (4, 6, 8))
    swapped = dict(params)
    for part in ("w", "b"):
        swapped[f"e.fpn4.in1.{part}"], swapped[f"e.fpn4.in2.{part}"] = \
            params[f"e.fpn4.in2.{part}"], params[f"e.fpn4.in1.{part}"]
    a = hfe.fpn_topdown(f5, f4, s4, f3, s3, params, "e", 1)
    b = hfe.fpn_topdown(f5, s4, f4, f3, s3, swapped, "e", 1)
    for x, y in zip(a, b):
        assert np.max(np.abs(T.value_of(x) - T.value_of(y))) <= 1e-12


def test_shape_contract_for_64(test_cfg, rng):
    params = pipeline.build_params(test_cfg)
    sp = backbone.extract(rng.uniform(size=(1, 3, 64, 64)), params, test_cfg)
    out = hfe.run_hfe(sp, sp, params, "hfe.low", test_cfg.heads, test_cfg.repblocks)
    assert [T.value_of(o).shape[1:] for o in out] == [(32, 8, 8), (32, 4, 4), (32, 2, 2)]


def test_streams_read_their_own_spatial_modality(test_cfg, monkeypatch, rng):
    seen = {}
    real_extract, real_run = backbone.extract, hfe.run_hfe

    def tagged_extract(image, params, cfg):
        pyr = real_extract(image, params, cfg)
        seen[id(pyr[0])] = "ir" if T.value_of(image)[0, 0, 0, 0] == 0.25 else "rgb"
        return pyr

    def spy_run(freq, spatial, params, prefix, heads, repblocks):
        seen[prefix] = seen[id(spatial[0])]
        return real_run(freq, spatial, params, prefix, heads, repblocks)

    monkeypatch.setattr(pipeline.backbone, "extract", tagged_extract)
    monkeypatch.setattr(pipeline.hfe, "run_hfe", spy_run)
    ir = rng.uniform(size=(1, 3, 64, 64))
    ir[0, 0, 0, 0] = 0.25
    rgb = rng.uniform(0.5, 1, size=(1, 3, 64, 64))
    pipeline.forward(rgb, ir, pipeline.build_params(test_cfg), test_cfg)
    assert seen["hfe.low"] == "ir" and seen["hfe.high"] == "rgb"


def test_streams_have_disjoint_parameters(test_cfg, rng):
    params = pipeline.build_params(test_cfg)
    low = set(params.names("hfe.low."))
    high = set(params.names("hfe.high."))
    assert low and high and not low & high
    rgb, ir = rng.uniform(size=(1, 3, 64, 64)), rng.uniform(size=(1, 3, 64, 64))
    before = pipeline.forward(rgb, ir, params, test_cfg, keep=True).intermediates
    for name in high:
        params[name] = params[name] + 0.5
    after = pipeline.forward(rgb, ir, params, test_cfg, keep=True).intermediates
    for tag in ("p3", "n4", "n5"):
        assert T.value_of(before[f"hfe_low_{tag}"]).tobytes() == T.value_of(after[f"hfe_low_{tag}"]).tobytes()
        assert T.value_of(before[f"hfe_high_{tag}"]).tobytes() != T.value_of(after[f"hfe_high_{tag}"]).tobytes()


def test_gradient_of_summed_outputs(rng):
    params = _params(6)
    freq, spatial = _pyramids(rng)

    def total(f3):
        outs = hfe.run_hfe([f3] + freq[1:], spatial, params, "e", 2, 1)
        return T.add(T.add(T.sum_(outs[0]), T.sum_(outs[1])), T.sum_(outs[2]))

    assert gradcheck.check_function(total, [freq[0]], cotangent=1.0) <= 1e-5
