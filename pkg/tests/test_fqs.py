import numpy as np
import pytest

from wdfqdet import fqs
from wdfqdet import tensor as T
from wdfqdet.config import PipelineConfig
from wdfqdet.errors import ConfigError
from wdfqdet.params import ParamStore

import oracles

TINY = PipelineConfig(embed_dim=8, d_model=8, heads=2, decoder_layers=2, sampling_points=2, queries=4)


def _params(cfg=TINY, seed=0, biases=True):
    store = ParamStore(seed)
    fqs.init_params(store, cfg, "q")
    params = dict(store.tensors)
    if biases:
        rng = np.random.default_rng(seed + 1000)
        for name in params:
            if name.endswith((".b", ".b1", ".b2")):
                params[name] = rng.standard_normal(params[name].shape) * 0.3
    return params


def _maps(rng, d=8, extents=((4, 4), (3, 2), (1, 2)), n=1):
    return [rng.standard_normal((n, d) + e) for e in extents]


# gate -------------------------------------------------------------------------

def test_zero_gate_mlp_halves_streams(rng):
    params = {k: np.zeros_like(v) for k, v in _params().items()}
    h, l = rng.standard_normal((2, 5, 8)), rng.standard_normal((2, 7, 8))
    gh, gl = fqs.gate_streams(h, l, params, "q")
    assert np.array_equal(T.value_of(gh), 0.5 * h) and np.array_equal(T.value_of(gl), 0.5 * l)


def test_saturated_gate_passes_stream(rng):
    params = _params()
    params["q.gate_high.b2"] = np.array([50.0])
    params["q.gate_high.w2"] = np.zeros_like(params["q.gate_high.w2"])
    h, l = rng.standard_normal((1, 5, 8)), rng.standard_normal((1, 5, 8))
    gh, _ = fqs.gate_streams(h, l, params, "q")
    assert np.max(np.abs(T.value_of(gh) - h)) <= 1e-15 * np.abs(h).max() * 10


def test_gate_scalar_oracle():
    rng = np.random.default_rng(23)
    params = _params(seed=23)
    h, l = rng.standard_normal((2, 6, 8)), rng.standard_normal((2, 3, 8))
    got = [T.value_of(t) for t in fqs.gate_streams(h, l, params, "q")]
    for s, stream in enumerate(("high", "low")):
        x = (h, l)[s]
        for n in range(2):
            desc = [sum(x[n, t, c] for t in range(x.shape[1])) / x.shape[1] for c in range(8)]
            hidden = [max(v, 0.0) for v in oracles.matvec_row(desc, params[f"q.gate_{stream}.w1"],
                                                              params[f"q.gate_{stream}.b1"])]
            gate = oracles.sigmoid(oracles.matvec_row(hidden, params[f"q.gate_{stream}.w2"],
                                                      params[f"q.gate_{stream}.b2"])[0])
            assert np.max(np.abs(got[s][n] - gate * x[n])) <= 1e-12


def test_gate_override(rng):
    h, l = rng.standard_normal((1, 4, 8)), rng.standard_normal((1, 4, 8))
    gh, gl = fqs.gate_streams(h, l, _params(), "q", override={"high": 0.0, "low": 1.0})
    assert not np.any(T.value_of(gh)) and np.array_equal(T.value_of(gl), l)


# selection ----------------------------------------------------------------------

def test_topk_examples():
    assert list(fqs.topk_indices(np.array([0.1, 0.9, 0.5]), 2)) == [1, 2]
    assert list(fqs.topk_indices(np.zeros(5), 2)) == [0, 1]
    with pytest.raises(ConfigError):
        fqs.topk_indices(np.zeros(3), 4)


def test_topk_sort_oracle(rng):
    for _ in range(20):
        scores = np.round(rng.standard_normal(30), 1)  # rounding forces ties
        want = sorted(range(30), key=lambda i: (-scores[i], i))[:5]
        assert list(fqs.topk_indices(scores, 5)) == want


def test_select_queries_contract(rng):
    params = _params()
    h, l = rng.standard_normal((2, 9, 8)), rng.standard_normal((2, 9, 8))
    state = fqs.select_queries(h, l, params, 5, "q")
    assert T.value_of(state.content).shape == (2, 5, 8)
    cat = np.concatenate([h, l], axis=1)
    scores = cat @ params["q.score.w"][:, 0] + params["q.score.b"][0]
    for n in range(2):
        chosen = set(state.indices[n])
        assert len(chosen) == 5
        rest = [scores[n, i] for i in range(18) if i not in chosen]
        assert min(scores[n, list(chosen)]) >= max(rest)
        assert np.array_equal(T.value_of(state.content)[n], cat[n, state.indices[n]])
    anchors = T.value_of(state.anchors)
    assert np.all((anchors >= 0) & (anchors <= 1))


# positional query / self-attention ----------------------------------------------

def test_positional_query(rng):
    params = _params()
    zero = {k: (np.zeros_like(v) if k.endswith((".w1", ".w2")) else v) for k, v in params.items()}
    a = rng.uniform(size=(1, 3, 4))
    assert np.array_equal(T.value_of(fqs.positional_query(a, zero, "q.dec0.pos"))[0, 1], params["q.dec0.pos.b2"])
    same = np.tile(a[:, :1], (1, 3, 1))
    p = T.value_of(fqs.positional_query(same, params, "q.dec0.pos"))
    assert np.array_equal(p[0, 0], p[0, 2])


def test_positional_query_oracle():
    rng = np.random.default_rng(29)
    params = _params(seed=29)
    a = rng.uniform(size=(1, 3, 4))
    got = T.value_of(fqs.positional_query(a, params, "q.dec0.pos"))
    for q in range(3):
        hidden = [max(v, 0.0) for v in oracles.matvec_row(a[0, q], params["q.dec0.pos.w1"], params["q.dec0.pos.b1"])]
        want = oracles.matvec_row(hidden, params["q.dec0.pos.w2"], params["q.dec0.pos.b2"])
        assert np.max(np.abs(got[0, q] - want)) <= 1e-12


def _sa_oracle(content, pos, params, prefix, heads):
    qk = [list(content[t] + pos[t]) for t in range(len(content))]
    out, weights = oracles.multihead_attention(qk, qk, [list(r) for r in content], params, prefix, heads)
    return np.array([oracles.layer_norm([a + b for a, b in zip(content[t], out[t])],
                                        params[f"{prefix}.ln.g"], params[f"{prefix}.ln.b"])
                     for t in range(len(content))]), weights


def test_decoder_self_attention_oracle():
    rng = np.random.default_rng(31)
    params = _params(seed=31)
    z, p = rng.standard_normal((1, 4, 8)), rng.standard_normal((1, 4, 8))
    got, w = fqs.decoder_self_attention(z, p, params, "q.dec0.sa", 2, return_weights=True)
    want, want_w = _sa_oracle(z[0], p[0], params, "q.dec0.sa", 2)
    assert np.max(np.abs(T.value_of(got)[0] - want)) <= 1e-12
    assert np.max(np.abs(T.value_of(w)[0] - np.array(want_w))) <= 1e-12


def test_decoder_self_attention_cases(rng):
    params = _params()
    z, p = rng.standard_normal((1, 1, 8)), rng.standard_normal((1, 1, 8))
    out, w = fqs.decoder_self_attention(z, p, params, "q.dec0.sa", 2, return_weights=True)
    assert np.array_equal(T.value_of(w), np.ones((1, 2, 1, 1)))
    v = z[0, 0] @ params["q.dec0.sa.v.w"] + params["q.dec0.sa.v.b"]
    want = oracles.layer_norm(list(z[0, 0] + v @ params["q.dec0.sa.o.w"] + params["q.dec0.sa.o.b"]),
                              params["q.dec0.sa.ln.g"], params["q.dec0.sa.ln.b"])
    assert np.max(np.abs(T.value_of(out)[0, 0] - want)) <= 1e-12
    twin = np.concatenate([z, z], axis=1)
    out = T.value_of(fqs.decoder_self_attention(twin, np.concatenate([p, p], 1), params, "q.dec0.sa", 2))
    assert np.array_equal(out[0, 0], out[0, 1])
    with pytest.raises(ConfigError):
        fqs.decoder_self_attention(z, p, params, "q.dec0.sa", 3)


# FACA ---------------------------------------------------------------------------

def test_faca_unrolled_oracle():
    rng = np.random.default_rng(37)
    params = _params(seed=37)
    params["q.dec0.ca.offset.w"] = rng.standard_normal(params["q.dec0.ca.offset.w"].shape)
    z = rng.standard_normal((2, 3, 8))
    ref = rng.uniform(size=(2, 3, 2))
    low, high = _maps(rng, n=2), _maps(rng, n=2)
    got, w = fqs.faca(z, ref, low, high, params, "q.dec0.ca", 2, 2, return_weights=True)
    want, want_w = oracles.faca(z, ref, low, high, params, "q.dec0.ca", 2, 2)
    assert np.max(np.abs(T.value_of(got) - want)) <= 1e-12
    assert np.max(np.abs(T.value_of(w).reshape(2, 3, 2, -1) - np.array(want_w))) <= 1e-12


def test_faca_uniform_weights(rng):
    params = _params()
    for k in ("offset", "logit"):
        params[f"q.dec0.ca.{k}.w"] = np.zeros_like(params[f"q.dec0.ca.{k}.w"])
        params[f"q.dec0.ca.{k}.b"] = np.zeros_like(params[f"q.dec0.ca.{k}.b"])
    z, ref = rng.standard_normal((1, 2, 8)), rng.uniform(size=(1, 2, 2))
    low, high = _maps(rng), _maps(rng)
    out, w = fqs.faca(z, ref, low, high, params, "q.dec0.ca", 2, 2, return_weights=True)
    assert np.all(T.value_of(w) == 1.0 / (2 * 3 * 2))
    for q in range(2):
        mean = np.mean([oracles.bilinear(m[0], *ref[0, q]) for m in low + high], axis=0)
        want = (mean @ params["q.dec0.ca.value.w"] + params["q.dec0.ca.value.b"]) @ params["q.dec0.ca.out.w"] \
            + params["q.dec0.ca.out.b"]
        assert np.max(np.abs(T.value_of(out)[0, q] - want)) <= 1e-12


def test_faca_constant_maps_ignore_location(rng):
    params = _params()
    c = rng.standard_normal(8)
    maps = [np.broadcast_to(c[None, :, None, None], (1, 8) + e).copy() for e in ((4, 4), (2, 2), (1, 1))]
    z = rng.standard_normal((1, 3, 8))
    a = T.value_of(fqs.faca(z, rng.uniform(size=(1, 3, 2)), maps, maps, params, "q.dec0.ca", 2, 2))
    params["q.dec0.ca.offset.w"] = rng.standard_normal(params["q.dec0.ca.offset.w"].shape) * 5
    b = T.value_of(fqs.faca(z, rng.uniform(size=(1, 3, 2)), maps, maps, params, "q.dec0.ca", 2, 2))
    want = (c @ params["q.dec0.ca.value.w"] + params["q.dec0.ca.value.b"]) @ params["q.dec0.ca.out.w"] \
        + params["q.dec0.ca.out.b"]
    assert np.max(np.abs(a - want)) <= 1e-12 and np.max(np.abs(b - want)) <= 1e-12


def test_faca_weights_form_simplex(rng):
    for seed in range(10):
        params = _params(seed=seed)
        params["q.dec0.ca.logit.w"] = rng.standard_normal(params["q.dec0.ca.logit.w"].shape) * 20
        _, w = fqs.faca(rng.standard_normal((1, 5, 8)), rng.uniform(size=(1, 5, 2)), _maps(rng), _maps(rng),
                        params, "q.dec0.ca", 2, 2, return_weights=True)
        w = T.value_of(w)
        assert np.all(w >= 0)
        assert np.all(np.abs(w.reshape(1, 5, 2, -1).sum(-1) - 1) <= 1e-12)


# decode -------------------------------------------------------------------------

def _state(rng, n=1, k=4):
    return fqs.QueryState(rng.standard_normal((n, k, 8)), rng.uniform(-3, 3, size=(n, k, 4)))


def test_zero_refinement_keeps_anchors(rng):
    params = _params()
    for layer in range(2):
        params[f"q.dec{layer}.refine.w"] = np.zeros((8, 4))
        params[f"q.dec{layer}.refine.b"] = np.zeros(4)
    state = _state(rng)
    out = fqs.decode(state, _maps(rng), _maps(rng), params, TINY, "q")
    assert np.array_equal(T.value_of(out.anchor_logits), state.anchor_logits)


def test_single_layer_is_manual_composition(rng):
    params = _params()
    state = _state(rng)
    low, high = _maps(rng), _maps(rng)
    out = fqs.decode(state, low, high, params, TINY, "q", layers=1)
    anchors = 1 / (1 + np.exp(-state.anchor_logits))
    pos = T.value_of(fqs.positional_query(anchors, params, "q.dec0.pos"))
    z = T.value_of(fqs.decoder_self_attention(state.content, pos, params, "q.dec0.sa", 2))
    ca = T.value_of(fqs.faca(z, anchors[..., :2], low, high, params, "q.dec0.ca", 2, 2))
    z = T.value_of(T.layer_norm(z + ca, params["q.dec0.ca_ln.g"], params["q.dec0.ca_ln.b"]))
    z = T.value_of(fqs.feed_forward(z, params, "q.dec0"))
    logits = np.clip(state.anchor_logits + z @ params["q.dec0.refine.w"] + params["q.dec0.refine.b"], -8, 8)
    assert np.max(np.abs(T.value_of(out.content) - z)) <= 1e-12
    assert np.max(np.abs(T.value_of(out.anchor_logits) - logits)) <= 1e-12
    with pytest.raises(ConfigError):
        fqs.decode(state, low, high, params, TINY, "q", layers=0)


def test_anchors_stay_in_unit_box():
    cfg = TINY.replace(decoder_layers=6)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        params = _params(cfg, seed)
        for layer in range(6):
            params[f"q.dec{layer}.refine.w"] *= 50
        out = fqs.decode(_state(rng), _maps(rng), _maps(rng), params, cfg, "q")
        a = T.value_of(out.anchors)
        assert np.all((a >= 0) & (a <= 1))


def test_decode_is_deterministic(rng):
    params = _params()
    state, low, high = _state(rng), _maps(rng), _maps(rng)
    a = fqs.decode(state, low, high, params, TINY, "q")
    b = fqs.decode(state, low, high, params, TINY, "q")
    assert T.value_of(a.content).tobytes() == T.value_of(b.content).tobytes()
    assert T.value_of(a.anchor_logits).tobytes() == T.value_of(b.anchor_logits).tobytes()


@pytest.mark.parametrize("silenced", ["high", "low"])
def test_silenced_stream_has_no_influence(rng, silenced):
    params = _params()
    low, high = _maps(rng, extents=((4, 4), (2, 2), (1, 1))), _maps(rng, extents=((4, 4), (2, 2), (1, 1)))
    cfg = TINY.replace(queries=6)

    def run(lo, hi):
        state = fqs.run_fqs(lo, hi, params, cfg, "q", gate_override={silenced: 0.0})
        return T.value_of(state.content).tobytes() + T.value_of(state.anchor_logits).tobytes()

    base = run(low, high)
    for _ in range(5):
        if silenced == "high":
            perturbed = run(low, [m + rng.standard_normal(m.shape) for m in high])
        else:
            perturbed = run([m + rng.standard_normal(m.shape) for m in low], high)
        assert perturbed == base
