"""Frequency-aware query selection and decoding.

Both enhanced streams are flattened to D-dim tokens and scaled by a learned
per-stream gate.  The top-K tokens seed the decoder queries, and each decoder
layer runs self-attention, frequency-aware deformable cross-attention (one
softmax shared by both streams, all levels, all points), a feed-forward block
and anchor refinement in logit space.
"""
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .hfe import init_attention, multihead_attention

STREAMS = ("high", "low")
ANCHOR_LOGIT_LIMIT = 8.0


@dataclass
class QueryState:
    content: object       # (N, K, D)
    anchor_logits: object  # (N, K, 4); anchors are their sigmoid
    indices: np.ndarray = None

    @property
    def anchors(self):
        return T.sigmoid(self.anchor_logits)


def init_params(store, cfg, prefix="fqs"):
    d, m, levels, ks = cfg.d_model, cfg.heads, 3, cfg.sampling_points
    for s in STREAMS:
        store.add(f"{prefix}.in_{s}.w", (cfg.embed_dim, d))
        store.add(f"{prefix}.in_{s}.b", (d,), "zeros")
        store.add(f"{prefix}.gate_{s}.w1", (d, d))
        store.add(f"{prefix}.gate_{s}.b1", (d,), "zeros")
        store.add(f"{prefix}.gate_{s}.w2", (d, 1))
        store.add(f"{prefix}.gate_{s}.b2", (1,), "zeros")
    store.add(f"{prefix}.score.w", (d, 1))
    store.add(f"{prefix}.score.b", (1,), "zeros")
    store.add(f"{prefix}.box.w", (d, 4))
    store.add(f"{prefix}.box.b", (4,), "zeros")
    for layer in range(cfg.decoder_layers):
        p = f"{prefix}.dec{layer}"
        store.add(f"{p}.pos.w1", (4, d))
        store.add(f"{p}.pos.b1", (d,), "zeros")
        store.add(f"{p}.pos.w2", (d, d))
        store.add(f"{p}.pos.b2", (d,), "zeros")
        init_attention(store, f"{p}.sa", d)
        init_faca(store, f"{p}.ca", d, m, levels, ks)
        store.add(f"{p}.ca_ln.g", (d,), "ones")
        store.add(f"{p}.ca_ln.b", (d,), "zeros")
        store.add(f"{p}.ffn.w1", (d, 4 * d))
        store.add(f"{p}.ffn.b1", (4 * d,), "zeros")
        store.add(f"{p}.ffn.w2", (4 * d, d))
        store.add(f"{p}.ffn.b2", (d,), "zeros")
        store.add(f"{p}.ffn_ln.g", (d,), "ones")
        store.add(f"{p}.ffn_ln.b", (d,), "zeros")
        store.add(f"{p}.refine.w", (d, 4))
        store.add(f"{p}.refine.b", (4,), "zeros")


def init_faca(store, prefix, d, heads, levels, points):
    n = len(STREAMS) * heads * levels * points
    # offsets start tiny so early sampling stays near the reference point
    store.add(f"{prefix}.offset.w", (d, 2 * n))
    store.tensors[f"{prefix}.offset.w"] *= 0.01
    store.add(f"{prefix}.offset.b", (2 * n,), "zeros")
    store.add(f"{prefix}.logit.w", (d, n))
    store.add(f"{prefix}.logit.b", (n,), "zeros")
    store.add(f"{prefix}.value.w", (d, d))
    store.add(f"{prefix}.value.b", (d,), "zeros")
    store.add(f"{prefix}.out.w", (d, d))
    store.add(f"{prefix}.out.b", (d,), "zeros")


# ---------------------------------------------------------------------------
# tokens and gating


def flatten_stream(pyramid, params, prefix, stream):
    """(N, C_e, h, w) maps -> (N, T, D) tokens plus the per-level grid sizes."""
    parts, grids = [], []
    for x in pyramid:
        n, c, h, w = T.value_of(x).shape
        parts.append(T.transpose(T.reshape(x, (n, c, h * w)), (0, 2, 1)))
        grids.append((h, w))
    tokens = T.concat(parts, axis=1)
    return T.linear(tokens, params[f"{prefix}.in_{stream}.w"], params[f"{prefix}.in_{stream}.b"]), grids


def unflatten_stream(tokens, grids):
    n, _, d = T.value_of(tokens).shape
    maps, start = [], 0
    for h, w in grids:
        part = T.getitem(tokens, np.s_[:, start:start + h * w, :])
        maps.append(T.reshape(T.transpose(part, (0, 2, 1)), (n, d, h, w)))
        start += h * w
    return maps


def stream_gate(tokens, params, prefix, stream):
    """Scalar gate per image: sigmoid(MLP(mean token)), shape (N, 1)."""
    desc = T.mean(tokens, axis=1)
    hidden = T.relu(T.linear(desc, params[f"{prefix}.gate_{stream}.w1"], params[f"{prefix}.gate_{stream}.b1"]))
    return T.sigmoid(T.linear(hidden, params[f"{prefix}.gate_{stream}.w2"], params[f"{prefix}.gate_{stream}.b2"]))


def gate_streams(f_high, f_low, params, prefix="fqs", override=None):
    """Scale every token of each stream by that stream's gate.

    ``override`` maps a stream name to a fixed gate value (used for ablations).
    """
    override = override or {}
    out = []
    for stream, tokens in zip(STREAMS, (f_high, f_low)):
        if stream in override:
            n = T.value_of(tokens).shape[0]
            gate = np.full((n, 1), float(override[stream]))
        else:
            gate = stream_gate(tokens, params, prefix, stream)
        out.append(T.mul(tokens, T.reshape(gate, (-1, 1, 1))))
    return tuple(out)


# ---------------------------------------------------------------------------
# query selection


def topk_indices(scores, k):
    """Indices of the k largest entries; ties go to the lower index."""
    scores = np.asarray(scores)
    if k > scores.shape[-1]:
        raise ConfigError(f"cannot select {k} queries from {scores.shape[-1]} tokens")
    order = np.argsort(-scores, axis=-1, kind="stable")
    return order[..., :k]


def select_queries(f_high, f_low, params, k, prefix="fqs"):
    cat = T.concat([f_high, f_low], axis=1)
    n, total, d = cat.shape
    scores = T.linear(cat, params[f"{prefix}.score.w"], params[f"{prefix}.score.b"])
    idx = topk_indices(T.value_of(scores)[..., 0], k)
    flat = (idx + np.arange(n)[:, None] * total).reshape(-1)
    content = T.reshape(T.take(T.reshape(cat, (n * total, d)), flat, axis=0), (n, k, d))
    logits = T.linear(content, params[f"{prefix}.box.w"], params[f"{prefix}.box.b"])
    logits = T.clip(logits, -ANCHOR_LOGIT_LIMIT, ANCHOR_LOGIT_LIMIT)
    return QueryState(content, logits, idx)


# ---------------------------------------------------------------------------
# decoder pieces


def positional_query(anchors, params, prefix):
    hidden = T.relu(T.linear(anchors, params[f"{prefix}.w1"], params[f"{prefix}.b1"]))
    return T.linear(hidden, params[f"{prefix}.w2"], params[f"{prefix}.b2"])


def decoder_self_attention(content, pos, params, prefix, heads, return_weights=False):
    """LN(z + MHA(q=k=z+P, v=z))."""
    qk = T.add(content, pos)
    out, weights = multihead_attention(qk, qk, content, params, prefix, heads)
    z = T.layer_norm(T.add(content, out), params[f"{prefix}.ln.g"], params[f"{prefix}.ln.b"])
    return (z, weights) if return_weights else z


def faca(content, ref_points, low_maps, high_maps, params, prefix, heads, points, return_weights=False):
    """Deformable cross-attention over both frequency streams.

    ``ref_points`` is (N, Q, 2) normalised (x, y).  Offsets are in cells of
    each level.  One softmax spans streams x levels x points per head.
    """
    content = T.as_var(content)
    n, q, d = content.shape
    levels = len(low_maps)
    if d % heads:
        raise ConfigError(f"d_model {d} not divisible by {heads} heads")
    dh = d // heads
    ns = len(STREAMS)
    offsets = T.reshape(T.linear(content, params[f"{prefix}.offset.w"], params[f"{prefix}.offset.b"]),
                        (n, q, ns, heads, levels, points, 2))
    logits = T.reshape(T.linear(content, params[f"{prefix}.logit.w"], params[f"{prefix}.logit.b"]),
                       (n, q, heads, ns * levels * points))
    weights = T.reshape(T.softmax(logits, axis=-1), (n, q, heads, ns, levels, points))
    ref = T.reshape(ref_points, (n, q, 1, 1, 2))
    acc = None
    for s, maps in enumerate((high_maps, low_maps)):
        for i, fmap in enumerate(maps):
            _, _, h, w = T.value_of(fmap).shape
            value = T.linear(T.transpose(fmap, (0, 2, 3, 1)), params[f"{prefix}.value.w"],
                             params[f"{prefix}.value.b"])
            value = T.reshape(T.transpose(T.reshape(value, (n, h, w, heads, dh)), (0, 3, 4, 1, 2)),
                              (n * heads, dh, h, w))
            off = T.getitem(offsets, np.s_[:, :, s, :, i])          # (N, Q, M, K, 2)
            loc = T.add(ref, T.mul(off, np.array([1.0 / w, 1.0 / h])))
            loc = T.reshape(T.transpose(loc, (0, 2, 1, 3, 4)), (n * heads, q * points, 2))
            sampled = T.reshape(T.bilinear_sample(value, loc), (n, heads, q, points, dh))
            wgt = T.transpose(T.getitem(weights, np.s_[:, :, :, s, i]), (0, 2, 1, 3))  # (N, M, Q, K)
            term = T.sum_(T.mul(sampled, T.reshape(wgt, (n, heads, q, points, 1))), axis=3)
            acc = term if acc is None else T.add(acc, term)
    merged = T.reshape(T.transpose(acc, (0, 2, 1, 3)), (n, q, d))
    out = T.linear(merged, params[f"{prefix}.out.w"], params[f"{prefix}.out.b"])
    return (out, weights) if return_weights else out


def feed_forward(z, params, prefix):
    hidden = T.relu(T.linear(z, params[f"{prefix}.ffn.w1"], params[f"{prefix}.ffn.b1"]))
    y = T.linear(hidden, params[f"{prefix}.ffn.w2"], params[f"{prefix}.ffn.b2"])
    return T.layer_norm(T.add(z, y), params[f"{prefix}.ffn_ln.g"], params[f"{prefix}.ffn_ln.b"])


def refine_anchors(content, anchor_logits, params, prefix):
    delta = T.linear(content, params[f"{prefix}.refine.w"], params[f"{prefix}.refine.b"])
    return T.clip(T.add(anchor_logits, delta), -ANCHOR_LOGIT_LIMIT, ANCHOR_LOGIT_LIMIT)


def decoder_layer(state, low_maps, high_maps, params, prefix, heads, points):
    anchors = T.sigmoid(state.anchor_logits)
    pos = positional_query(anchors, params, f"{prefix}.pos")
    z = decoder_self_attention(state.content, pos, params, f"{prefix}.sa", heads)
    ref = T.getitem(anchors, np.s_[..., :2])
    ca = faca(z, ref, low_maps, high_maps, params, f"{prefix}.ca", heads, points)
    z = T.layer_norm(T.add(z, ca), params[f"{prefix}.ca_ln.g"], params[f"{prefix}.ca_ln.b"])
    z = feed_forward(z, params, prefix)
    return QueryState(z, refine_anchors(z, state.anchor_logits, params, prefix), state.indices)


def decode(state, low_maps, high_maps, params, cfg, prefix="fqs", layers=None):
    layers = cfg.decoder_layers if layers is None else layers
    if layers < 1:
        raise ConfigError("decode needs at least one layer")
    for layer in range(layers):
        state = decoder_layer(state, low_maps, high_maps, params, f"{prefix}.dec{layer}",
                              cfg.heads, cfg.sampling_points)
    return state


def run_fqs(low_pyramid, high_pyramid, params, cfg, prefix="fqs", gate_override=None):
    """Tokens -> gates -> top-K queries -> decoder stack."""
    f_high, grids = flatten_stream(high_pyramid, params, prefix, "high")
    f_low, _ = flatten_stream(low_pyramid, params, prefix, "low")
    g_high, g_low = gate_streams(f_high, f_low, params, prefix, gate_override)
    state = select_queries(g_high, g_low, params, cfg.queries, prefix)
    return decode(state, unflatten_stream(g_low, grids), unflatten_stream(g_high, grids), params, cfg, prefix)
