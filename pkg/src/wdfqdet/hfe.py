"""Hybrid feature enhancement neck.

Level-5 self-attention, then a top-down pass and a bottom-up pass.  Every
fusion site maps each of its three inputs to the common width with its own
linear transform, sums them, and runs residual 3x3 blocks.  Frequency
features must already be at level resolution.
"""
import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError


def init_attention(store, prefix, width):
    for name in ("q", "k", "v", "o"):
        store.add(f"{prefix}.{name}.w", (width, width))
        store.add(f"{prefix}.{name}.b", (width,), "zeros")
    store.add(f"{prefix}.ln.g", (width,), "ones")
    store.add(f"{prefix}.ln.b", (width,), "zeros")


def init_params(store, prefix, channels, embed, repblocks):
    c3, c4, c5 = channels
    init_attention(store, f"{prefix}.sa", c5)

    def site(name, inputs):
        for slot, (cin, k) in enumerate(inputs):
            store.add(f"{prefix}.{name}.in{slot}.w", (embed, cin, k, k))
            store.add(f"{prefix}.{name}.in{slot}.b", (embed,), "zeros")
        for r in range(repblocks):
            store.add(f"{prefix}.{name}.rep{r}.w", (embed, embed, 3, 3))
            store.add(f"{prefix}.{name}.rep{r}.b", (embed,), "zeros")

    site("fpn4", [(c5, 1), (c4, 1), (c4, 1)])
    site("fpn3", [(embed, 1), (c3, 1), (c3, 1)])
    site("pan4", [(embed, 3), (embed, 1), (c4, 1)])
    site("pan5", [(embed, 3), (c5, 1), (c5, 1)])


def multihead_attention(q_in, k_in, v_in, params, prefix, heads):
    """Standard scaled dot-product attention over (N, T, C) token arrays.

    Returns the output-projected tokens and the (N, M, T, T) weights.
    """
    n, t, c = T.value_of(q_in).shape
    if c % heads:
        raise ConfigError(f"width {c} not divisible by {heads} heads")
    dh = c // heads

    def split(x, name):
        y = T.linear(x, params[f"{prefix}.{name}.w"], params[f"{prefix}.{name}.b"])
        return T.transpose(T.reshape(y, (n, -1, heads, dh)), (0, 2, 1, 3))

    q, k, v = split(q_in, "q"), split(k_in, "k"), split(v_in, "v")
    logits = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    attn = T.softmax(logits, axis=-1)
    mixed = T.reshape(T.transpose(T.matmul(attn, v), (0, 2, 1, 3)), (n, t, c))
    out = T.linear(mixed, params[f"{prefix}.o.w"], params[f"{prefix}.o.b"])
    return out, attn


def level5_self_attention(f5, params, prefix, heads, return_weights=False):
    """One encoder layer over the level-5 cells: LN(x + MHSA(x))."""
    f5 = T.as_var(f5)
    n, c, h, w = f5.shape
    if c % heads:
        raise ConfigError(f"level-5 width {c} not divisible by {heads} heads")
    tokens = T.transpose(T.reshape(f5, (n, c, h * w)), (0, 2, 1))
    attn_out, weights = multihead_attention(tokens, tokens, tokens, params, prefix, heads)
    y = T.layer_norm(T.add(tokens, attn_out), params[f"{prefix}.ln.g"], params[f"{prefix}.ln.b"])
    out = T.reshape(T.transpose(y, (0, 2, 1)), (n, c, h, w))
    return (out, weights) if return_weights else out


def _transform(x, params, name, stride=1, pad=0):
    return T.bias_add(T.conv2d(x, params[f"{name}.w"], stride=stride, pad=pad), params[f"{name}.b"])


def fusion(parts, params, name, repblocks):
    shapes = {tuple(T.value_of(p).shape) for p in parts}
    if len(shapes) != 1:
        raise DimensionError(f"fusion site {name}: inputs disagree after projection: {sorted(shapes)}")
    x = T.add(T.add(parts[0], parts[1]), parts[2])
    for r in range(repblocks):
        x = T.add(x, T.relu(_transform(x, params, f"{name}.rep{r}", pad=1)))
    return x


def _up(x, params, name):
    return _transform(T.upsample_nearest(x, 2), params, name)


def _check_level(freq, spatial, level):
    fs, ss = T.value_of(freq).shape, T.value_of(spatial).shape
    if fs[2:] != ss[2:]:
        raise DimensionError(
            f"level {level}: frequency map {fs[2:]} and spatial map {ss[2:]} differ in resolution")


def fpn_topdown(f5_star, f4_freq, f4_spatial, f3_freq, f3_spatial, params, prefix, repblocks):
    _check_level(f4_freq, f4_spatial, 4)
    _check_level(f3_freq, f3_spatial, 3)
    p4 = fusion([_up(f5_star, params, f"{prefix}.fpn4.in0"),
                 _transform(f4_freq, params, f"{prefix}.fpn4.in1"),
                 _transform(f4_spatial, params, f"{prefix}.fpn4.in2")],
                params, f"{prefix}.fpn4", repblocks)
    p3 = fusion([_up(p4, params, f"{prefix}.fpn3.in0"),
                 _transform(f3_freq, params, f"{prefix}.fpn3.in1"),
                 _transform(f3_spatial, params, f"{prefix}.fpn3.in2")],
                params, f"{prefix}.fpn3", repblocks)
    return p4, p3


def pan_bottomup(p3, p4, f5_star, f4_spatial, f5_spatial, params, prefix, repblocks):
    n4 = fusion([_transform(p3, params, f"{prefix}.pan4.in0", stride=2, pad=1),
                 _transform(p4, params, f"{prefix}.pan4.in1"),
                 _transform(f4_spatial, params, f"{prefix}.pan4.in2")],
                params, f"{prefix}.pan4", repblocks)
    n5 = fusion([_transform(n4, params, f"{prefix}.pan5.in0", stride=2, pad=1),
                 _transform(f5_star, params, f"{prefix}.pan5.in1"),
                 _transform(f5_spatial, params, f"{prefix}.pan5.in2")],
                params, f"{prefix}.pan5", repblocks)
    return n4, n5


def run_hfe(freq_pyramid, spatial_pyramid, params, prefix, heads, repblocks):
    """Enhance one frequency stream with its spatial cues -> (P3, N4, N5)."""
    if len(freq_pyramid) != 3 or len(spatial_pyramid) != 3:
        raise DimensionError("run_hfe needs three levels in each pyramid")
    for level, (f, s) in enumerate(zip(freq_pyramid, spatial_pyramid), start=3):
        _check_level(f, s, level)
    f3, f4, f5 = freq_pyramid
    s3, s4, s5 = spatial_pyramid
    f5_star = level5_self_attention(f5, params, f"{prefix}.sa", heads)
    p4, p3 = fpn_topdown(f5_star, f4, s4, f3, s3, params, prefix, repblocks)
    n4, n5 = pan_bottomup(p3, p4, f5_star, s4, s5, params, prefix, repblocks)
    return p3, n4, n5
