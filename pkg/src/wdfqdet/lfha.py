"""Low-frequency homogeneity alignment.

Channel swap between the IR and RGB approximation bands, efficient channel
attention per modality, then single-head cross-modal attention with IR
queries and RGB keys/values:

    out = softmax(f(ir) g(rgb)^T / sqrt(D_a)) h(rgb)

followed by a projection back to the level's channel count.
"""
import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError


def init_params(store, prefix, channels, attn_dim=None, eca_kernel=3):
    attn_dim = attn_dim or channels
    for name in ("f", "g", "h"):
        store.add(f"{prefix}.{name}", (channels, attn_dim))
    store.add(f"{prefix}.proj.w", (attn_dim, channels))
    store.add(f"{prefix}.proj.b", (channels,), "zeros")
    store.add(f"{prefix}.eca_ir", (eca_kernel,))
    store.add(f"{prefix}.eca_rgb", (eca_kernel,))


def channel_swap(a, b):
    """Exchange the first half of the channels between two maps."""
    if T.value_of(a).shape != T.value_of(b).shape:
        raise DimensionError(f"channel_swap shapes differ: {T.value_of(a).shape} vs {T.value_of(b).shape}")
    c = T.value_of(a).shape[1]
    if c % 2:
        raise ConfigError(f"channel_swap needs an even channel count, got {c}")
    half = c // 2
    lo, hi = np.s_[:, :half], np.s_[:, half:]
    a_new = T.concat([T.getitem(b, lo), T.getitem(a, hi)], axis=1)
    b_new = T.concat([T.getitem(a, lo), T.getitem(b, hi)], axis=1)
    return a_new, b_new


def eca(x, kernel):
    """Efficient channel attention: pooled descriptor, zero-padded 1-D conv, sigmoid gate."""
    x = T.as_var(x)
    k = T.value_of(kernel).shape[0]
    if k % 2 == 0:
        raise ConfigError(f"eca kernel size must be odd, got {k}")
    n, c = x.shape[:2]
    r = k // 2
    pooled = T.mean(x, axis=(2, 3))
    if r:
        zeros = np.zeros((n, r))
        pooled = T.concat([zeros, pooled, zeros], axis=1)
    logits = None
    for j in range(k):
        term = T.mul(T.getitem(pooled, np.s_[:, j:j + c]), T.getitem(kernel, np.s_[j:j + 1]))
        logits = term if logits is None else T.add(logits, term)
    gate = T.sigmoid(logits)
    return T.mul(x, T.reshape(gate, (n, c, 1, 1)))


def _tokens(x):
    n, c, h, w = x.shape
    return T.transpose(T.reshape(x, (n, c, h * w)), (0, 2, 1))


def alignment_attention(fl_ir, fl_rgb, params, prefix):
    """Row-stochastic (N, T_ir, T_rgb) attention matrix and the RGB values."""
    fl_ir, fl_rgb = T.as_var(fl_ir), T.as_var(fl_rgb)
    t_ir = fl_ir.shape[2] * fl_ir.shape[3]
    t_rgb = fl_rgb.shape[2] * fl_rgb.shape[3]
    if t_ir != t_rgb or fl_ir.shape[:2] != fl_rgb.shape[:2]:
        raise DimensionError(
            f"cross-modal token mismatch: IR {fl_ir.shape} vs RGB {fl_rgb.shape}")
    q = T.matmul(_tokens(fl_ir), params[f"{prefix}.f"])
    k = T.matmul(_tokens(fl_rgb), params[f"{prefix}.g"])
    v = T.matmul(_tokens(fl_rgb), params[f"{prefix}.h"])
    d = T.value_of(params[f"{prefix}.f"]).shape[1]
    logits = T.scale(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(d))
    return T.softmax(logits, axis=-1), v


def cross_modal_align(fl_ir, fl_rgb, params, prefix):
    attn, v = alignment_attention(fl_ir, fl_rgb, params, prefix)
    n, c, h, w = T.value_of(fl_ir).shape
    out = T.linear(T.matmul(attn, v), params[f"{prefix}.proj.w"], params[f"{prefix}.proj.b"])
    return T.reshape(T.transpose(out, (0, 2, 1)), (n, c, h, w))


def lfha(fl_ir, fl_rgb, params, prefix):
    """Swap, gate, and align the two approximation bands of one level."""
    a, b = channel_swap(fl_ir, fl_rgb)
    a = eca(a, params[f"{prefix}.eca_ir"])
    b = eca(b, params[f"{prefix}.eca_rgb"])
    return cross_modal_align(a, b, params, prefix)
