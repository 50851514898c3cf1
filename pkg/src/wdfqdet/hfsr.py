"""High-frequency specificity retention and the gradient consistency loss."""
import numpy as np

from . import tensor as T
from .errors import ArgumentError, DimensionError

EPS = 1e-6
BIN_CENTERS = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)
DILATIONS = {1: 1, 2: 2, 3: 3}


def init_params(store, prefix, channels):
    for mod in ("ir", "rgb"):
        p = f"{prefix}.ms_{mod}"
        store.add(f"{p}.k1", (channels, channels, 1, 1))
        store.add(f"{p}.k3", (channels, channels, 3, 3))
        store.add(f"{p}.k5", (channels, channels, 5, 5))
        store.add(f"{p}.b", (channels,), "zeros")
    store.add(f"{prefix}.dw.w", (2 * channels, 1, 3, 3))
    store.add(f"{prefix}.dw.b", (2 * channels,), "zeros")
    store.add(f"{prefix}.pw.w", (channels, 2 * channels, 1, 1))
    store.add(f"{prefix}.pw.b", (channels,), "zeros")


def multiscale_conv(x, params, prefix):
    """Sum of 1x1, 3x3 and 5x5 same-size convolutions."""
    y = T.conv2d(x, params[f"{prefix}.k1"])
    y = T.add(y, T.conv2d(x, params[f"{prefix}.k3"], pad=1))
    y = T.add(y, T.conv2d(x, params[f"{prefix}.k5"], pad=2))
    return T.bias_add(y, params[f"{prefix}.b"])


def sobel(x, dilation=1):
    """Sobel responses (gx, gy) with taps spaced ``dilation`` apart.

    Borders replicate the edge value, so flat maps give exactly zero.
    """
    x = T.as_var(x)
    d = dilation
    h, w = x.shape[2], x.shape[3]
    p = T.pad_replicate(x, d)
    dx = T.sub(T.getitem(p, np.s_[:, :, :, 2 * d:]), T.getitem(p, np.s_[:, :, :, :w]))
    gx = T.add(T.add(T.getitem(dx, np.s_[:, :, 0:h]), T.scale(T.getitem(dx, np.s_[:, :, d:d + h]), 2.0)),
               T.getitem(dx, np.s_[:, :, 2 * d:2 * d + h]))
    dy = T.sub(T.getitem(p, np.s_[:, :, 2 * d:, :]), T.getitem(p, np.s_[:, :, :h, :]))
    gy = T.add(T.add(T.getitem(dy, np.s_[..., 0:w]), T.scale(T.getitem(dy, np.s_[..., d:d + w]), 2.0)),
               T.getitem(dy, np.s_[..., 2 * d:2 * d + w]))
    return gx, gy


def hog_map(x):
    """Dense orientation-energy map with the same shape as ``x``.

    Gradient magnitude is soft-assigned to four orientation bins with
    cos^2 weights (angles mod pi), the bins are averaged, and the result is
    divided by its local 3x3 L2 norm.
    """
    x = T.as_var(x)
    gx, gy = sobel(x, 1)
    r2 = T.add(T.mul(gx, gx), T.mul(gy, gy))
    mag = T.sub(T.sqrt(T.add(r2, EPS)), np.sqrt(EPS))
    denom = T.add(r2, EPS)
    acc = None
    for center in BIN_CENTERS:
        proj = T.add(T.scale(gx, np.cos(center)), T.scale(gy, np.sin(center)))
        weight = T.div(T.mul(proj, proj), denom)
        term = T.mul(mag, weight)
        acc = term if acc is None else T.add(acc, term)
    avg = T.scale(acc, 1.0 / len(BIN_CENTERS))
    c = x.shape[1]
    box = np.ones((c, 1, 3, 3))
    local = T.conv2d(T.mul(avg, avg), box, groups=c, pad=1)
    return T.div(avg, T.sqrt(T.add(local, EPS * EPS)))


def hog_enhance(x):
    return T.add(x, hog_map(x))


def fuse_specific(f_ir, f_rgb, params, prefix):
    """Concatenate, depthwise 3x3, then pointwise 2C -> C."""
    if T.value_of(f_ir).shape != T.value_of(f_rgb).shape:
        raise DimensionError(
            f"fuse_specific shapes differ: {T.value_of(f_ir).shape} vs {T.value_of(f_rgb).shape}")
    cat = T.concat([f_ir, f_rgb], axis=1)
    c2 = cat.shape[1]
    y = T.bias_add(T.conv2d(cat, params[f"{prefix}.dw.w"], groups=c2, pad=1), params[f"{prefix}.dw.b"])
    return T.bias_add(T.conv2d(y, params[f"{prefix}.pw.w"]), params[f"{prefix}.pw.b"])


def hfsr(fh_ir, fh_rgb, params, prefix):
    a = hog_enhance(multiscale_conv(fh_ir, params, f"{prefix}.ms_ir"))
    b = hog_enhance(multiscale_conv(fh_rgb, params, f"{prefix}.ms_rgb"))
    return fuse_specific(a, b, params, prefix)


def grad_bank(x, k):
    """|Gx| + |Gy| of the Sobel pair dilated by rate k (k in 1..3)."""
    if k not in DILATIONS:
        raise ArgumentError(f"gradient scale k must be 1, 2 or 3, got {k!r}")
    gx, gy = sobel(x, DILATIONS[k])
    return T.add(T.absolute(gx), T.absolute(gy))


def grad_consistency_loss(fh, fh_ir, fh_rgb):
    """Mean-normalised L1 distance of ``fh`` to the gradient maps of both inputs."""
    shapes = {T.value_of(t).shape for t in (fh, fh_ir, fh_rgb)}
    if len(shapes) != 1:
        raise DimensionError(f"grad_consistency_loss shapes differ: {sorted(shapes)}")
    total = None
    for k in (1, 2, 3):
        for src in (fh_ir, fh_rgb):
            term = T.sum_(T.absolute(T.sub(fh, grad_bank(src, k))))
            total = term if total is None else T.add(total, term)
    return T.scale(total, 1.0 / T.value_of(fh).size)
