"""Shared convolutional feature extractor emitting stride-8/16/32 levels.

Stands in for ResNet-50 stages 3-5: 3x3 stride-2 stem, 2x2 max pool, then per
level a 3x3 stride-2 conv followed by residual 3x3 blocks.  The same
parameters serve both modalities.
"""
from . import tensor as T
from .errors import ExtentError

LEVELS = (3, 4, 5)


def init_params(store, cfg):
    bb = cfg.backbone
    store.add("backbone.stem.w", (bb.stem_channels, bb.in_channels, 3, 3))
    store.add("backbone.stem.b", (bb.stem_channels,), "zeros")
    cin = bb.stem_channels
    for level, cout in zip(LEVELS, bb.level_channels):
        p = f"backbone.l{level}"
        store.add(f"{p}.down.w", (cout, cin, 3, 3))
        store.add(f"{p}.down.b", (cout,), "zeros")
        for k in range(bb.blocks):
            store.add(f"{p}.block{k}.w", (cout, cout, 3, 3))
            store.add(f"{p}.block{k}.b", (cout,), "zeros")
        cin = cout


def check_extent(height, width):
    if height % 64 or width % 64 or height <= 0 or width <= 0:
        raise ExtentError(f"image extents {height}x{width} must be positive multiples of 64")


def _conv_relu(x, params, name, stride):
    y = T.conv2d(x, params[f"{name}.w"], stride=stride, pad=1)
    return T.relu(T.bias_add(y, params[f"{name}.b"]))


def extract(image, params, cfg):
    """Return the level-3/4/5 feature maps of ``image`` (N, 3, H, W)."""
    image = T.as_var(image)
    check_extent(image.shape[2], image.shape[3])
    x = T.maxpool2(_conv_relu(image, params, "backbone.stem", 2))
    pyramid = []
    for level in LEVELS:
        p = f"backbone.l{level}"
        x = _conv_relu(x, params, f"{p}.down", 2)
        for k in range(cfg.backbone.blocks):
            y = T.conv2d(x, params[f"{p}.block{k}.w"], pad=1)
            x = T.relu(T.add(x, T.bias_add(y, params[f"{p}.block{k}.b"])))
        pyramid.append(x)
    return pyramid
