"""Single-level orthonormal Haar analysis/synthesis on feature maps."""
from dataclasses import dataclass

from . import tensor as T
from .errors import DimensionError


@dataclass
class WaveletBands:
    ll: object
    lh: object
    hl: object
    hh: object
    high_reduced: object = None


def dwt_haar(x):
    """Split ``x`` into (ll, lh, hl, hh), each at half resolution.

    For a 2x2 block [[a, b], [c, d]]: ll = (a+b+c+d)/2, lh = (a+b-c-d)/2,
    hl = (a-b+c-d)/2, hh = (a-b-c+d)/2.
    """
    stacked = T.dwt_haar_stacked(x)
    return tuple(T.getitem(stacked, k) for k in range(4))


def idwt_haar(ll, lh, hl, hh):
    shapes = {tuple(T.value_of(b).shape) for b in (ll, lh, hl, hh)}
    if len(shapes) != 1:
        raise DimensionError(f"idwt_haar bands disagree in shape: {sorted(shapes)}")
    stacked = T.concat([T.reshape(b, (1,) + T.value_of(b).shape) for b in (ll, lh, hl, hh)], axis=0)
    return T.idwt_haar_stacked(stacked)


def init_params(store, prefix, channels):
    store.add(f"{prefix}.w", (channels, 3 * channels, 1, 1))
    store.add(f"{prefix}.b", (channels,), "zeros")


def reduce_high(lh, hl, hh, params, prefix):
    """Concatenate the three detail bands and mix them back to C channels."""
    cat = T.concat([lh, hl, hh], axis=1)
    return T.bias_add(T.conv2d(cat, params[f"{prefix}.w"]), params[f"{prefix}.b"])


def lift_to_level(band):
    """Nearest 2x upsampling back to the source level's extent."""
    return T.upsample_nearest(band, 2)


def decompose(x, params=None, prefix=None):
    ll, lh, hl, hh = dwt_haar(x)
    bands = WaveletBands(ll, lh, hl, hh)
    if params is not None:
        bands.high_reduced = reduce_high(lh, hl, hh, params, prefix)
    return bands
