"""Dense float64 kernels with vector-Jacobian products.

Every differentiable operation lives in ``REGISTRY`` as a ``(forward, vjp)``
pair.  ``forward(*values, **attrs)`` returns ``(out, saved)``;
``vjp(cot, saved, values, out, **attrs)`` returns one gradient (or ``None``)
per input.

Values flowing through the model are ``Var`` objects.  When a ``Tape`` is
active and an input is being watched, each call appends one record; running
``Tape.gradients`` replays the records in reverse.  Nothing else is traced:
only registry ops can appear on a tape.
"""
import threading

import numpy as np

from . import kernels
from .errors import ArgumentError, DimensionError, UnsupportedOpError

REGISTRY = {}


def register(name):
    def wrap(pair_factory):
        fwd, bwd = pair_factory()
        REGISTRY[name] = (fwd, bwd)
        return pair_factory
    return wrap


# ---------------------------------------------------------------------------
# tape


_local = threading.local()


def active_tape():
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Var:
    __slots__ = ("value", "requires_grad", "__weakref__")
    __array_priority__ = 100

    def __init__(self, value, requires_grad=False):
        self.value = value
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)


def as_var(x):
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=np.float64))


def value_of(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


class _Record:
    __slots__ = ("op", "inputs", "values", "attrs", "out", "saved")

    def __init__(self, op, inputs, values, attrs, out, saved):
        self.op = op
        self.inputs = inputs
        self.values = values
        self.attrs = attrs
        self.out = out
        self.saved = saved


class Tape:
    """Linear record of registry calls, replayed backwards for gradients."""

    def __init__(self):
        self.records = []

    def __enter__(self):
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def watch(self, value):
        if isinstance(value, Var):
            value.requires_grad = True
            return value
        return Var(np.array(value, dtype=np.float64), requires_grad=True)

    def gradients(self, output, wrt, cotangent=None):
        """Gradients of ``<cotangent, output>`` with respect to each of ``wrt``."""
        if cotangent is None:
            cotangent = np.ones_like(output.value)
        keep = {id(w) for w in wrt}
        grads = {id(output): np.asarray(cotangent, dtype=np.float64)}
        for rec in reversed(self.records):
            key = id(rec.out)
            g = grads.get(key) if key in keep else grads.pop(key, None)
            if g is None:
                continue
            _, bwd = REGISTRY[rec.op]
            in_grads = bwd(g, rec.saved, rec.values, rec.out.value, **rec.attrs)
            for var, gi in zip(rec.inputs, in_grads):
                if var is None or gi is None or not var.requires_grad:
                    continue
                k = id(var)
                if k in grads:
                    grads[k] = grads[k] + gi
                else:
                    grads[k] = gi
        return [grads.get(id(w), np.zeros_like(w.value)) for w in wrt]


def apply(op, *inputs, **attrs):
    """Run registry op ``op`` on ``inputs``, recording it when needed."""
    try:
        fwd, _ = REGISTRY[op]
    except KeyError:
        raise UnsupportedOpError(f"unregistered op {op!r}") from None
    vars_ = [x if isinstance(x, Var) else None for x in inputs]
    values = [value_of(x) for x in inputs]
    out_value, saved = fwd(*values, **attrs)
    tape = active_tape()
    tracked = tape is not None and any(v is not None and v.requires_grad for v in vars_)
    out = Var(out_value, requires_grad=tracked)
    if tracked:
        tape.records.append(_Record(op, vars_, values, attrs, out, saved))
    return out


def vjp(op, inputs, cotangent, **attrs):
    """Per-input gradients of ``<cotangent, op(*inputs)>``."""
    try:
        fwd, bwd = REGISTRY[op]
    except KeyError:
        raise UnsupportedOpError(f"unregistered op {op!r}") from None
    values = [value_of(x) for x in inputs]
    out, saved = fwd(*values, **attrs)
    return bwd(np.asarray(cotangent, dtype=np.float64), saved, values, out, **attrs)


def _unbroadcast(g, shape):
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise


@register("add")
def _add():
    def fwd(a, b):
        return a + b, None

    def bwd(g, saved, values, out):
        a, b = values
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return fwd, bwd


@register("sub")
def _sub():
    def fwd(a, b):
        return a - b, None

    def bwd(g, saved, values, out):
        a, b = values
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return fwd, bwd


@register("mul")
def _mul():
    def fwd(a, b):
        return a * b, None

    def bwd(g, saved, values, out):
        a, b = values
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)
    return fwd, bwd


@register("div")
def _div():
    def fwd(a, b):
        return a / b, None

    def bwd(g, saved, values, out):
        a, b = values
        return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)
    return fwd, bwd


@register("scale")
def _scale():
    def fwd(x, factor):
        return x * factor, None

    def bwd(g, saved, values, out, factor):
        return (g * factor,)
    return fwd, bwd


@register("abs")
def _abs():
    def fwd(x):
        return np.abs(x), None

    def bwd(g, saved, values, out):
        return (g * np.sign(values[0]),)
    return fwd, bwd


@register("relu")
def _relu():
    def fwd(x):
        return np.maximum(x, 0.0), None

    def bwd(g, saved, values, out):
        return (g * (values[0] > 0.0),)
    return fwd, bwd


@register("maximum")
def _maximum():
    def fwd(a, b):
        return np.maximum(a, b), None

    def bwd(g, saved, values, out):
        a, b = values
        pick_a = a >= b
        return _unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)
    return fwd, bwd


@register("minimum")
def _minimum():
    def fwd(a, b):
        return np.minimum(a, b), None

    def bwd(g, saved, values, out):
        a, b = values
        pick_a = a <= b
        return _unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)
    return fwd, bwd


@register("clip")
def _clip():
    def fwd(x, lo, hi):
        return np.clip(x, lo, hi), None

    def bwd(g, saved, values, out, lo, hi):
        x = values[0]
        return (g * ((x >= lo) & (x <= hi)),)
    return fwd, bwd


@register("exp")
def _exp():
    def fwd(x):
        return np.exp(x), None

    def bwd(g, saved, values, out):
        return (g * out,)
    return fwd, bwd


@register("log")
def _log():
    def fwd(x):
        return np.log(x), None

    def bwd(g, saved, values, out):
        return (g / values[0],)
    return fwd, bwd


@register("sqrt")
def _sqrt():
    def fwd(x):
        return np.sqrt(x), None

    def bwd(g, saved, values, out):
        return (g / (2.0 * out),)
    return fwd, bwd


def _sigmoid_value(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@register("sigmoid")
def _sigmoid():
    def fwd(x):
        return _sigmoid_value(np.asarray(x, dtype=np.float64)), None

    def bwd(g, saved, values, out):
        return (g * out * (1.0 - out),)
    return fwd, bwd


@register("log_sigmoid")
def _log_sigmoid():
    def fwd(x):
        return -np.logaddexp(0.0, -x), None

    def bwd(g, saved, values, out):
        return (g * _sigmoid_value(-np.asarray(values[0], dtype=np.float64)),)
    return fwd, bwd


# ---------------------------------------------------------------------------
# reductions and shape plumbing


@register("sum")
def _sum():
    def fwd(x, axis=None, keepdims=False):
        return np.sum(x, axis=axis, keepdims=keepdims), None

    def bwd(g, saved, values, out, axis=None, keepdims=False):
        x = values[0]
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)
    return fwd, bwd


@register("mean")
def _mean():
    def fwd(x, axis=None, keepdims=False):
        return np.mean(x, axis=axis, keepdims=keepdims), None

    def bwd(g, saved, values, out, axis=None, keepdims=False):
        x = values[0]
        count = x.size / max(np.size(out), 1)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)
    return fwd, bwd


@register("reshape")
def _reshape():
    def fwd(x, shape):
        return x.reshape(shape), None

    def bwd(g, saved, values, out, shape):
        return (g.reshape(values[0].shape),)
    return fwd, bwd


@register("transpose")
def _transpose():
    def fwd(x, axes):
        return np.ascontiguousarray(np.transpose(x, axes)), None

    def bwd(g, saved, values, out, axes):
        return (np.transpose(g, np.argsort(axes)),)
    return fwd, bwd


@register("getitem")
def _getitem():
    def fwd(x, index):
        return np.array(x[index], dtype=np.float64), None

    def bwd(g, saved, values, out, index):
        gx = np.zeros_like(values[0])
        gx[index] = g
        return (gx,)
    return fwd, bwd


@register("take")
def _take():
    def fwd(x, indices, axis):
        return np.take(x, indices, axis=axis), None

    def bwd(g, saved, values, out, indices, axis):
        x = values[0]
        gx = np.zeros_like(x)
        gm = np.moveaxis(gx, axis, 0)
        np.add.at(gm, np.asarray(indices), np.moveaxis(g, axis, 0))
        return (gx,)
    return fwd, bwd


@register("concat")
def _concat():
    def fwd(*xs, axis=0):
        return np.concatenate(xs, axis=axis), None

    def bwd(g, saved, values, out, axis=0):
        bounds = np.cumsum([v.shape[axis] for v in values])[:-1]
        return tuple(np.split(g, bounds, axis=axis))
    return fwd, bwd


# ---------------------------------------------------------------------------
# linear algebra and normalisation


def _swap_last(a):
    return np.swapaxes(a, -1, -2)


@register("matmul")
def _matmul():
    def fwd(a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise DimensionError("matmul operands need rank >= 2")
        if a.shape[-1] != b.shape[-2]:
            raise DimensionError(
                f"matmul inner dimension mismatch: axis -1 of left is {a.shape[-1]}, "
                f"axis -2 of right is {b.shape[-2]}")
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise DimensionError(
                f"matmul batch axes {a.shape[:-2]} and {b.shape[:-2]} do not broadcast") from None
        return np.matmul(a, b), None

    def bwd(g, saved, values, out):
        a, b = values
        return (_unbroadcast(np.matmul(g, _swap_last(b)), a.shape),
                _unbroadcast(np.matmul(_swap_last(a), g), b.shape))
    return fwd, bwd


def softmax_value(x, axis=-1):
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


@register("softmax")
def _softmax():
    def fwd(x, axis=-1):
        if not -x.ndim <= axis < x.ndim:
            raise ArgumentError(f"softmax axis {axis} out of range for rank {x.ndim}")
        return softmax_value(x, axis), None

    def bwd(g, saved, values, out, axis=-1):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)
    return fwd, bwd


@register("layer_norm")
def _layer_norm():
    def fwd(x, gamma, beta, eps=1e-5):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
        xhat = xc * inv
        return xhat * gamma + beta, (xhat, inv)

    def bwd(g, saved, values, out, eps=1e-5):
        xhat, inv = saved
        x, gamma, beta = values
        gx_hat = g * gamma
        d = x.shape[-1]
        gx = inv / d * (d * gx_hat - gx_hat.sum(axis=-1, keepdims=True)
                        - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True))
        return (gx, _unbroadcast(g * xhat, gamma.shape), _unbroadcast(g, beta.shape))
    return fwd, bwd


# ---------------------------------------------------------------------------
# spatial


def conv_output_extent(size, k, stride, dilation, pad):
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def _check_conv(x, w, stride, dilation, groups, pad):
    if x.ndim != 4:
        raise DimensionError(f"conv2d input must be rank 4, got shape {x.shape}")
    if w.ndim != 4:
        raise DimensionError(f"conv2d kernel must be rank 4, got shape {w.shape}")
    if groups < 1 or x.shape[1] % groups:
        raise DimensionError(
            f"conv2d axis 1 (input channels) = {x.shape[1]} not divisible by groups={groups}")
    if w.shape[1] * groups != x.shape[1]:
        raise DimensionError(
            f"conv2d axis 1 mismatch: kernel expects {w.shape[1] * groups} input channels, "
            f"input has {x.shape[1]}")
    if w.shape[0] % groups:
        raise DimensionError(
            f"conv2d axis 0 (output channels) = {w.shape[0]} not divisible by groups={groups}")
    for axis, name in ((2, "height"), (3, "width")):
        k = w.shape[axis]
        if x.shape[axis] + 2 * pad < dilation * (k - 1) + 1:
            raise DimensionError(f"conv2d kernel does not fit padded input along axis {axis} ({name})")
    if stride < 1 or dilation < 1 or pad < 0:
        raise ArgumentError("conv2d needs stride >= 1, dilation >= 1, pad >= 0")


@register("conv2d")
def _conv2d():
    def fwd(x, w, stride=1, dilation=1, groups=1, pad=0):
        _check_conv(x, w, stride, dilation, groups, pad)
        n, cin, h, wd = x.shape
        cout, cg, kh, kw = w.shape
        ho = conv_output_extent(h, kh, stride, dilation, pad)
        wo = conv_output_extent(wd, kw, stride, dilation, pad)
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else np.ascontiguousarray(x)
        cols = kernels.im2col(xp, kh, kw, stride, dilation, ho, wo)
        cols_g = cols.reshape(n, groups, cg * kh * kw, ho * wo)
        w_g = w.reshape(groups, cout // groups, cg * kh * kw)
        out = np.matmul(w_g[None], cols_g).reshape(n, cout, ho, wo)
        return out, (cols_g, xp.shape, ho, wo)

    def bwd(g, saved, values, out, stride=1, dilation=1, groups=1, pad=0):
        cols_g, xp_shape, ho, wo = saved
        x, w = values
        n = x.shape[0]
        cout, cg, kh, kw = w.shape
        g_g = g.reshape(n, groups, cout // groups, ho * wo)
        w_g = w.reshape(groups, cout // groups, cg * kh * kw)
        gw = np.matmul(g_g, _swap_last(cols_g)).sum(axis=0).reshape(w.shape)
        gcols = np.matmul(_swap_last(w_g)[None], g_g).reshape(n, cg * groups * kh * kw, ho * wo)
        gxp = kernels.col2im(np.ascontiguousarray(gcols), x.shape[1], xp_shape[2], xp_shape[3],
                             kh, kw, stride, dilation, ho, wo)
        if pad:
            gxp = gxp[:, :, pad:-pad, pad:-pad]
        return gxp, gw
    return fwd, bwd


@register("upsample_nearest")
def _upsample():
    def fwd(x, factor=2):
        return np.repeat(np.repeat(x, factor, axis=-2), factor, axis=-1), None

    def bwd(g, saved, values, out, factor=2):
        n, c, h, w = values[0].shape
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)
    return fwd, bwd


def _blocks(x):
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"2x2 pooling needs even extents, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, h // 2, w // 2, 4)


@register("maxpool2")
def _maxpool():
    def fwd(x):
        b = _blocks(x)
        idx = np.argmax(b, axis=-1)
        return np.take_along_axis(b, idx[..., None], axis=-1)[..., 0], idx

    def bwd(g, saved, values, out):
        n, c, h, w = values[0].shape
        gb = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(gb, saved[..., None], g[..., None], axis=-1)
        gb = gb.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (gb.reshape(n, c, h, w),)
    return fwd, bwd


@register("avgpool2")
def _avgpool():
    def fwd(x):
        return _blocks(x).mean(axis=-1), None

    def bwd(g, saved, values, out):
        return (np.repeat(np.repeat(g / 4.0, 2, axis=-2), 2, axis=-1),)
    return fwd, bwd


@register("bilinear_sample")
def _bilinear():
    def fwd(x, points):
        if x.ndim != 4 or points.ndim != 3 or points.shape[-1] != 2 or points.shape[0] != x.shape[0]:
            raise DimensionError(
                f"bilinear_sample expects x (N,C,H,W) and points (N,P,2); got {x.shape}, {points.shape}")
        return kernels.bilinear_forward(np.ascontiguousarray(x), np.ascontiguousarray(points)), None

    def bwd(g, saved, values, out):
        x, points = values
        return kernels.bilinear_backward(np.ascontiguousarray(x), np.ascontiguousarray(points),
                                         np.ascontiguousarray(g))
    return fwd, bwd


_HAAR = 0.5


def _dwt_value(x):
    if x.ndim != 4:
        raise DimensionError(f"dwt_haar expects rank-4 input, got shape {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        from .errors import ShapeError
        raise ShapeError(f"dwt_haar needs even height and width, got {x.shape[2]}x{x.shape[3]}")
    a = x[:, :, 0::2, 0::2]
    b = x[:, :, 0::2, 1::2]
    c = x[:, :, 1::2, 0::2]
    d = x[:, :, 1::2, 1::2]
    return np.stack([(a + b + c + d) * _HAAR, (a + b - c - d) * _HAAR,
                     (a - b + c - d) * _HAAR, (a - b - c + d) * _HAAR])


def _idwt_value(bands):
    ll, lh, hl, hh = bands
    n, c, h, w = ll.shape
    x = np.empty((n, c, 2 * h, 2 * w))
    x[:, :, 0::2, 0::2] = (ll + lh + hl + hh) * _HAAR
    x[:, :, 0::2, 1::2] = (ll + lh - hl - hh) * _HAAR
    x[:, :, 1::2, 0::2] = (ll - lh + hl - hh) * _HAAR
    x[:, :, 1::2, 1::2] = (ll - lh - hl + hh) * _HAAR
    return x


@register("dwt_haar")
def _dwt():
    # stacked output (4, N, C, H/2, W/2); orthonormal, so the VJP is the inverse
    def fwd(x):
        return _dwt_value(x), None

    def bwd(g, saved, values, out):
        return (_idwt_value(g),)
    return fwd, bwd


@register("idwt_haar")
def _idwt():
    def fwd(bands):
        return _idwt_value(bands), None

    def bwd(g, saved, values, out):
        return (_dwt_value(g),)
    return fwd, bwd


# ---------------------------------------------------------------------------
# public wrappers


def add(a, b):
    return apply("add", a, b)


def sub(a, b):
    return apply("sub", a, b)


def mul(a, b):
    return apply("mul", a, b)


def div(a, b):
    return apply("div", a, b)


def scale(x, factor):
    return apply("scale", x, factor=float(factor))


def absolute(x):
    return apply("abs", x)


def relu(x):
    return apply("relu", x)


def maximum(a, b):
    return apply("maximum", a, b)


def minimum(a, b):
    return apply("minimum", a, b)


def clip(x, lo, hi):
    return apply("clip", x, lo=float(lo), hi=float(hi))


def exp(x):
    return apply("exp", x)


def log(x):
    return apply("log", x)


def sqrt(x):
    return apply("sqrt", x)


def sigmoid(x):
    return apply("sigmoid", x)


def log_sigmoid(x):
    return apply("log_sigmoid", x)


def sum_(x, axis=None, keepdims=False):
    return apply("sum", x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False):
    return apply("mean", x, axis=axis, keepdims=keepdims)


def reshape(x, shape):
    return apply("reshape", x, shape=tuple(shape))


def transpose(x, axes):
    return apply("transpose", x, axes=tuple(axes))


def getitem(x, index):
    return apply("getitem", x, index=index)


def take(x, indices, axis):
    return apply("take", x, indices=np.asarray(indices, dtype=np.intp), axis=axis)


def concat(xs, axis=0):
    return apply("concat", *xs, axis=axis)


def matmul(a, b):
    return apply("matmul", a, b)


def softmax(x, axis=-1):
    return apply("softmax", x, axis=axis)


def layer_norm(x, gamma, beta, eps=1e-5):
    return apply("layer_norm", x, gamma, beta, eps=eps)


def conv2d(x, w, stride=1, dilation=1, groups=1, pad=0):
    return apply("conv2d", x, w, stride=stride, dilation=dilation, groups=groups, pad=pad)


def upsample_nearest(x, factor=2):
    return apply("upsample_nearest", x, factor=factor)


def maxpool2(x):
    return apply("maxpool2", x)


def avgpool2(x):
    return apply("avgpool2", x)


def bilinear_sample(x, points):
    return apply("bilinear_sample", x, points)


def dwt_haar_stacked(x):
    return apply("dwt_haar", x)


def idwt_haar_stacked(bands):
    return apply("idwt_haar", bands)


# composite helpers built from registry ops


def bias_add(x, b):
    """Add a per-channel bias to an (N, C, H, W) map."""
    return add(x, reshape(b, (1, -1, 1, 1)))


def linear(x, w, b=None):
    """Apply ``x @ w (+ b)`` over the last axis; ``w`` is (in, out)."""
    y = matmul(x, w)
    return y if b is None else add(y, b)


def pad_replicate(x, pad):
    """Edge-replicating spatial padding of an (N, C, H, W) map."""
    h, w = x.shape[2], x.shape[3]
    rows = np.clip(np.arange(-pad, h + pad), 0, h - 1)
    cols = np.clip(np.arange(-pad, w + pad), 0, w - 1)
    return take(take(x, cols, axis=3), rows, axis=2)
