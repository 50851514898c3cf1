"""Central finite-difference checks for registry VJPs and composed modules."""
import numpy as np

from . import tensor as T

STEP = 1e-5


def numeric_vjp(fn, inputs, cotangent, wrt=None, h=STEP):
    """Central differences of ``<cotangent, fn(*inputs)>`` for each input in ``wrt``."""
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    wrt = range(len(inputs)) if wrt is None else wrt
    cot = np.asarray(cotangent, dtype=np.float64)

    def f():
        return float(np.vdot(cot, T.value_of(fn(*inputs))))

    grads = []
    for i in wrt:
        x = inputs[i]
        g = np.zeros_like(x)
        flat, gflat = x.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = f()
            flat[j] = orig - h
            down = f()
            flat[j] = orig
            gflat[j] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def tape_vjp(fn, inputs, cotangent, wrt=None):
    wrt = range(len(inputs)) if wrt is None else list(wrt)
    with T.Tape() as tape:
        args = [tape.watch(x) if i in wrt else np.asarray(x, dtype=np.float64)
                for i, x in enumerate(inputs)]
        out = T.as_var(fn(*args))
        if not out.requires_grad:
            return [np.zeros_like(np.asarray(inputs[i], dtype=np.float64)) for i in wrt]
        return tape.gradients(out, [args[i] for i in wrt], cotangent)


def relative_error(analytic, numeric, floor=1e-8):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a, n = np.asarray(a), np.asarray(n)
        denom = max(np.linalg.norm(a), np.linalg.norm(n), floor)
        worst = max(worst, float(np.linalg.norm(a - n) / denom))
    return worst


def check_op(op, inputs, attrs, wrt, cotangent):
    analytic = T.vjp(op, inputs, cotangent, **attrs)
    analytic = [analytic[i] for i in wrt]
    numeric = numeric_vjp(lambda *xs: T.apply(op, *xs, **attrs), inputs, cotangent, wrt)
    return relative_error(analytic, numeric)


def check_function(fn, inputs, wrt=None, rng=None, cotangent=None):
    """Tape gradient of ``fn`` against central differences; returns relative error."""
    rng = rng or np.random.default_rng(0)
    if cotangent is None:
        out = T.value_of(fn(*inputs))
        cotangent = rng.standard_normal(np.shape(out))
    wrt = list(range(len(inputs))) if wrt is None else list(wrt)
    analytic = tape_vjp(fn, inputs, cotangent, wrt)
    numeric = numeric_vjp(fn, inputs, cotangent, wrt)
    return relative_error(analytic, numeric)


# ---------------------------------------------------------------------------
# random instances for every registered op (all extents <= 6)


def _away(rng, shape, lo=-2.0, hi=2.0, avoid=(0.0,), margin=1e-3):
    x = rng.uniform(lo, hi, size=shape)
    for a in avoid:
        close = np.abs(x - a) < margin
        x[close] = a + np.where(x[close] >= a, margin, -margin) * 2
    return x


def _shape(rng, rank, lo=1, hi=4):
    return tuple(int(v) for v in rng.integers(lo, hi + 1, size=rank))


def _case_binary(rng):
    shape = _shape(rng, 3)
    b_shape = tuple(1 if rng.random() < 0.3 else s for s in shape)
    return [rng.standard_normal(shape), rng.standard_normal(b_shape)], {}, [0, 1]


def _case_div(rng):
    shape = _shape(rng, 2)
    b = rng.uniform(0.5, 2.0, size=shape) * rng.choice([-1, 1], size=shape)
    return [rng.standard_normal(shape), b], {}, [0, 1]


def _case_unary(lo=-2.0, hi=2.0, avoid=()):
    def make(rng):
        return [_away(rng, _shape(rng, 3), lo, hi, avoid)], {}, [0]
    return make


def _case_minmax(rng):
    shape = _shape(rng, 2)
    a = rng.standard_normal(shape)
    b = a + _away(rng, shape, -1.0, 1.0, (0.0,), 1e-2)
    return [a, b], {}, [0, 1]


def _case_conv(rng):
    groups = int(rng.choice([1, 2]))
    cin = groups * int(rng.integers(1, 3))
    cout = groups * int(rng.integers(1, 3))
    k = int(rng.choice([1, 2, 3]))
    dilation = int(rng.choice([1, 2])) if k > 1 else 1
    stride = int(rng.choice([1, 2]))
    pad = int(rng.integers(0, 2))
    span = dilation * (k - 1) + 1
    h = int(rng.integers(max(span - 2 * pad, 2), 7))
    w = int(rng.integers(max(span - 2 * pad, 2), 7))
    x = rng.standard_normal((int(rng.integers(1, 3)), cin, h, w))
    wt = rng.standard_normal((cout, cin // groups, k, k))
    return [x, wt], dict(stride=stride, dilation=dilation, groups=groups, pad=pad), [0, 1]


def _case_maxpool(rng):
    n, c = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    h, w = 2 * int(rng.integers(1, 4)), 2 * int(rng.integers(1, 4))
    # distinct values spaced >= 0.01 apart, shuffled
    vals = rng.permutation(n * c * h * w) * 0.01 + rng.uniform(0, 1e-3)
    return [vals.reshape(n, c, h, w)], {}, [0]


def _case_bilinear(rng):
    n, c = int(rng.integers(1, 3)), int(rng.integers(1, 4))
    h, w = int(rng.integers(2, 7)), int(rng.integers(2, 7))
    p = int(rng.integers(1, 6))
    # keep fractional pixel positions away from integer kinks and the border
    fx = rng.integers(0, w - 1, size=(n, p)) + rng.uniform(0.05, 0.95, size=(n, p))
    fy = rng.integers(0, h - 1, size=(n, p)) + rng.uniform(0.05, 0.95, size=(n, p))
    pts = np.stack([(fx + 0.5) / w, (fy + 0.5) / h], axis=-1)
    return [rng.standard_normal((n, c, h, w)), pts], {}, [0, 1]


def _case_softmax(rng):
    x = rng.standard_normal(_shape(rng, 3)) * rng.choice([1.0, 5.0])
    return [x], dict(axis=int(rng.integers(-3, 3))), [0]


def _case_layer_norm(rng):
    shape = _shape(rng, 2, 1, 4) + (int(rng.integers(2, 7)),)
    return [rng.standard_normal(shape), rng.standard_normal(shape[-1:]),
            rng.standard_normal(shape[-1:])], {}, [0, 1, 2]


def _case_matmul(rng):
    m, k, p = _shape(rng, 3)
    batch_a = _shape(rng, int(rng.integers(0, 2)))
    batch_b = tuple(1 if rng.random() < 0.5 else s for s in batch_a)
    return [rng.standard_normal(batch_a + (m, k)), rng.standard_normal(batch_b + (k, p))], {}, [0, 1]


def _case_reduce(rng):
    x = rng.standard_normal(_shape(rng, 3))
    axis = [None, 0, 1, 2, (0, 2)][int(rng.integers(0, 5))]
    return [x], dict(axis=axis, keepdims=bool(rng.integers(0, 2))), [0]


def _case_reshape(rng):
    x = rng.standard_normal(_shape(rng, 3))
    return [x], dict(shape=(x.shape[0], -1)), [0]


def _case_transpose(rng):
    x = rng.standard_normal(_shape(rng, 3))
    return [x], dict(axes=tuple(int(a) for a in rng.permutation(3))), [0]


def _case_getitem(rng):
    x = rng.standard_normal(_shape(rng, 3, 2, 5))
    return [x], dict(index=np.s_[:, 1:, ::2]), [0]


def _case_take(rng):
    x = rng.standard_normal(_shape(rng, 3, 2, 5))
    axis = int(rng.integers(0, 3))
    idx = rng.integers(0, x.shape[axis], size=int(rng.integers(1, 6)))
    return [x], dict(indices=idx, axis=axis), [0]


def _case_concat(rng):
    a = rng.standard_normal(_shape(rng, 3))
    b_shape = list(a.shape)
    b_shape[1] = int(rng.integers(1, 4))
    return [a, rng.standard_normal(b_shape)], dict(axis=1), [0, 1]


def _case_scale(rng):
    return [rng.standard_normal(_shape(rng, 3))], dict(factor=float(rng.normal())), [0]


def _case_clip(rng):
    x = _away(rng, _shape(rng, 3), -2, 2, (-0.5, 0.7))
    return [x], dict(lo=-0.5, hi=0.7), [0]


def _case_even4(rng):
    shape = (int(rng.integers(1, 3)), int(rng.integers(1, 3)),
             2 * int(rng.integers(1, 4)), 2 * int(rng.integers(1, 4)))
    return [rng.standard_normal(shape)], {}, [0]


def _case_upsample(rng):
    return [rng.standard_normal(_shape(rng, 4, 1, 3))], dict(factor=2), [0]


def _case_idwt(rng):
    shape = (4, int(rng.integers(1, 3)), int(rng.integers(1, 3)),
             int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    return [rng.standard_normal(shape)], {}, [0]


OP_CASES = {
    "add": _case_binary,
    "sub": _case_binary,
    "mul": _case_binary,
    "div": _case_div,
    "scale": _case_scale,
    "abs": _case_unary(avoid=(0.0,)),
    "relu": _case_unary(avoid=(0.0,)),
    "maximum": _case_minmax,
    "minimum": _case_minmax,
    "clip": _case_clip,
    "exp": _case_unary(),
    "log": _case_unary(0.2, 3.0),
    "sqrt": _case_unary(0.2, 3.0),
    "sigmoid": _case_unary(-4, 4),
    "log_sigmoid": _case_unary(-6, 6),
    "sum": _case_reduce,
    "mean": _case_reduce,
    "reshape": _case_reshape,
    "transpose": _case_transpose,
    "getitem": _case_getitem,
    "take": _case_take,
    "concat": _case_concat,
    "matmul": _case_matmul,
    "softmax": _case_softmax,
    "layer_norm": _case_layer_norm,
    "conv2d": _case_conv,
    "upsample_nearest": _case_upsample,
    "maxpool2": _case_maxpool,
    "avgpool2": _case_even4,
    "bilinear_sample": _case_bilinear,
    "dwt_haar": _case_even4,
    "idwt_haar": _case_idwt,
}


def random_op_instance(op, rng):
    inputs, attrs, wrt = OP_CASES[op](rng)
    out, _ = T.REGISTRY[op][0](*inputs, **attrs)
    return inputs, attrs, wrt, rng.standard_normal(np.shape(out))


def check_registered(op, instances, seed=0):
    """Worst relative error of ``op``'s VJP over ``instances`` random cases."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        inputs, attrs, wrt, cot = random_op_instance(op, rng)
        worst = max(worst, check_op(op, inputs, attrs, wrt, cot))
    return worst


# ---------------------------------------------------------------------------
# composed modules on tiny random instances

KINK = 1e-3


def grad_consistency_instance(rng, shape=None):
    """(fh, fh_ir, fh_rgb) with every |.| argument at least KINK from zero."""
    from . import hfsr
    shape = shape or (1, 2, 5, 5)
    while True:
        fh, a, b = (rng.standard_normal(shape) for _ in range(3))
        args = []
        for k in (1, 2, 3):
            for src in (a, b):
                gx, gy = (T.value_of(g) for g in hfsr.sobel(src, hfsr.DILATIONS[k]))
                args += [gx, gy, fh - (np.abs(gx) + np.abs(gy))]
        if min(np.abs(v).min() for v in args) >= KINK:
            return fh, a, b


def _giou_clear(p, g):
    """True when no min/max/relu inside the GIoU of p, g sits near its kink."""
    pc = np.stack([p[:, 0] - p[:, 2] / 2, p[:, 1] - p[:, 3] / 2, p[:, 0] + p[:, 2] / 2, p[:, 1] + p[:, 3] / 2], 1)
    gc = np.stack([g[:, 0] - g[:, 2] / 2, g[:, 1] - g[:, 3] / 2, g[:, 0] + g[:, 2] / 2, g[:, 1] + g[:, 3] / 2], 1)
    iw = np.minimum(pc[:, 2], gc[:, 2]) - np.maximum(pc[:, 0], gc[:, 0])
    ih = np.minimum(pc[:, 3], gc[:, 3]) - np.maximum(pc[:, 1], gc[:, 1])
    gaps = np.concatenate([np.abs(pc - gc).ravel(), np.abs(iw), np.abs(ih)])
    return gaps.min() >= KINK


def detection_loss_instance(rng, cfg, queries=5, classes=3):
    """(logits, boxes, gt_classes, gt_boxes, match) away from every L1/GIoU kink."""
    from . import head
    while True:
        g = int(rng.integers(1, 4))
        logits = rng.standard_normal((queries, classes)) * 2
        centers = rng.uniform(0.2, 0.8, size=(queries, 2))
        boxes = np.concatenate([centers, rng.uniform(0.05, 0.4, size=(queries, 2))], axis=1)
        gt_boxes = np.concatenate([rng.uniform(0.2, 0.8, size=(g, 2)), rng.uniform(0.05, 0.4, size=(g, 2))], 1)
        gt_classes = rng.integers(0, classes, size=g)
        cost = head.matching_cost(1 / (1 + np.exp(-logits)), boxes, gt_classes, gt_boxes, cfg)
        match = head.hungarian_match(cost)
        matched = boxes[match]
        if np.abs(matched - gt_boxes).min() >= KINK and _giou_clear(matched, gt_boxes):
            return logits, boxes, gt_classes, gt_boxes, match


def check_grad_consistency(instances, seed=0):
    from . import hfsr
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        inputs = grad_consistency_instance(rng)
        worst = max(worst, check_function(hfsr.grad_consistency_loss, list(inputs), rng=rng))
    return worst


def check_detection_loss(instances, cfg, seed=0):
    """Both loss terms, with the assignment held at its value at the base point."""
    from . import head
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        logits, boxes, gcls, gbox, match = detection_loss_instance(rng, cfg)
        for term in (0, 1):
            def fn(lg, bx, term=term):
                return head.detection_loss(lg, bx, gcls, gbox, cfg, match=match)[term]
            worst = max(worst, check_function(fn, [logits, boxes], rng=rng, cotangent=1.0))
    return worst


def _store(seed):
    from .params import ParamStore
    return ParamStore(seed)


def _module_wavelet(rng, cfg):
    from . import wavelet
    store = _store(cfg.seed)
    wavelet.init_params(store, "w", 3)
    params = dict(store.tensors)

    def fn(x, w):
        bands = wavelet.decompose(x, {**params, "w.w": w}, "w")
        return T.concat([bands.ll, bands.high_reduced], axis=1)
    return fn, [rng.standard_normal((1, 3, 6, 6)), params["w.w"]]


def _module_lfha(rng, cfg):
    from . import lfha
    store = _store(cfg.seed)
    lfha.init_params(store, "a", 4, eca_kernel=3)
    params = dict(store.tensors)

    def fn(a, b, f, eca_w):
        return lfha.lfha(a, b, {**params, "a.f": f, "a.eca_ir": eca_w}, "a")
    return fn, [rng.standard_normal((1, 4, 3, 3)), rng.standard_normal((1, 4, 3, 3)),
                params["a.f"], params["a.eca_ir"]]


def _module_hfsr(rng, cfg):
    from . import hfsr
    store = _store(cfg.seed)
    hfsr.init_params(store, "h", 2)
    params = dict(store.tensors)

    def fn(a, b, pw):
        return hfsr.hfsr(a, b, {**params, "h.pw.w": pw}, "h")
    return fn, [rng.standard_normal((1, 2, 5, 5)), rng.standard_normal((1, 2, 5, 5)), params["h.pw.w"]]


def _module_hfe(rng, cfg):
    from . import hfe
    channels, embed, heads = (2, 4, 6), 4, 2
    store = _store(cfg.seed)
    hfe.init_params(store, "e", channels, embed, 1)
    params = dict(store.tensors)
    extents = (8, 4, 2)
    freq = [rng.standard_normal((1, c, s, s)) for c, s in zip(channels, extents)]
    spatial = [rng.standard_normal((1, c, s, s)) for c, s in zip(channels, extents)]

    def fn(f3, f4, f5, s3, s4, s5):
        return T.concat([T.reshape(t, (1, -1)) for t in
                         hfe.run_hfe([f3, f4, f5], [s3, s4, s5], params, "e", heads, 1)], axis=1)
    return fn, freq + spatial


def _module_fqs(rng, cfg):
    from . import fqs
    from .config import PipelineConfig
    small = PipelineConfig(embed_dim=4, d_model=4, heads=2, decoder_layers=1, sampling_points=2, queries=3)
    store = _store(cfg.seed)
    fqs.init_params(store, small, "q")
    params = dict(store.tensors)
    params["q.dec0.ca.offset.w"] = params["q.dec0.ca.offset.w"] * 50  # spread the samples
    extents = ((4, 5), (3, 3), (2, 2))
    low = [rng.standard_normal((1, 4) + e) for e in extents]
    high = [rng.standard_normal((1, 4) + e) for e in extents]

    def fn(content, anchor_logits, l3, l4, l5, h3, h4, h5):
        state = fqs.QueryState(content, anchor_logits)
        out = fqs.decoder_layer(state, [l3, l4, l5], [h3, h4, h5], params, "q.dec0", 2, 2)
        return T.concat([out.content, out.anchor_logits], axis=-1)
    return fn, [rng.standard_normal((1, 3, 4)), rng.uniform(-1.5, 1.5, (1, 3, 4))] + low + high


def _module_backbone(rng, cfg):
    from . import backbone
    from .config import BackboneConfig, PipelineConfig
    small = PipelineConfig(backbone=BackboneConfig(in_channels=3, stem_channels=2, level_channels=(2, 4, 6)))
    store = _store(cfg.seed)
    backbone.init_params(store, small)
    params = dict(store.tensors)

    img = rng.uniform(0, 1, (1, 3, 64, 64))
    names = ("backbone.stem.w", "backbone.l5.down.w")

    def fn(*weights):
        local = {**params, **dict(zip(names, weights))}
        return T.concat([T.reshape(t, (1, -1)) for t in backbone.extract(img, local, small)], axis=1)
    return fn, [params[n] for n in names]


MODULE_CASES = {
    "backbone": _module_backbone,
    "wavelet": _module_wavelet,
    "lfha": _module_lfha,
    "hfsr": _module_hfsr,
    "hfe": _module_hfe,
    "fqs": _module_fqs,
}
MODULES = ("tensor",) + tuple(MODULE_CASES) + ("grad_consistency", "detection_loss")


def check_module(name, cfg, instances=3):
    """Worst relative error for one named module (``tensor`` covers every registered op)."""
    if name == "tensor":
        return max(check_registered(op, instances, cfg.seed) for op in sorted(T.REGISTRY))
    if name == "grad_consistency":
        return check_grad_consistency(instances, cfg.seed)
    if name == "detection_loss":
        return check_detection_loss(instances, cfg, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for _ in range(instances):
        fn, inputs = MODULE_CASES[name](rng, cfg)
        worst = max(worst, check_function(fn, inputs, rng=rng))
    return worst
