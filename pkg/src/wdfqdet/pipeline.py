"""End-to-end composition, toy training loop and heatmap export."""
import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import backbone, fqs, head, hfe, hfsr, lfha, wavelet
from . import tensor as T
from .errors import DivergenceError, NumericError, PairingError
from .imageio import encode_pgm, load_pair, write_bytes
from .params import ParamStore

log = logging.getLogger(__name__)

LEVELS = backbone.LEVELS


def build_params(cfg):
    cfg.validate()
    store = ParamStore(cfg.seed)
    backbone.init_params(store, cfg)
    channels = cfg.backbone.level_channels
    for level, c in zip(LEVELS, channels):
        for mod in ("ir", "rgb"):
            wavelet.init_params(store, f"wavelet.l{level}.{mod}", c)
        lfha.init_params(store, f"lfha.l{level}", c, eca_kernel=cfg.eca_kernel)
        hfsr.init_params(store, f"hfsr.l{level}", c)
    for stream in ("low", "high"):
        hfe.init_params(store, f"hfe.{stream}", channels, cfg.embed_dim, cfg.repblocks)
    fqs.init_params(store, cfg)
    head.init_params(store, cfg)
    return store


@dataclass
class ForwardResult:
    logits: object        # (N, K, C)
    confidences: object   # (N, K, C)
    boxes: object         # (N, K, 4)
    l_grad: object        # scalar, summed over levels
    query_indices: np.ndarray
    intermediates: dict = field(default_factory=dict)


def frequency_split(x, params, level, modality, cfg):
    """(low, high) half-resolution maps for one level of one modality."""
    if not cfg.wavelet:
        pooled = T.avgpool2(x)
        return pooled, pooled
    bands = wavelet.decompose(x, params, f"wavelet.l{level}.{modality}")
    return bands.ll, bands.high_reduced


def _pair(pool, fn, a, b):
    """fn(a), fn(b); concurrently when a pool is given and nothing is being taped."""
    if pool is None or T.active_tape() is not None:
        return fn(a), fn(b)
    fa, fb = pool.submit(fn, a), pool.submit(fn, b)
    return fa.result(), fb.result()


def forward(rgb, ir, params, cfg, gate_override=None, keep=False, pool=None):
    """Full pass: backbone -> split -> LFHA/HFSR -> lift -> HFE x2 -> FQS -> head.

    ``pool`` (an executor) lets the two modality backbones and the two HFE
    streams run concurrently; the arithmetic is unchanged.
    """
    sp_ir, sp_rgb = _pair(pool, lambda img: backbone.extract(img, params, cfg), ir, rgb)
    inter = {}
    low_freq, high_freq, l_grad = [], [], None
    for level, x_ir, x_rgb in zip(LEVELS, sp_ir, sp_rgb):
        fl_ir, fh_ir = frequency_split(x_ir, params, level, "ir", cfg)
        fl_rgb, fh_rgb = frequency_split(x_rgb, params, level, "rgb", cfg)
        fl = lfha.lfha(fl_ir, fl_rgb, params, f"lfha.l{level}")
        fh = hfsr.hfsr(fh_ir, fh_rgb, params, f"hfsr.l{level}")
        term = hfsr.grad_consistency_loss(fh, fh_ir, fh_rgb)
        l_grad = term if l_grad is None else T.add(l_grad, term)
        low_freq.append(wavelet.lift_to_level(fl))
        high_freq.append(wavelet.lift_to_level(fh))
        if keep:
            inter.update({f"low_ir_l{level}": fl_ir, f"low_rgb_l{level}": fl_rgb,
                          f"high_ir_l{level}": fh_ir, f"high_rgb_l{level}": fh_rgb,
                          f"low_aligned_l{level}": fl, f"high_fused_l{level}": fh})
    low, high = _pair(pool, lambda job: hfe.run_hfe(job[0], job[1], params, job[2], cfg.heads, cfg.repblocks),
                      (low_freq, sp_ir, "hfe.low"), (high_freq, sp_rgb, "hfe.high"))
    if keep:
        for name, stream in (("low", low), ("high", high)):
            for tag, x in zip(("p3", "n4", "n5"), stream):
                inter[f"hfe_{name}_{tag}"] = x
    state = fqs.run_fqs(low, high, params, cfg, gate_override=gate_override)
    logits, conf, boxes = head.predict(state, params)
    return ForwardResult(logits, conf, boxes, l_grad, state.indices, inter)


def detections(result):
    """Per-image detection lists from a forward result."""
    conf = T.value_of(result.confidences)
    boxes = T.value_of(result.boxes)
    return [head.to_detections(conf[n], boxes[n]) for n in range(conf.shape[0])]


def detections_json(dets):
    return json.dumps({"detections": [d.as_dict() for d in dets]}, indent=2) + "\n"


def heatmap_bytes(feature):
    """Channel-mean of the first image, min-max scaled to 0..255, as PGM bytes."""
    x = np.asarray(T.value_of(feature))[0].mean(axis=0)
    lo, hi = x.min(), x.max()
    if not hi > lo:
        gray = np.zeros(x.shape, dtype=np.uint8)
    else:
        gray = np.rint((x - lo) / (hi - lo) * 255.0).astype(np.uint8)
    return encode_pgm(gray)


def export_heatmap(feature, path):
    write_bytes(path, heatmap_bytes(feature))


# ---------------------------------------------------------------------------
# data and training


@dataclass
class PairedSample:
    rgb: np.ndarray       # (1, 3, H, W)
    ir: np.ndarray
    classes: np.ndarray   # (G,)
    boxes: np.ndarray     # (G, 4) cxcywh normalised
    rgb_path: str = ""
    ir_path: str = ""


def load_dataset(path):
    """Read the JSON annotation list; image paths resolve against its folder."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path) as fh:
        try:
            entries = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PairingError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(entries, list) or not entries:
        raise PairingError("dataset must be a non-empty JSON array")
    samples = []
    for k, entry in enumerate(entries):
        try:
            rgb_path = os.path.join(base, entry["rgb"])
            ir_path = os.path.join(base, entry["ir"])
            boxes = entry.get("boxes", [])
            classes = np.array([b["cls"] for b in boxes], dtype=np.intp)
            coords = np.array([[b["cx"], b["cy"], b["w"], b["h"]] for b in boxes], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise PairingError(f"dataset entry {k} is malformed: {exc!r}") from None
        rgb, ir = load_pair(rgb_path, ir_path)
        samples.append(PairedSample(rgb, ir, classes, coords.reshape(-1, 4), rgb_path, ir_path))
    return samples


def sample_losses(params, sample, cfg, with_grads=True):
    """Loss terms for one sample and, optionally, gradients for every parameter."""
    names = list(params)
    with T.Tape() as tape:
        watched = {k: tape.watch(params[k]) for k in names} if with_grads else params
        res = forward(sample.rgb, sample.ir, watched, cfg)
        l_box, l_cls = head.detection_loss(T.getitem(res.logits, 0), T.getitem(res.boxes, 0),
                                           sample.classes, sample.boxes, cfg)
        l_total = head.total_loss(l_box, l_cls, res.l_grad)
        grads = tape.gradients(l_total, [watched[k] for k in names]) if with_grads else None
    terms = tuple(float(T.value_of(v)) for v in (l_box, l_cls, res.l_grad, l_total))
    return terms, (dict(zip(names, grads)) if with_grads else None)


def clip_by_global_norm(grads, limit):
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    if norm > limit:
        factor = limit / norm
        grads = {k: g * factor for k, g in grads.items()}
    return grads, norm


def train_toy(samples, cfg, params=None, threads=1, steps=None):
    """Full-batch gradient descent on box + cls + grad losses.

    Returns (params, trace) where trace rows are (step, L_box, L_cls, L_grad,
    L_total) measured before the update of that step; the last row is the
    state after all ``steps`` updates.
    """
    steps = cfg.steps if steps is None else steps
    params = build_params(cfg) if params is None else params.copy()
    trace = []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for step in range(steps + 1):
            want_grads = step < steps
            run = lambda s: sample_losses(params, s, cfg, with_grads=want_grads)  # noqa: E731
            try:
                results = list(pool.map(run, samples)) if pool else [run(s) for s in samples]
            except NumericError as exc:
                raise DivergenceError(step, f"non-finite values at step {step}: {exc}") from exc
            terms = np.array([r[0] for r in results])
            mean_terms = terms.sum(axis=0) / len(samples)
            if not np.all(np.isfinite(mean_terms)):
                raise DivergenceError(step)
            trace.append((step, *mean_terms.tolist()))
            if not want_grads:
                break
            grads = {}
            for _, g in results:
                for k, v in g.items():
                    grads[k] = grads[k] + v if k in grads else v.copy()
            grads = {k: v / len(samples) for k, v in grads.items()}
            grads, norm = clip_by_global_norm(grads, cfg.clip_norm)
            for k, g in grads.items():
                params[k] = params[k] - cfg.step_size * g
            if step % 25 == 0:
                log.info("step %d  L_total %.6f  |g| %.3f", step, mean_terms[3], norm)
    finally:
        if pool:
            pool.shutdown()
    return params, trace


TRACE_HEADER = ("step", "L_box", "L_cls", "L_grad", "L_total")


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for step, *vals in trace:
            writer.writerow([step] + [repr(float(v)) for v in vals])
