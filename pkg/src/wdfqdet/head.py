"""Classification/box head, bipartite matching and detection losses."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from . import tensor as T
from .errors import InfeasibleError, NumericError

AREA_FLOOR = 1e-12


@dataclass(frozen=True)
class Detection:
    cls: int
    score: float
    box: tuple  # (cx, cy, w, h), normalised

    def as_dict(self):
        cx, cy, w, h = self.box
        return {"cls": self.cls, "score": self.score, "cx": cx, "cy": cy, "w": w, "h": h}


def init_params(store, cfg, prefix="head"):
    store.add(f"{prefix}.cls.w", (cfg.d_model, cfg.num_classes))
    store.add(f"{prefix}.cls.b", (cfg.num_classes,), "zeros")


def class_logits(content, params, prefix="head"):
    return T.linear(content, params[f"{prefix}.cls.w"], params[f"{prefix}.cls.b"])


def predict(state, params, prefix="head"):
    """Return (logits, confidences, boxes) arrays/Vars for a QueryState batch."""
    logits = class_logits(state.content, params, prefix)
    return logits, T.sigmoid(logits), T.sigmoid(state.anchor_logits)


def to_detections(confidences, boxes):
    """Best class per query, sorted by descending score then query index."""
    conf = T.value_of(confidences)
    boxes = T.value_of(boxes)
    cls = np.argmax(conf, axis=-1)
    score = np.take_along_axis(conf, cls[:, None], axis=-1)[:, 0]
    order = np.argsort(-score, kind="stable")
    return [Detection(int(cls[q]), float(score[q]), tuple(float(v) for v in boxes[q])) for q in order]


# ---------------------------------------------------------------------------
# boxes


def _corners(box):
    cx, cy, w, h = (T.getitem(box, np.s_[..., k]) for k in range(4))
    hw, hh = T.scale(w, 0.5), T.scale(h, 0.5)
    return T.sub(cx, hw), T.sub(cy, hh), T.add(cx, hw), T.add(cy, hh)


def xyxy_to_cxcywh(box):
    box = np.asarray(box, dtype=np.float64)
    x1, y1, x2, y2 = np.moveaxis(box, -1, 0)
    return np.stack([(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1], axis=-1)


def giou(a, b):
    """Generalised IoU of broadcastable (..., 4) cxcywh boxes."""
    ax1, ay1, ax2, ay2 = _corners(T.as_var(a))
    bx1, by1, bx2, by2 = _corners(T.as_var(b))
    iw = T.relu(T.sub(T.minimum(ax2, bx2), T.maximum(ax1, bx1)))
    ih = T.relu(T.sub(T.minimum(ay2, by2), T.maximum(ay1, by1)))
    inter = T.mul(iw, ih)
    area_a = T.mul(T.sub(ax2, ax1), T.sub(ay2, ay1))
    area_b = T.mul(T.sub(bx2, bx1), T.sub(by2, by1))
    union = T.maximum(T.sub(T.add(area_a, area_b), inter), AREA_FLOOR)
    ew = T.sub(T.maximum(ax2, bx2), T.minimum(ax1, bx1))
    eh = T.sub(T.maximum(ay2, by2), T.minimum(ay1, by1))
    enclose = T.maximum(T.mul(ew, eh), AREA_FLOOR)
    return T.sub(T.div(inter, union), T.div(T.sub(enclose, union), enclose))


# ---------------------------------------------------------------------------
# matching


def _assignment_cost(cost, rows, cols):
    return float(sum(cost[r, c] for r, c in zip(rows, cols)))


def hungarian_match(cost):
    """Minimum-cost injective map from ground truths (columns) to queries (rows).

    ``cost`` is (Q, G).  Returns an int array of length G giving each ground
    truth's query.  Among optimal assignments the lexicographically smallest
    vector is returned (ties judged to 1e-9 relative).
    """
    cost = np.asarray(cost, dtype=np.float64)
    nq, ng = cost.shape
    if ng > nq:
        raise InfeasibleError(f"cannot match {ng} ground truths to {nq} queries")
    if ng == 0:
        return np.zeros(0, dtype=np.intp)
    if not np.all(np.isfinite(cost)):
        raise NumericError("matching cost contains non-finite entries")
    gt_by_query = np.ascontiguousarray(cost.T)
    best = kernels.linear_assignment(gt_by_query)
    optimum = _assignment_cost(gt_by_query, range(ng), best)
    tol = 1e-9 * max(1.0, abs(optimum))

    chosen = []
    for g in range(ng):
        fixed = sum(gt_by_query[r, c] for r, c in enumerate(chosen))
        rest_rows = list(range(g + 1, ng))
        for q in range(nq):
            if q in chosen:
                continue
            free = [c for c in range(nq) if c not in chosen and c != q]
            if rest_rows:
                sub = np.ascontiguousarray(gt_by_query[np.ix_(rest_rows, free)])
                sub_cols = kernels.linear_assignment(sub)
                rest = _assignment_cost(sub, range(len(rest_rows)), sub_cols)
            else:
                rest = 0.0
            if fixed + gt_by_query[g, q] + rest <= optimum + tol:
                chosen.append(q)
                break
    return np.asarray(chosen, dtype=np.intp)


def matching_cost(confidences, boxes, gt_classes, gt_boxes, cfg):
    """(Q, G) matching cost from detached predictions of one image."""
    conf = T.value_of(confidences)
    boxes = T.value_of(boxes)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    gt_classes = np.asarray(gt_classes, dtype=np.intp)
    cls_cost = 1.0 - conf[:, gt_classes]
    l1 = np.abs(boxes[:, None, :] - gt_boxes[None, :, :]).sum(axis=-1)
    g = T.value_of(giou(boxes[:, None, :], gt_boxes[None, :, :]))
    return cfg.lambda_cls * cls_cost + cfg.lambda_l1 * l1 + cfg.lambda_giou * (1.0 - g)


# ---------------------------------------------------------------------------
# losses


def focal_loss(logits, targets, alpha=0.25, gamma=2.0):
    """Summed binary focal loss; targets are a {0,1} array shaped like logits."""
    targets = np.asarray(targets, dtype=np.float64)
    log_p = T.log_sigmoid(logits)
    log_q = T.log_sigmoid(T.scale(logits, -1.0))
    pos = T.mul(T.exp(T.scale(log_q, gamma)), log_p)   # (1-p)^g log p
    neg = T.mul(T.exp(T.scale(log_p, gamma)), log_q)   # p^g log(1-p)
    weighted = T.add(T.mul(pos, alpha * targets), T.mul(neg, (1.0 - alpha) * (1.0 - targets)))
    return T.scale(T.sum_(weighted), -1.0)


def detection_loss(logits, boxes, gt_classes, gt_boxes, cfg, match=None):
    """(L_box, L_cls) for one image.

    ``logits`` (Q, C) and ``boxes`` (Q, 4) may be Vars on a tape.  Matching is
    computed on detached values unless ``match`` is supplied.
    """
    logits, boxes = T.as_var(logits), T.as_var(boxes)
    gt_classes = np.asarray(gt_classes, dtype=np.intp).reshape(-1)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    ng = len(gt_classes)
    if match is None:
        conf = T.value_of(T.sigmoid(logits))
        match = hungarian_match(matching_cost(conf, boxes, gt_classes, gt_boxes, cfg)) if ng else \
            np.zeros(0, dtype=np.intp)
    targets = np.zeros(logits.shape)
    targets[match, gt_classes] = 1.0
    l_cls = T.scale(focal_loss(logits, targets, cfg.focal_alpha, cfg.focal_gamma), 1.0 / max(ng, 1))
    if ng == 0:
        return T.as_var(np.float64(0.0)), l_cls
    matched = T.take(boxes, match, axis=0)
    l1 = T.sum_(T.absolute(T.sub(matched, gt_boxes)), axis=-1)
    g = giou(matched, gt_boxes)
    per_gt = T.add(T.scale(l1, cfg.lambda_l1), T.scale(T.sub(1.0, g), cfg.lambda_giou))
    return T.mean(per_gt), l_cls


def total_loss(l_box, l_cls, l_grad):
    return T.add(T.add(l_box, l_cls), l_grad)
